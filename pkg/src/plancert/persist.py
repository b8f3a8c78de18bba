"""Trajectory artifact persistence: one JSON object per line, versioned.

Encoding is canonical (sorted keys, compact separators) so that
write -> read -> write is byte-identical; ``canonical_bytes`` additionally
normalizes wall-clock timing for replay-determinism comparisons.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Iterable, Sequence

from .core import (
    Action,
    AttemptRecord,
    CertifiedTransition,
    EngineConfig,
    PlanTail,
    Predicate,
    ReplanEvent,
    Timing,
    TrajectoryArtifact,
    ValidationVerdict,
)

ARTIFACT_FORMAT_VERSION = 1


class PersistError(Exception):
    pass


class UnsupportedFormat(PersistError):
    pass


def _predicate_to_jsonable(pred: Predicate) -> dict:
    return {"id": pred.id, "text": pred.text, "kind": pred.kind, "is_goal": pred.is_goal}


def _predicate_from_jsonable(record: dict) -> Predicate:
    return Predicate(id=record["id"], text=record["text"],
                     kind=record["kind"], is_goal=record["is_goal"])


def _action_to_jsonable(action: Action) -> dict:
    return {"payload": action.payload, "rendered": action.rendered}


def _action_from_jsonable(record: dict) -> Action:
    return Action(payload=record["payload"], rendered=record["rendered"])


def artifact_to_jsonable(artifact: TrajectoryArtifact, include_timing: bool = True) -> dict:
    record = {
        "format_version": ARTIFACT_FORMAT_VERSION,
        "task_id": artifact.task_id,
        "config": {
            "attempt_budget": artifact.config.attempt_budget,
            "max_replans": artifact.config.max_replans,
            "global_step_cap": artifact.config.global_step_cap,
            "plan_length_cap": artifact.config.plan_length_cap,
        },
        "initial_state_snapshot": artifact.initial_state_snapshot,
        "plans": [
            {
                "provenance": plan.provenance,
                "replan_index": plan.replan_index,
                "predicates": [_predicate_to_jsonable(p) for p in plan.predicates],
            }
            for plan in artifact.plans
        ],
        "transitions": [
            {
                "from_cursor": t.from_cursor,
                "action": _action_to_jsonable(t.action),
                "to_cursor": t.to_cursor,
                "cascade_depth": t.cascade_depth,
                "step_index": t.step_index,
            }
            for t in artifact.transitions
        ],
        "attempts": [
            {
                "target_predicate_id": a.target_predicate_id,
                "action": _action_to_jsonable(a.action),
                "verdict": {"k": a.verdict.k, "reason": a.verdict.reason},
                "reason": a.reason,
                "step_index": a.step_index,
            }
            for a in artifact.attempts
        ],
        "replan_events": [
            {"cursor": e.cursor, "attempts_exhausted": e.attempts_exhausted,
             "step_index": e.step_index}
            for e in artifact.replan_events
        ],
        "goal_certified": artifact.goal_certified,
        "final_answer": artifact.final_answer,
        "termination": artifact.termination,
        "forced_finalization": artifact.forced_finalization,
    }
    if include_timing:
        record["timing"] = {"started_at": artifact.timing.started_at,
                            "elapsed_s": artifact.timing.elapsed_s}
    return record


def artifact_from_jsonable(record: dict) -> TrajectoryArtifact:
    version = record.get("format_version")
    if version != ARTIFACT_FORMAT_VERSION:
        raise UnsupportedFormat(f"unsupported artifact format version {version!r}")
    config = record["config"]
    timing = record.get("timing", {})
    return TrajectoryArtifact(
        task_id=record["task_id"],
        initial_state_snapshot=record["initial_state_snapshot"],
        plans=tuple(
            PlanTail(
                predicates=tuple(_predicate_from_jsonable(p) for p in plan["predicates"]),
                provenance=plan["provenance"],
                replan_index=plan["replan_index"],
            )
            for plan in record["plans"]
        ),
        transitions=tuple(
            CertifiedTransition(
                from_cursor=t["from_cursor"],
                action=_action_from_jsonable(t["action"]),
                to_cursor=t["to_cursor"],
                cascade_depth=t["cascade_depth"],
                step_index=t["step_index"],
            )
            for t in record["transitions"]
        ),
        attempts=tuple(
            AttemptRecord(
                target_predicate_id=a["target_predicate_id"],
                action=_action_from_jsonable(a["action"]),
                verdict=ValidationVerdict(k=a["verdict"]["k"], reason=a["verdict"]["reason"]),
                reason=a["reason"],
                step_index=a["step_index"],
            )
            for a in record["attempts"]
        ),
        replan_events=tuple(
            ReplanEvent(cursor=e["cursor"], attempts_exhausted=e["attempts_exhausted"],
                        step_index=e["step_index"])
            for e in record["replan_events"]
        ),
        goal_certified=record["goal_certified"],
        final_answer=record["final_answer"],
        config=EngineConfig(
            attempt_budget=config["attempt_budget"],
            max_replans=config["max_replans"],
            global_step_cap=config["global_step_cap"],
            plan_length_cap=config["plan_length_cap"],
        ),
        termination=record["termination"],
        forced_finalization=record["forced_finalization"],
        timing=Timing(started_at=timing.get("started_at", 0.0),
                      elapsed_s=timing.get("elapsed_s", 0.0)),
    )


def dumps_artifact(artifact: TrajectoryArtifact) -> str:
    """One canonical JSON line."""
    return json.dumps(artifact_to_jsonable(artifact), sort_keys=True,
                      separators=(",", ":"))


def canonical_bytes(artifact: TrajectoryArtifact) -> bytes:
    """Canonical encoding with wall-clock timing excluded; equal bytes mean
    equal artifacts for replay-determinism purposes."""
    record = artifact_to_jsonable(artifact, include_timing=False)
    return json.dumps(record, sort_keys=True, separators=(",", ":")).encode("utf-8")


def write_artifacts(path: str | Path, artifacts: Iterable[TrajectoryArtifact]) -> int:
    """Write one artifact per line; returns the number written."""
    count = 0
    with open(path, "w", encoding="utf-8") as handle:
        for artifact in artifacts:
            handle.write(dumps_artifact(artifact))
            handle.write("\n")
            count += 1
    return count


def read_artifacts(path: str | Path) -> list[TrajectoryArtifact]:
    artifacts = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if not line.strip():
            continue
        artifacts.append(artifact_from_jsonable(json.loads(line)))
    return artifacts
