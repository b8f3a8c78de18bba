"""Domain types and the certified plan-execution engine.

An episode walks a predicate plan with four pluggable operators: propose
builds the plan, realize picks an action for the next predicate, validate
checks the environment's observation against the remaining plan and returns
how many consecutive predicates it certifies, and replan replaces the
uncertified tail once the per-target attempt budget runs out.  Every attempt,
certified transition, and replan is recorded in an immutable trajectory
artifact.
"""

from __future__ import annotations

import time
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Any, Protocol, Sequence, TYPE_CHECKING

if TYPE_CHECKING:  # avoids a runtime cycle; operators.py imports core types
    from .operators import OperatorSet


class EngineError(Exception):
    """Base class for engine-level failures."""


class PlanLengthExceeded(EngineError):
    """Propose failed to reach the goal within the plan length cap."""


class CascadeOverrun(EngineError):
    """A verdict certified more predicates than the plan has left."""


class InvalidPlanError(EngineError):
    """A plan or replan tail violates the plan invariants."""


class OperatorFailure(EngineError):
    """Wraps an operator exception with episode context.

    The partial trajectory artifact built up to the failure point is attached
    as ``artifact`` so callers can still persist it.
    """

    def __init__(self, message, cursor, attempts, artifact=None):
        super().__init__(message)
        self.cursor = cursor
        self.attempts = tuple(attempts)
        self.artifact = artifact


@dataclass(frozen=True)
class Predicate:
    """A checkable natural-language condition; the unit of plan state."""

    id: str
    text: str
    kind: str = ""
    is_goal: bool = False


@dataclass(frozen=True)
class PlanTail:
    """An ordered predicate sequence terminating at the goal.

    The initial plan is the tail from the start state; a replan tail replaces
    everything after the certified prefix.  ``replan_index`` links a replan
    tail to the replan event that produced it.
    """

    predicates: tuple[Predicate, ...]
    provenance: str = "initial"
    replan_index: int | None = None

    def __post_init__(self):
        if not self.predicates:
            raise InvalidPlanError("plan tail is empty")
        if not self.predicates[-1].is_goal:
            raise InvalidPlanError("plan tail does not terminate at the goal")
        if sum(1 for p in self.predicates if p.is_goal) != 1:
            raise InvalidPlanError("plan tail must contain exactly one goal predicate")
        if self.provenance not in ("initial", "replan"):
            raise InvalidPlanError(f"unknown provenance {self.provenance!r}")

    def __len__(self):
        return len(self.predicates)


@dataclass(frozen=True)
class Action:
    """An adapter-defined action with a human-readable rendering."""

    payload: Any
    rendered: str

    def __post_init__(self):
        if not self.rendered:
            raise ValueError("action rendering must be non-empty")


@dataclass(frozen=True)
class Observation:
    """A raw environment output; only validate consumes these."""

    payload: Any
    rendered: str = ""


@dataclass(frozen=True)
class ValidationVerdict:
    """Outcome of one validation: how many consecutive head predicates hold."""

    k: int
    reason: str = ""

    def __post_init__(self):
        if self.k < 0:
            raise ValueError("cascade count must be non-negative")


@dataclass(frozen=True)
class AttemptRecord:
    """One realize/validate attempt; history is append-only."""

    target_predicate_id: str
    action: Action
    verdict: ValidationVerdict
    reason: str
    step_index: int


@dataclass(frozen=True)
class CertifiedTransition:
    """A certified cursor advance produced by one successful validation."""

    from_cursor: int
    action: Action
    to_cursor: int
    cascade_depth: int
    step_index: int

    def __post_init__(self):
        if self.cascade_depth < 1:
            raise ValueError("certified transitions advance by at least one")
        if self.to_cursor - self.from_cursor != self.cascade_depth:
            raise ValueError("cursor delta must equal the cascade depth")


@dataclass(frozen=True)
class ReplanEvent:
    """A budget exhaustion that replaced the plan tail.

    ``step_index`` is the step of the attempt that exhausted the budget,
    which orders the event against transitions during replay.
    """

    cursor: int
    attempts_exhausted: int
    step_index: int = 0


@dataclass(frozen=True)
class Timing:
    """Wall-clock data; recorded but excluded from artifact equality."""

    started_at: float
    elapsed_s: float


@dataclass(frozen=True)
class EngineConfig:
    """Episode budgets.

    ``attempt_budget`` is the maximum consecutive failed attempts at one
    target before a replan fires; ``max_replans`` is per stuck cursor
    position; ``global_step_cap`` bounds total realize/validate cycles;
    ``plan_length_cap`` bounds the propose chain.
    """

    attempt_budget: int
    max_replans: int
    global_step_cap: int
    plan_length_cap: int = 50

    def __post_init__(self):
        if self.attempt_budget < 1:
            raise ValueError("attempt_budget must be positive")
        if self.max_replans < 0:
            raise ValueError("max_replans must be non-negative")
        if self.global_step_cap < 1:
            raise ValueError("global_step_cap must be positive")
        if self.plan_length_cap < 1:
            raise ValueError("plan_length_cap must be at least 1")


@dataclass(frozen=True)
class TrajectoryArtifact:
    """The complete record of one episode; immutable once returned."""

    task_id: str
    initial_state_snapshot: Any
    plans: tuple[PlanTail, ...]
    transitions: tuple[CertifiedTransition, ...]
    attempts: tuple[AttemptRecord, ...]
    replan_events: tuple[ReplanEvent, ...]
    goal_certified: bool
    final_answer: Any
    config: EngineConfig
    termination: str
    forced_finalization: bool = False
    timing: Timing = Timing(0.0, 0.0)

    def final_cursor(self) -> int:
        return self.transitions[-1].to_cursor if self.transitions else 0

    def final_plan_length(self) -> int:
        """Length of the working plan after the last replan."""
        length = len(self.plans[0])
        for event, tail in zip(self.replan_events, self.plans[1:]):
            length = event.cursor + len(tail)
        return length

    def certified_predicates(self) -> tuple[Predicate, ...]:
        """The certified prefix, reconstructed by replaying plans and events."""
        working = list(self.plans[0].predicates)
        events = list(zip(self.replan_events, self.plans[1:]))
        certified: list[Predicate] = []
        ei = 0
        for tr in self.transitions:
            while ei < len(events) and events[ei][0].step_index < tr.step_index:
                event, tail = events[ei]
                working = working[:event.cursor] + list(tail.predicates)
                ei += 1
            certified.extend(working[tr.from_cursor:tr.to_cursor])
        return tuple(certified)


def validate_plan(predicates: Sequence[Predicate]) -> None:
    """Check plan invariants: unique ids, exactly one goal, goal last."""
    if not predicates:
        raise InvalidPlanError("plan is empty")
    ids = [p.id for p in predicates]
    if len(set(ids)) != len(ids):
        raise InvalidPlanError("predicate ids must be unique within a plan")
    goals = [p for p in predicates if p.is_goal]
    if len(goals) != 1 or not predicates[-1].is_goal:
        raise InvalidPlanError("plan must end at its single goal predicate")


class Environment(Protocol):
    """Minimal contract the engine needs from an environment adapter."""

    def step(self, action: Action) -> Observation: ...

    def snapshot(self) -> Any: ...


@dataclass(frozen=True)
class Task:
    task_id: str
    goal: Predicate
    params: dict = field(default_factory=dict)


@dataclass(frozen=True)
class EpisodeView:
    """Read-only trajectory view handed to the replan operator."""

    cursor: int
    plan: tuple[Predicate, ...]
    transitions: tuple[CertifiedTransition, ...]
    attempts: tuple[AttemptRecord, ...]
    replan_events: tuple[ReplanEvent, ...]

    def remaining(self) -> tuple[Predicate, ...]:
        return self.plan[self.cursor:]


def build_plan(initial_state, goal: Predicate, propose, plan_length_cap: int = 50) -> PlanTail:
    """Chain propose from the initial state until it emits the goal.

    Each returned predicate is fed back as the state for the next call.
    Raises PlanLengthExceeded if the goal is not reached within the cap.
    """
    predicates: list[Predicate] = []
    state = initial_state
    for _ in range(plan_length_cap):
        pred = propose(state, goal)
        predicates.append(pred)
        if pred.is_goal:
            validate_plan(predicates)
            return PlanTail(tuple(predicates))
        state = pred
    raise PlanLengthExceeded(
        f"propose did not reach the goal within {plan_length_cap} predicates"
    )


def advance(cursor: int, verdict: ValidationVerdict, plan: Sequence[Predicate]) -> int:
    """Advance the cursor by the verdict's cascade count.

    A zero verdict leaves the cursor fixed; certifying past the end of the
    plan raises CascadeOverrun.
    """
    remaining = len(plan) - cursor
    if verdict.k > remaining:
        raise CascadeOverrun(
            f"verdict certifies {verdict.k} predicates but only {remaining} remain"
        )
    return cursor + verdict.k


def _jsonable_snapshot(snapshot) -> Any:
    to_jsonable = getattr(snapshot, "to_jsonable", None)
    if callable(to_jsonable):
        return to_jsonable()
    return snapshot


def run_episode(config: EngineConfig, ops: "OperatorSet", env: Environment, task: Task) -> TrajectoryArtifact:
    """Execute one episode and return its trajectory artifact.

    The loop realizes an action for the predicate at the cursor, steps the
    environment, and validates the observation against the remaining plan.
    A verdict of k >= 1 certifies k predicates in one transition and resets
    the retry counter; k = 0 counts against the attempt budget, and budget
    exhaustion triggers a replan of the tail (bounded per cursor position).
    The episode ends when the goal is certified, the step cap fires, or the
    replan budget is exhausted.  Operator exceptions are re-raised as
    OperatorFailure with the partial artifact attached.
    """
    started = time.time()
    initial_snapshot = _jsonable_snapshot(env.snapshot())

    attempts: list[AttemptRecord] = []
    transitions: list[CertifiedTransition] = []
    replan_events: list[ReplanEvent] = []
    plans: list[PlanTail] = []
    cursor = 0
    steps = 0

    def partial(termination: str, goal_certified: bool = False) -> TrajectoryArtifact:
        final_answer = None
        answer_fn = getattr(env, "final_answer", None)
        if callable(answer_fn):
            final_answer = answer_fn()
        return TrajectoryArtifact(
            task_id=task.task_id,
            initial_state_snapshot=initial_snapshot,
            plans=tuple(plans) if plans else (PlanTail((task.goal,)),),
            transitions=tuple(transitions),
            attempts=tuple(attempts),
            replan_events=tuple(replan_events),
            goal_certified=goal_certified,
            final_answer=final_answer,
            config=config,
            termination=termination,
            forced_finalization=bool(getattr(env, "forced_finalization", False)),
            timing=Timing(started_at=started, elapsed_s=time.time() - started),
        )

    try:
        initial = build_plan(env.snapshot(), task.goal, ops.propose, config.plan_length_cap)
    except Exception as exc:
        raise OperatorFailure(
            f"plan construction failed: {exc}", cursor=0, attempts=(), artifact=partial("operator_failure")
        ) from exc

    plans.append(initial)
    working: list[Predicate] = list(initial.predicates)
    retry = 0
    replans_at: dict[int, int] = defaultdict(int)
    total_replans = 0
    replan_ceiling = config.max_replans * len(working)
    termination = None

    try:
        while cursor < len(working):
            if steps >= config.global_step_cap:
                termination = "step_cap"
                break
            target = working[cursor]
            state = env.snapshot()
            action = ops.realize(state, target)
            observation = env.step(action)
            verdict = ops.validate(tuple(working[cursor:]), observation)
            attempts.append(
                AttemptRecord(
                    target_predicate_id=target.id,
                    action=action,
                    verdict=verdict,
                    reason=verdict.reason,
                    step_index=steps,
                )
            )
            steps += 1
            if verdict.k >= 1:
                new_cursor = advance(cursor, verdict, working)
                transitions.append(
                    CertifiedTransition(
                        from_cursor=cursor,
                        action=action,
                        to_cursor=new_cursor,
                        cascade_depth=verdict.k,
                        step_index=steps - 1,
                    )
                )
                cursor = new_cursor
                retry = 0
                continue
            retry += 1
            if retry < config.attempt_budget:
                continue
            if replans_at[cursor] >= config.max_replans or total_replans >= replan_ceiling:
                termination = "replans_exhausted"
                break
            view = EpisodeView(
                cursor=cursor,
                plan=tuple(working),
                transitions=tuple(transitions),
                attempts=tuple(attempts),
                replan_events=tuple(replan_events),
            )
            new_tail = ops.replan(state, task.goal, view)
            predicates = tuple(
                new_tail.predicates if isinstance(new_tail, PlanTail) else new_tail
            )
            candidate = working[:cursor] + list(predicates)
            validate_plan(candidate)
            replan_events.append(
                ReplanEvent(cursor=cursor, attempts_exhausted=retry, step_index=steps - 1)
            )
            plans.append(
                PlanTail(predicates, provenance="replan", replan_index=len(replan_events) - 1)
            )
            working = candidate
            replans_at[cursor] += 1
            total_replans += 1
            retry = 0
    except Exception as exc:
        raise OperatorFailure(
            f"operator failed at cursor {cursor}: {exc}",
            cursor=cursor,
            attempts=attempts,
            artifact=partial("operator_failure"),
        ) from exc

    if termination is None:
        termination = "goal_certified"
    goal_certified = cursor >= len(working) and working[-1].is_goal
    return partial(termination, goal_certified=goal_certified)
