"""Pure functions over trajectory artifacts: anatomy views (cascade depth,
replan curve, certified progress, calibration) and replay-based ablation
estimators (action fidelity, certified-prefix ratio, cascade re-counting).

All estimators are deterministic functions of the artifacts; nothing here
re-executes an environment.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

from .core import TrajectoryArtifact

REPLAY_OPTIMISM_CAVEAT = (
    "Replay estimates assume removing a mechanism leaves subsequent actions "
    "and observations unchanged; cascading errors would degrade real scores "
    "further, so these figures are an optimistic bound on the true ablation "
    "effect."
)

MECHANISMS = ("validate", "replan", "cascade")


class AnalyticsError(Exception):
    pass


class NoCertifiedSteps(AnalyticsError):
    pass


class LabelMismatch(AnalyticsError):
    pass


class ScoreMismatch(AnalyticsError):
    pass


class NoArtifacts(AnalyticsError):
    pass


@dataclass(frozen=True)
class Calibration:
    """Goal certification against ground truth.

    Runs that did not certify the goal fall in the forced-finalization class
    (their answer, if any, was produced without certification); the four
    counts partition the run set.
    """

    certified_correct: int
    certified_wrong: int
    forced_correct: int
    forced_wrong: int

    def total(self) -> int:
        return (self.certified_correct + self.certified_wrong
                + self.forced_correct + self.forced_wrong)


@dataclass(frozen=True)
class AnatomyReport:
    run_count: int
    transition_count: int
    cascade_rate: float
    cascade_depth_histogram: tuple[tuple[int, int], ...]
    success_rate_by_replan_count: tuple[tuple[int, float], ...]
    certified_progress_per_run: tuple[float, ...]
    calibration: Calibration | None
    caveat: str = REPLAY_OPTIMISM_CAVEAT


@dataclass(frozen=True)
class PrefixRatio:
    """Certified-prefix ratio with the basis it was computed on.

    ``replan_stall`` reads the first budget exhaustion; ``step_cap_stall``
    is flagged distinctly because the run never exhausted a budget and the
    ratio uses the cursor at termination instead; ``no_stall`` is 1.
    """

    ratio: float
    basis: str


@dataclass(frozen=True)
class CascadeReplay:
    extra_steps: int
    complete: bool
    proportional_score_factor: float


@dataclass(frozen=True)
class AblationEstimate:
    mechanism: str
    original_score: float
    conversion_factor: float
    estimated_score: float


def action_fidelity(artifact: TrajectoryArtifact) -> float:
    """Fraction of certified steps whose first attempt at that cursor
    position succeeded."""
    m = len(artifact.transitions)
    if m == 0:
        raise NoCertifiedSteps(f"artifact {artifact.task_id} has no certified steps")
    first_successes = 0
    tries_here = 0
    for attempt in artifact.attempts:
        tries_here += 1
        if attempt.verdict.k >= 1:
            if tries_here == 1:
                first_successes += 1
            tries_here = 0
    return first_successes / m


def ablate_validate(score: float, fidelity: float) -> float:
    """Estimated score with validation replaced by always-pass."""
    if score < 0:
        raise ValueError("scores are non-negative")
    if not 0.0 <= fidelity <= 1.0:
        raise ValueError("fidelity must be within [0, 1]")
    return score * fidelity


def certified_prefix_ratio(artifact: TrajectoryArtifact) -> PrefixRatio:
    """Cursor at first budget exhaustion over plan length.

    Runs with no replan events that finished normally score 1; runs stopped
    by the step cap without ever exhausting a budget use the cursor at
    termination and are flagged with a distinct basis.
    """
    if artifact.replan_events:
        n = len(artifact.plans[0])
        return PrefixRatio(ratio=artifact.replan_events[0].cursor / n, basis="replan_stall")
    if artifact.termination == "step_cap":
        n = artifact.final_plan_length()
        return PrefixRatio(ratio=artifact.final_cursor() / n, basis="step_cap_stall")
    return PrefixRatio(ratio=1.0, basis="no_stall")


def ablate_replan(score: float, ratio: float) -> float:
    """Estimated score with replanning replaced by terminate-on-exhaustion."""
    if score < 0:
        raise ValueError("scores are non-negative")
    if not 0.0 <= ratio <= 1.0:
        raise ValueError("ratio must be within [0, 1]")
    return score * ratio


def cascade_extra_steps(artifact: TrajectoryArtifact, budget: int) -> CascadeReplay:
    """Re-count steps with every cascade capped at one predicate.

    The extra steps are the sum of (k - 1) over cascaded transitions; when
    recorded steps plus extra steps exceed the budget the run is incomplete
    and scored proportionally.  All-single-step artifacts are unchanged.
    """
    extra = sum(t.cascade_depth - 1 for t in artifact.transitions if t.cascade_depth >= 2)
    recorded = len(artifact.attempts)
    needed = recorded + extra
    if needed > budget:
        return CascadeReplay(extra_steps=extra, complete=False,
                             proportional_score_factor=budget / needed)
    return CascadeReplay(extra_steps=extra, complete=True, proportional_score_factor=1.0)


def ablation_estimates(artifact: TrajectoryArtifact, score: float,
                       budget: int | None = None) -> list[AblationEstimate]:
    """The three replay estimates for one scored artifact."""
    budget = artifact.config.global_step_cap if budget is None else budget
    fidelity = action_fidelity(artifact) if artifact.transitions else 0.0
    ratio = certified_prefix_ratio(artifact).ratio
    cascade = cascade_extra_steps(artifact, budget)
    return [
        AblationEstimate("validate", score, fidelity, ablate_validate(score, fidelity)),
        AblationEstimate("replan", score, ratio, ablate_replan(score, ratio)),
        AblationEstimate("cascade", score, cascade.proportional_score_factor,
                         score * cascade.proportional_score_factor),
    ]


def anatomy(artifacts: Sequence[TrajectoryArtifact],
            ground_truth: Mapping[str, bool] | None = None) -> AnatomyReport:
    """Aggregate anatomy views over a set of artifacts.

    ``ground_truth`` maps task ids to answer correctness; when provided it
    must cover every artifact, drives the calibration counts, and replaces
    goal certification as the success signal in the replan curve.
    """
    if not artifacts:
        raise NoArtifacts("anatomy needs at least one artifact")
    if ground_truth is not None:
        missing = [a.task_id for a in artifacts if a.task_id not in ground_truth]
        if missing:
            raise LabelMismatch(f"no label for task(s): {', '.join(sorted(missing))}")

    transitions = [t for a in artifacts for t in a.transitions]
    cascaded = sum(1 for t in transitions if t.cascade_depth >= 2)
    cascade_rate = cascaded / len(transitions) if transitions else 0.0

    histogram: dict[int, int] = {}
    for t in transitions:
        histogram[t.cascade_depth] = histogram.get(t.cascade_depth, 0) + 1

    def succeeded(artifact: TrajectoryArtifact) -> bool:
        if ground_truth is not None:
            return bool(ground_truth[artifact.task_id])
        return artifact.goal_certified

    by_replans: dict[int, list[bool]] = {}
    for artifact in artifacts:
        by_replans.setdefault(len(artifact.replan_events), []).append(succeeded(artifact))
    replan_curve = tuple(
        (count, sum(flags) / len(flags)) for count, flags in sorted(by_replans.items())
    )

    progress = tuple(
        a.final_cursor() / a.final_plan_length()
        for a in artifacts if not a.goal_certified
    )

    calibration = None
    if ground_truth is not None:
        cc = cw = fc = fw = 0
        for artifact in artifacts:
            correct = bool(ground_truth[artifact.task_id])
            if artifact.goal_certified:
                cc, cw = cc + correct, cw + (not correct)
            else:
                fc, fw = fc + correct, fw + (not correct)
        calibration = Calibration(cc, cw, fc, fw)

    return AnatomyReport(
        run_count=len(artifacts),
        transition_count=len(transitions),
        cascade_rate=cascade_rate,
        cascade_depth_histogram=tuple(sorted(histogram.items())),
        success_rate_by_replan_count=replan_curve,
        certified_progress_per_run=progress,
        calibration=calibration,
    )


# ---------------------------------------------------------------------------
# Report rendering


def report_to_jsonable(report: AnatomyReport) -> dict:
    body = {
        "run_count": report.run_count,
        "transition_count": report.transition_count,
        "cascade_rate": report.cascade_rate,
        "cascade_depth_histogram": {str(d): c for d, c in report.cascade_depth_histogram},
        "success_rate_by_replan_count": {str(n): r for n, r in report.success_rate_by_replan_count},
        "certified_progress_per_run": list(report.certified_progress_per_run),
        "calibration": None,
        "caveat": report.caveat,
    }
    if report.calibration is not None:
        body["calibration"] = {
            "certified_correct": report.calibration.certified_correct,
            "certified_wrong": report.calibration.certified_wrong,
            "forced_correct": report.calibration.forced_correct,
            "forced_wrong": report.calibration.forced_wrong,
        }
    return body


def report_to_text(report: AnatomyReport) -> str:
    lines = [
        "trajectory anatomy",
        "==================",
        f"runs:               {report.run_count}",
        f"transitions:        {report.transition_count}",
        f"cascade rate (k>1): {report.cascade_rate:.3f}",
        "",
        "cascade depth histogram",
    ]
    for depth, count in report.cascade_depth_histogram:
        lines.append(f"  depth {depth:>2}  {count:>6}")
    lines.append("")
    lines.append("success rate by replan count")
    for count, rate in report.success_rate_by_replan_count:
        lines.append(f"  {count:>2} replan(s)  {rate:6.3f}")
    lines.append("")
    if report.certified_progress_per_run:
        mean = sum(report.certified_progress_per_run) / len(report.certified_progress_per_run)
        lines.append(f"certified progress in failed runs (mean of {len(report.certified_progress_per_run)}): {mean:.3f}")
    else:
        lines.append("certified progress in failed runs: no failed runs")
    if report.calibration is not None:
        c = report.calibration
        lines += [
            "",
            "validator calibration",
            f"  goal certified & correct: {c.certified_correct:>4}",
            f"  goal certified & wrong:   {c.certified_wrong:>4}",
            f"  forced final & correct:   {c.forced_correct:>4}",
            f"  forced final & wrong:     {c.forced_wrong:>4}",
        ]
    lines += ["", f"note: {report.caveat}"]
    return "\n".join(lines)


def report_to_csv_rows(report: AnatomyReport) -> list[list]:
    """Plot-ready rows: section, key, value."""
    rows: list[list] = [["section", "key", "value"]]
    rows.append(["summary", "run_count", report.run_count])
    rows.append(["summary", "cascade_rate", report.cascade_rate])
    for depth, count in report.cascade_depth_histogram:
        rows.append(["cascade_depth", depth, count])
    for count, rate in report.success_rate_by_replan_count:
        rows.append(["replan_curve", count, rate])
    for i, progress in enumerate(report.certified_progress_per_run):
        rows.append(["certified_progress", i, progress])
    if report.calibration is not None:
        c = report.calibration
        rows.append(["calibration", "certified_correct", c.certified_correct])
        rows.append(["calibration", "certified_wrong", c.certified_wrong])
        rows.append(["calibration", "forced_correct", c.forced_correct])
        rows.append(["calibration", "forced_wrong", c.forced_wrong])
    return rows
