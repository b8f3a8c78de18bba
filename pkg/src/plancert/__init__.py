"""Certified predicate-plan execution: a runtime that turns language-agent
episodes into verifiable trajectories.

The core engine drives propose/realize/validate/replan operators over a
predicate plan; the bundled environments (itinerary constraints, scripted
textworld, multi-hop retrieval) exercise it deterministically, and the
analytics module computes anatomy views and counterfactual replay estimates
over the persisted artifacts.
"""

from .core import (
    Action,
    AttemptRecord,
    CascadeOverrun,
    CertifiedTransition,
    EngineConfig,
    EngineError,
    EpisodeView,
    InvalidPlanError,
    Observation,
    OperatorFailure,
    PlanLengthExceeded,
    PlanTail,
    Predicate,
    ReplanEvent,
    Task,
    TrajectoryArtifact,
    ValidationVerdict,
    advance,
    build_plan,
    run_episode,
)
from .operators import (
    OperatorSet,
    ParseFailure,
    ScriptedEnvironment,
    ScriptedScript,
    ValidationShortcutConfig,
    apply_shortcuts,
    cap_cascade,
    scripted_operator_set,
    tolerant_parse,
)

__all__ = [
    "Action",
    "AttemptRecord",
    "CascadeOverrun",
    "CertifiedTransition",
    "EngineConfig",
    "EngineError",
    "EpisodeView",
    "InvalidPlanError",
    "Observation",
    "OperatorFailure",
    "OperatorSet",
    "ParseFailure",
    "PlanLengthExceeded",
    "PlanTail",
    "Predicate",
    "ReplanEvent",
    "ScriptedEnvironment",
    "ScriptedScript",
    "Task",
    "TrajectoryArtifact",
    "ValidationShortcutConfig",
    "ValidationVerdict",
    "advance",
    "apply_shortcuts",
    "build_plan",
    "cap_cascade",
    "run_episode",
    "scripted_operator_set",
    "tolerant_parse",
]

__version__ = "0.1.0"
