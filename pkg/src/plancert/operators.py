"""Operator interfaces, the table-driven scripted backend, validation
shortcuts, and tolerant parsing of structured model output.

Operator purity is enforced by signature: propose and realize see only
states and predicates, validate is the sole consumer of observations, and
replan is the only operator handed the trajectory.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from typing import Any, Callable, Mapping, Sequence

from .core import (
    Action,
    Observation,
    Predicate,
    ValidationVerdict,
)

ProposeFn = Callable[[Any, Predicate], Predicate]
RealizeFn = Callable[[Any, Predicate], Action]
ValidateFn = Callable[[Sequence[Predicate], Observation], ValidationVerdict]
ReplanFn = Callable[[Any, Predicate, Any], Sequence[Predicate]]


@dataclass(frozen=True)
class OperatorSet:
    """The four pluggable operators bound to one backend."""

    propose: ProposeFn
    realize: RealizeFn
    validate: ValidateFn
    replan: ReplanFn


# ---------------------------------------------------------------------------
# Validation shortcuts


@dataclass(frozen=True)
class ValidationShortcutConfig:
    """Hard shortcuts applied before any backend validator runs."""

    completion_certifies_all: bool = True
    rejected_action_fails: bool = True
    goal_requires_completion: bool = True


def apply_shortcuts(
    config: ValidationShortcutConfig,
    env_signal: Mapping[str, Any],
    plan_tail: Sequence[Predicate],
) -> ValidationVerdict | None:
    """Resolve a verdict from environment signals alone, if possible.

    Order: task completion certifies every remaining predicate; a rejected
    action fails with k = 0; the goal predicate at the head of the plan fails
    with k = 0 unless the task is complete.  Returns None when no shortcut
    applies and the backend validator should decide.
    """
    done = bool(env_signal.get("done"))
    rejected = bool(env_signal.get("rejected"))
    if done and config.completion_certifies_all:
        return ValidationVerdict(k=len(plan_tail), reason="task complete; all remaining certified")
    if rejected and config.rejected_action_fails:
        return ValidationVerdict(k=0, reason="action rejected by the environment")
    if plan_tail and plan_tail[0].is_goal and not done and config.goal_requires_completion:
        return ValidationVerdict(k=0, reason="goal requires task completion")
    return None


def cap_cascade(k: int, plan_tail: Sequence[Predicate]) -> int:
    """Cap a backend cascade so it cannot advance into the goal predicate."""
    non_goal = 0
    for pred in plan_tail:
        if pred.is_goal:
            break
        non_goal += 1
    return min(k, non_goal)


# ---------------------------------------------------------------------------
# Scripted backend


def default_state_key(state) -> str:
    if isinstance(state, Predicate):
        return state.id
    return str(state)


def default_observation_key(observation: Observation) -> str:
    return observation.rendered


@dataclass(frozen=True)
class ScriptedScript:
    """Lookup tables driving fully deterministic operators.

    Keys: propose by (state key, goal id), realize by (state key, target id),
    validate by (head target id, observation key), replan by state key.
    Lookups must be total over the scenario's reachable keys.
    """

    propose_table: Mapping[tuple[str, str], Predicate] = field(default_factory=dict)
    realize_table: Mapping[tuple[str, str], Action] = field(default_factory=dict)
    validate_table: Mapping[tuple[str, str], int] = field(default_factory=dict)
    replan_table: Mapping[str, tuple[Predicate, ...]] = field(default_factory=dict)
    state_key: Callable[[Any], str] = default_state_key
    observation_key: Callable[[Observation], str] = default_observation_key


def scripted_operator_set(script: ScriptedScript) -> OperatorSet:
    """Build an operator set that is a pure function of the script tables."""

    def propose(state, goal):
        return script.propose_table[(script.state_key(state), goal.id)]

    def realize(state, target):
        return script.realize_table[(script.state_key(state), target.id)]

    def validate(plan_tail, observation):
        key = (plan_tail[0].id, script.observation_key(observation))
        k = script.validate_table[key]
        return ValidationVerdict(k=k, reason=f"scripted verdict for {key}")

    def replan(state, goal, trajectory):
        return script.replan_table[script.state_key(state)]

    return OperatorSet(propose=propose, realize=realize, validate=validate, replan=replan)


class ScriptedEnvironment:
    """A deterministic environment driven by (state, action) tables.

    ``observations`` maps (state key, rendered action) to the observation;
    ``moves`` maps the same key to the next state (default: stay put).
    """

    def __init__(self, observations, moves=None, start="s0"):
        self.observations = dict(observations)
        self.moves = dict(moves or {})
        self.state = start

    def step(self, action: Action) -> Observation:
        key = (self.state, action.rendered)
        observation = self.observations[key]
        self.state = self.moves.get(key, self.state)
        return observation

    def snapshot(self) -> str:
        return self.state


# ---------------------------------------------------------------------------
# Tolerant structured-output parsing


class ParseFailure(Exception):
    """No extraction path produced the required field."""

    def __init__(self, fieldname: str, raw_text: str = ""):
        super().__init__(f"could not extract field {fieldname!r}")
        self.field = fieldname
        self.raw_text = raw_text


_FENCE_RE = re.compile(r"```[a-zA-Z0-9_-]*\n?(.*?)```", re.DOTALL)


def strip_code_fences(text: str) -> str:
    """Return fenced content when the text is wrapped in code fences."""
    match = _FENCE_RE.search(text)
    if match:
        return match.group(1).strip()
    return text.strip()


def _coerce(value, expected):
    if expected is bool:
        if isinstance(value, bool):
            return value
        if isinstance(value, str):
            lowered = value.strip().lower()
            if lowered in ("true", "yes", "1"):
                return True
            if lowered in ("false", "no", "0"):
                return False
        raise ValueError(f"not a boolean: {value!r}")
    if expected is int:
        if isinstance(value, bool):
            raise ValueError("boolean is not an integer")
        return int(value)
    if expected is float:
        return float(value)
    if expected is str:
        return str(value)
    if expected is list:
        if isinstance(value, list):
            return value
        raise ValueError(f"not a list: {value!r}")
    raise ValueError(f"unsupported field type: {expected!r}")


def _candidate_objects(raw_text: str):
    yield raw_text
    stripped = strip_code_fences(raw_text)
    if stripped != raw_text:
        yield stripped
    # any {...} span, longest first
    spans = []
    for start in [m.start() for m in re.finditer(r"\{", stripped)]:
        for end in [m.start() for m in re.finditer(r"\}", stripped)]:
            if end > start:
                spans.append(stripped[start:end + 1])
    spans.sort(key=len, reverse=True)
    yield from spans[:32]


_PATTERNS = {
    int: r"(-?\d+)",
    float: r"(-?\d+(?:\.\d+)?)",
    bool: r"(true|false|yes|no)",
}


def _scan_field(raw_text: str, name: str, expected):
    """Labeled-field pattern scan: the first value following the field name."""
    if expected in _PATTERNS:
        pattern = rf"\b{re.escape(name)}\b[^-\d]{{0,16}}?{_PATTERNS[expected]}"
        match = re.search(pattern, raw_text, re.IGNORECASE)
        if match:
            return _coerce(match.group(1), expected)
        return None
    if expected is str:
        quoted = re.search(rf"\b{re.escape(name)}\b\s*[:=]\s*\"([^\"]*)\"", raw_text)
        if quoted:
            return quoted.group(1)
        bare = re.search(rf"\b{re.escape(name)}\b\s*[:=]\s*([^\n,}}]+)", raw_text)
        if bare:
            return bare.group(1).strip().strip("'\"")
        return None
    return None


def tolerant_parse(raw_text: str, expected_fields: Mapping[str, type]) -> dict:
    """Extract a structured record from arbitrary model output.

    Tries strict JSON parsing, then fenced-block and brace-span parsing, then
    a per-field labeled pattern scan; the first path that yields a field
    wins.  Raises ParseFailure naming the first field no path could recover.
    """
    record: dict[str, Any] = {}
    for candidate in _candidate_objects(raw_text):
        try:
            parsed = json.loads(candidate)
        except (json.JSONDecodeError, ValueError):
            continue
        if not isinstance(parsed, dict):
            continue
        for name, expected in expected_fields.items():
            if name in record or name not in parsed:
                continue
            try:
                record[name] = _coerce(parsed[name], expected)
            except (TypeError, ValueError):
                continue
        if len(record) == len(expected_fields):
            return record
    for name, expected in expected_fields.items():
        if name in record:
            continue
        value = _scan_field(raw_text, name, expected)
        if value is None:
            raise ParseFailure(name, raw_text)
        record[name] = value
    return record
