"""Shortcuts, scripted backend purity, and tolerant output parsing."""

from __future__ import annotations

import pytest
from hypothesis import given, strategies as st

from plancert.core import Action, Observation, Predicate, ValidationVerdict
from plancert.operators import (
    ParseFailure,
    ScriptedScript,
    ValidationShortcutConfig,
    apply_shortcuts,
    cap_cascade,
    scripted_operator_set,
    strip_code_fences,
    tolerant_parse,
)

from _scenarios import make_plan


# ---------------------------------------------------------------------------
# shortcuts


def test_completion_certifies_all_remaining():
    tail = make_plan(5)
    verdict = apply_shortcuts(ValidationShortcutConfig(), {"done": True}, tail)
    assert verdict is not None
    assert verdict.k == 5


def test_rejection_fails_with_zero():
    tail = make_plan(5)
    verdict = apply_shortcuts(ValidationShortcutConfig(), {"rejected": True}, tail)
    assert verdict is not None
    assert verdict.k == 0


def test_non_goal_head_defers_to_backend():
    tail = make_plan(5)
    assert apply_shortcuts(ValidationShortcutConfig(), {"done": False}, tail) is None


def test_goal_at_head_requires_completion():
    goal_only = (Predicate(id="g", text="goal", is_goal=True),)
    verdict = apply_shortcuts(ValidationShortcutConfig(), {"done": False}, goal_only)
    assert verdict is not None
    assert verdict.k == 0


def test_shortcut_flags_are_independent():
    tail = make_plan(3)
    config = ValidationShortcutConfig(completion_certifies_all=False)
    assert apply_shortcuts(config, {"done": True}, tail) is None
    config = ValidationShortcutConfig(rejected_action_fails=False)
    assert apply_shortcuts(config, {"rejected": True}, tail) is None


def test_cascade_cap_stops_before_goal():
    tail = make_plan(4)  # three ordinary predicates + goal
    assert cap_cascade(4, tail) == 3
    assert cap_cascade(2, tail) == 2
    assert cap_cascade(1, (tail[-1],)) == 0


# ---------------------------------------------------------------------------
# scripted backend


def test_scripted_operators_are_table_pure():
    plan = make_plan(2)
    goal = plan[-1]
    action_obs = Observation(payload=None, rendered="ok")
    script = ScriptedScript(
        propose_table={("s0", goal.id): plan[0], (plan[0].id, goal.id): goal},
        realize_table={("s0", plan[0].id): Action(payload=None, rendered="a1")},
        validate_table={(plan[0].id, "ok"): 1},
        replan_table={"s0": plan},
    )
    ops = scripted_operator_set(script)
    assert ops.propose("s0", goal) is plan[0]
    assert ops.propose("s0", goal) is ops.propose("s0", goal)
    assert ops.realize("s0", plan[0]).rendered == "a1"
    assert ops.validate(plan, action_obs).k == 1
    assert ops.replan("s0", goal, None) == plan


def test_scripted_lookup_misses_raise():
    ops = scripted_operator_set(ScriptedScript())
    with pytest.raises(KeyError):
        ops.propose("s0", Predicate(id="g", text="g", is_goal=True))


def test_interface_purity_signatures():
    """Propose and realize receive states and predicates, never observations."""
    seen = []

    def spy_propose(state, goal):
        seen.append(("propose", state, goal))
        return goal

    def spy_realize(state, target):
        seen.append(("realize", state, target))
        return Action(payload=None, rendered="a")

    from plancert.core import EngineConfig, Task, run_episode
    from plancert.operators import OperatorSet, ScriptedEnvironment

    goal = Predicate(id="g", text="goal", is_goal=True)
    ops = OperatorSet(
        propose=spy_propose,
        realize=spy_realize,
        validate=lambda tail, obs: ValidationVerdict(k=1),
        replan=lambda state, g, view: view.remaining(),
    )
    env = ScriptedEnvironment({("s0", "a"): Observation(payload="raw", rendered="raw")})
    run_episode(EngineConfig(attempt_budget=1, max_replans=0, global_step_cap=5),
                ops, env, Task(task_id="t", goal=goal))
    for name, state, pred in seen:
        assert not isinstance(state, Observation)
        assert isinstance(pred, Predicate)


# ---------------------------------------------------------------------------
# tolerant parsing


def test_fenced_strict_parse():
    raw = '```json\n{"k": 2, "reason": "both satisfied"}\n```'
    record = tolerant_parse(raw, {"k": int, "reason": str})
    assert record == {"k": 2, "reason": "both satisfied"}


def test_labeled_field_fallback_finds_first_integer():
    record = tolerant_parse("I think k = 1 because the pot is held", {"k": int})
    assert record == {"k": 1}


def test_parse_failure_names_the_field():
    with pytest.raises(ParseFailure) as info:
        tolerant_parse("no structured content here", {"k": int})
    assert info.value.field == "k"


def test_partial_json_plus_scan():
    raw = 'prefix {"reason": "fine"} and also k: 3 somewhere'
    record = tolerant_parse(raw, {"k": int, "reason": str})
    assert record == {"k": 3, "reason": "fine"}


def test_strip_code_fences_passthrough():
    assert strip_code_fences("plain text") == "plain text"
    assert strip_code_fences("```python\nx = 1\n```") == "x = 1"


def test_bool_and_float_coercion():
    record = tolerant_parse('{"flag": "yes", "score": "2.5"}', {"flag": bool, "score": float})
    assert record == {"flag": True, "score": 2.5}


def test_string_fallback_from_quoted_field():
    record = tolerant_parse('the reason: "pot is boiling" obviously', {"reason": str})
    assert record["reason"] == "pot is boiling"


@given(st.text(max_size=300))
def test_tolerant_parse_never_crashes(raw):
    try:
        record = tolerant_parse(raw, {"k": int})
        assert isinstance(record["k"], int)
    except ParseFailure as exc:
        assert exc.field == "k"
