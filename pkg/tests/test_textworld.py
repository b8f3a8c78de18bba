"""Scripted text environment: grammar, milestones, grounding, shortcuts,
exploration credit, and cascade behavior through the engine."""

from __future__ import annotations

import pytest

from plancert.core import EngineConfig, Observation, Predicate, Task, ValidationVerdict, run_episode
from plancert.operators import ValidationShortcutConfig
from plancert.textworld import (
    REJECTION_TEXT,
    TEXTWORLD_ENGINE_DEFAULTS,
    TextWorldEnvironment,
    TextWorldScenario,
    WorldDef,
    bundled_world,
    exploration_credit,
    grounding_rooms,
    initial_state,
    make_textworld_validator,
    record_invalid_target,
    render_invalid_targets,
    step_world,
    textworld_operator_set,
    world_from_jsonable,
)


def _tiny_world(**overrides) -> WorldDef:
    body = {
        "name": "tiny",
        "rooms": ["hall", "kitchen", "pantry"],
        "start": "hall",
        "adjacency": [["hall", "kitchen"], ["kitchen", "pantry"]],
        "objects": [
            {"name": "pot", "location": "kitchen", "portable": True},
            {"name": "stove", "location": "kitchen"},
        ],
        "milestones": [
            {"id": "m1", "condition": {"type": "visited", "room": "kitchen"}, "delta": 40},
            {"id": "m2", "condition": {"type": "in_inventory", "object": "pot"}, "delta": 30},
            {"id": "m3", "condition": {"type": "activated", "object": "stove"}, "delta": 30},
        ],
        "goal": {"type": "score_at_least", "value": 100},
    }
    body.update(overrides)
    return world_from_jsonable(body)


# ---------------------------------------------------------------------------
# stepping


def test_go_to_adjacent_room_flags_first_visit():
    world = _tiny_world()
    state = initial_state(world)
    _, state, signal = step_world(world, state, "go kitchen")
    assert state.agent_room == "kitchen"
    assert signal["entered_new_room"] is True
    _, state, signal = step_world(world, state, "go hall")
    _, state, signal = step_world(world, state, "go kitchen")
    assert signal["entered_new_room"] is False


def test_unrecognized_action_is_rejected_and_state_unchanged():
    world = _tiny_world()
    state = initial_state(world)
    obs, new_state, signal = step_world(world, state, "flombulate the pot")
    assert signal["rejected"] is True
    assert obs.rendered == REJECTION_TEXT
    assert new_state == state


def test_non_adjacent_move_is_rejected():
    world = _tiny_world()
    state = initial_state(world)
    _, same, signal = step_world(world, state, "go pantry")
    assert signal["rejected"] is True
    assert same == state


def test_milestones_accumulate_to_done():
    world = _tiny_world()
    state = initial_state(world)
    _, state, signal = step_world(world, state, "go kitchen")
    assert signal["score_delta"] == 40
    _, state, signal = step_world(world, state, "take pot")
    assert signal["score_delta"] == 30
    _, state, signal = step_world(world, state, "activate stove")
    assert signal["score_delta"] == 30
    assert signal["done"] is True
    assert state.score == 100


def test_container_requires_opening():
    world = bundled_world("kettle-lab")
    state = initial_state(world)
    for action in ("go kitchen", "go pantry"):
        _, state, _ = step_world(world, state, action)
    _, state, signal = step_world(world, state, "take tea tin")
    assert signal["rejected"] is True
    _, state, _ = step_world(world, state, "open cupboard")
    _, state, signal = step_world(world, state, "take tea tin")
    assert signal["rejected"] is False
    assert "tea tin" in state.inventory


def test_bundled_worlds_are_completable():
    world = bundled_world("kettle-lab")
    state = initial_state(world)
    for action in ("go kitchen", "take pot", "put pot stove", "activate stove"):
        _, state, signal = step_world(world, state, action)
    assert state.score == 100 and state.done

    world = bundled_world("greenhouse")
    state = initial_state(world)
    for action in ("go corridor", "go shed", "open cabinet", "take seed packet",
                   "go corridor", "go greenhouse", "put seed packet planter",
                   "activate sprinkler"):
        _, state, signal = step_world(world, state, action)
    assert state.score == 100 and state.done


def test_score_is_recomputable():
    from plancert.textworld import recompute_score
    world = _tiny_world()
    state = initial_state(world)
    for action in ("go kitchen", "take pot"):
        _, state, _ = step_world(world, state, action)
    assert state.score == recompute_score(world, state)


# ---------------------------------------------------------------------------
# grounding


def test_grounding_linear_world():
    assert grounding_rooms(_tiny_world()) == ["hall", "kitchen", "pantry"]


def test_grounding_excludes_unreachable_room():
    world = _tiny_world(rooms=["hall", "kitchen", "pantry", "vault"])
    assert "vault" not in grounding_rooms(world)


def test_grounding_empty_adjacency():
    world = _tiny_world(rooms=["hall"], adjacency=[], objects=[], milestones=[
        {"id": "m", "condition": {"type": "visited", "room": "hall"}, "delta": 100}])
    assert grounding_rooms(world) == ["hall"]


# ---------------------------------------------------------------------------
# exploration credit and the invalid-target cache


def _exploration_predicate():
    return Predicate(id="find-pot", kind="exploration",
                     text="The location of the pot is known to the agent.")


def test_exploration_credit_on_new_room():
    verdict = exploration_credit(_exploration_predicate(), {"entered_new_room": True})
    assert verdict is not None and verdict.k == 1


def test_exploration_credit_defers_on_revisit():
    assert exploration_credit(_exploration_predicate(), {"entered_new_room": False}) is None


def test_exploration_credit_ignores_other_kinds():
    pred = Predicate(id="x", kind="", text="x")
    assert exploration_credit(pred, {"entered_new_room": True}) is None


def test_invalid_target_cache_is_idempotent():
    pred = _exploration_predicate()
    cache = record_invalid_target((), pred)
    cache = record_invalid_target(cache, pred)
    assert cache == (pred.text,)


def test_replan_context_surfaces_cached_targets():
    pred = _exploration_predicate()
    cache = record_invalid_target((), pred)
    block = render_invalid_targets(cache)
    assert pred.text in block
    assert render_invalid_targets(()) == ""


# ---------------------------------------------------------------------------
# validation composition


def _scenario_for(world: WorldDef) -> TextWorldScenario:
    predicates = (
        Predicate(id="in-kitchen", text="The agent is in the kitchen."),
        Predicate(id="has-pot", text="The pot is in the agent's inventory."),
        Predicate(id="stove-on", text="The stove is running."),
        Predicate(id="done", text="The task score reaches 100.", kind="goal", is_goal=True),
    )
    conditions = {
        "in-kitchen": {"type": "agent_at", "room": "kitchen"},
        "has-pot": {"type": "in_inventory", "object": "pot"},
        "stove-on": {"type": "activated", "object": "stove"},
    }
    actions = {
        "in-kitchen": "go kitchen",
        "has-pot": "take pot",
        "stove-on": "activate stove",
        "done": "look",
    }
    return TextWorldScenario(predicates=predicates, conditions=conditions, actions=actions)


def test_episode_completes_with_done_shortcut_cascade():
    world = _tiny_world()
    env = TextWorldEnvironment(world)
    scenario = _scenario_for(world)
    ops = textworld_operator_set(env, scenario)
    artifact = run_episode(EngineConfig(attempt_budget=3, max_replans=1, global_step_cap=20),
                           ops, env, Task(task_id="boil", goal=scenario.goal()))
    assert artifact.goal_certified
    # the last action completes the task: the goal is certified in the same
    # transition as the final condition (k = 2 via the completion shortcut)
    assert artifact.transitions[-1].cascade_depth == 2
    assert artifact.final_answer == {"score": 100, "done": True}


def test_shortcut_precedence_skips_backend():
    world = _tiny_world()
    calls = []

    def counting_backend(tail, obs):
        calls.append(1)
        return ValidationVerdict(k=0, reason="backend")

    validate = make_textworld_validator(world, {}, backend=counting_backend)
    tail = (Predicate(id="a", text="a"), Predicate(id="g", text="g", is_goal=True))
    done_obs = Observation(payload={"signal": {"done": True, "rejected": False},
                                    "state": initial_state(world)}, rendered="done")
    verdict = validate(tail, done_obs)
    assert verdict.k == 2
    assert calls == []


def test_backend_cascade_capped_before_goal():
    world = _tiny_world()

    def eager_backend(tail, obs):
        return ValidationVerdict(k=len(tail), reason="everything")

    validate = make_textworld_validator(world, {}, backend=eager_backend)
    tail = (Predicate(id="a", text="a"), Predicate(id="b", text="b"),
            Predicate(id="g", text="g", is_goal=True))
    obs = Observation(payload={"signal": {"done": False, "rejected": False},
                               "state": initial_state(world)}, rendered="obs")
    assert validate(tail, obs).k == 2


def test_rejected_action_counts_as_failure_and_replan_swaps_tail():
    world = _tiny_world()
    predicates = (
        Predicate(id="warp", text="The agent is in the pantry."),
        Predicate(id="done", text="Score is 100.", kind="goal", is_goal=True),
    )
    replacement = (
        Predicate(id="walk-1", text="The agent is in the kitchen."),
        Predicate(id="walk-2", text="The agent is in the pantry."),
        Predicate(id="done", text="Score is 100.", kind="goal", is_goal=True),
    )
    scenario = TextWorldScenario(
        predicates=predicates,
        conditions={
            "warp": {"type": "agent_at", "room": "pantry"},
            "walk-1": {"type": "agent_at", "room": "kitchen"},
            "walk-2": {"type": "agent_at", "room": "pantry"},
        },
        actions={"warp": "go pantry", "walk-1": "go kitchen",
                 "walk-2": "go pantry", "done": "look"},
        replans={"warp": replacement},
    )
    env = TextWorldEnvironment(world)
    ops = textworld_operator_set(env, scenario)
    config = EngineConfig(attempt_budget=2, max_replans=1, global_step_cap=30)
    artifact = run_episode(config, ops, env, Task(task_id="detour", goal=predicates[-1]))
    # the teleport target exhausts its budget and is swapped for the walk;
    # the goal itself stays unreachable (score never hits 100), so the run
    # ends stuck at the goal after a second retry-only replan
    assert artifact.replan_events[0].cursor == 0
    assert artifact.plans[1].predicates[0].id == "walk-1"
    certified = [p.id for p in artifact.certified_predicates()]
    assert certified == ["walk-1", "walk-2"]
    assert not artifact.goal_certified
    assert predicates[0].text in env.invalid_targets


def test_cascade_from_one_action_satisfying_two_predicates():
    world = _tiny_world()
    predicates = (
        Predicate(id="explored", text="The kitchen has been visited."),
        Predicate(id="located", text="The agent is in the kitchen."),
        Predicate(id="has-pot", text="The pot is held."),
        Predicate(id="done", text="Score is 100.", kind="goal", is_goal=True),
    )
    scenario = TextWorldScenario(
        predicates=predicates,
        conditions={
            "explored": {"type": "visited", "room": "kitchen"},
            "located": {"type": "agent_at", "room": "kitchen"},
            "has-pot": {"type": "in_inventory", "object": "pot"},
        },
        actions={"explored": "go kitchen", "located": "go kitchen",
                 "has-pot": "take pot", "done": "look"},
    )
    env = TextWorldEnvironment(world)
    ops = textworld_operator_set(env, scenario)
    artifact = run_episode(EngineConfig(attempt_budget=2, max_replans=1, global_step_cap=30),
                           ops, env, Task(task_id="bundle", goal=predicates[-1]))
    first = artifact.transitions[0]
    assert first.cascade_depth == 2  # one "go kitchen" satisfies both conditions


def test_exploration_credit_through_validator():
    world = _tiny_world()
    validate = make_textworld_validator(world, {})
    pred = _exploration_predicate()
    tail = (pred, Predicate(id="g", text="g", is_goal=True))
    state = initial_state(world)
    obs = Observation(payload={"signal": {"done": False, "rejected": False,
                                          "entered_new_room": True},
                               "state": state}, rendered="went somewhere new")
    assert validate(tail, obs).k == 1


def test_engine_defaults_pin_published_configuration():
    assert TEXTWORLD_ENGINE_DEFAULTS.attempt_budget == 30
    assert TEXTWORLD_ENGINE_DEFAULTS.max_replans == 5
    assert TEXTWORLD_ENGINE_DEFAULTS.global_step_cap == 500


def test_world_requires_milestone_sum_100():
    with pytest.raises(Exception):
        _tiny_world(milestones=[
            {"id": "m", "condition": {"type": "visited", "room": "kitchen"}, "delta": 50}])
