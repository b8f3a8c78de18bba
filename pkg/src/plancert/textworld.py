"""Scripted interactive text environment: rooms, objects, milestone scores.

Worlds are declarative (rooms, adjacency, objects, milestones, goal) and
load from JSON, so test scenarios need no code.  The verb grammar is a small
fixed set; unrecognized input is rejected with a fixed error string and
leaves the state untouched.  Score is always recomputable as the sum of
satisfied milestone deltas.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from importlib import resources
from pathlib import Path
from typing import Mapping, Sequence

from .core import Action, EngineConfig, Observation, Predicate, ValidationVerdict
from .operators import (
    OperatorSet,
    ValidationShortcutConfig,
    apply_shortcuts,
    cap_cascade,
)

TEXTWORLD_ENGINE_DEFAULTS = EngineConfig(attempt_budget=30, max_replans=5, global_step_cap=500)

REJECTION_TEXT = "That is not something you can do here."
VERBS = ("go", "open", "take", "put", "activate", "focus", "look")

EXPLORATION_KIND = "exploration"


class WorldError(Exception):
    pass


@dataclass(frozen=True)
class WorldObject:
    name: str
    location: str  # a room name or a container object's name
    portable: bool = False
    openable: bool = False
    open: bool = False


@dataclass(frozen=True)
class Milestone:
    id: str
    condition: dict
    delta: int


@dataclass(frozen=True)
class WorldDef:
    """Immutable world definition; milestone deltas must sum to 100."""

    name: str
    rooms: tuple[str, ...]
    start: str
    adjacency: frozenset
    objects: tuple[WorldObject, ...]
    milestones: tuple[Milestone, ...]
    goal: dict

    def __post_init__(self):
        if self.start not in self.rooms:
            raise WorldError(f"start room {self.start!r} is not a room")
        for a, b in self.adjacency:
            if a not in self.rooms or b not in self.rooms:
                raise WorldError(f"adjacency references unknown room: {a}-{b}")
        total = sum(m.delta for m in self.milestones)
        if total != 100:
            raise WorldError(f"milestone deltas must sum to 100, got {total}")

    def adjacent(self, a: str, b: str) -> bool:
        return frozenset((a, b)) in self.adjacency

    def object(self, name: str) -> WorldObject:
        for obj in self.objects:
            if obj.name == name:
                return obj
        raise KeyError(name)


@dataclass(frozen=True)
class WorldState:
    """Mutable-world snapshot; updated functionally on every accepted action."""

    agent_room: str
    inventory: frozenset
    locations: Mapping[str, str]  # object -> room, container, or "inventory"
    open_objects: frozenset
    activated: frozenset
    focused: frozenset
    score: int
    visited_rooms: frozenset
    last_observation: str
    done: bool

    def to_jsonable(self) -> dict:
        return {
            "agent_room": self.agent_room,
            "inventory": sorted(self.inventory),
            "locations": dict(sorted(self.locations.items())),
            "open_objects": sorted(self.open_objects),
            "activated": sorted(self.activated),
            "focused": sorted(self.focused),
            "score": self.score,
            "visited_rooms": sorted(self.visited_rooms),
            "done": self.done,
        }


def initial_state(world: WorldDef) -> WorldState:
    locations = {obj.name: obj.location for obj in world.objects}
    opened = frozenset(o.name for o in world.objects if o.openable and o.open)
    state = WorldState(
        agent_room=world.start,
        inventory=frozenset(),
        locations=locations,
        open_objects=opened,
        activated=frozenset(),
        focused=frozenset(),
        score=0,
        visited_rooms=frozenset({world.start}),
        last_observation=f"You are in the {world.start}.",
        done=False,
    )
    score = recompute_score(world, state)
    return replace(state, score=score, done=eval_condition(world.goal, world, state))


def eval_condition(condition: Mapping, world: WorldDef, state: WorldState) -> bool:
    kind = condition["type"]
    if kind == "agent_at":
        return state.agent_room == condition["room"]
    if kind == "in_inventory":
        return condition["object"] in state.inventory
    if kind == "activated":
        return condition["object"] in state.activated
    if kind == "focused":
        return condition["object"] in state.focused
    if kind == "placed":
        return state.locations.get(condition["object"]) == condition["where"]
    if kind == "open":
        return condition["object"] in state.open_objects
    if kind == "visited":
        return condition["room"] in state.visited_rooms
    if kind == "score_at_least":
        return recompute_score(world, state) >= condition["value"]
    raise WorldError(f"unknown condition type {kind!r}")


def recompute_score(world: WorldDef, state: WorldState) -> int:
    total = 0
    for milestone in world.milestones:
        if milestone.condition["type"] == "score_at_least":
            raise WorldError("milestones cannot be score conditions")
        if eval_condition(milestone.condition, world, state):
            total += milestone.delta
    return total


def _reachable_object(world: WorldDef, state: WorldState, name: str) -> bool:
    if name not in state.locations:
        return False
    location = state.locations[name]
    if location == "inventory":
        return True
    if location == state.agent_room:
        return True
    # inside a container that is open and in this room
    if location in state.locations:
        return (state.locations[location] == state.agent_room
                and location in state.open_objects)
    return False


def _match_name(rest: str, names: Sequence[str]) -> tuple[str, str] | None:
    """Greedily match a known multi-word name at the start of the text."""
    for name in sorted(names, key=len, reverse=True):
        if rest == name:
            return name, ""
        if rest.startswith(name + " "):
            return name, rest[len(name) + 1:]
    return None


def step_world(world: WorldDef, state: WorldState, action_text: str) -> tuple[Observation, WorldState, dict]:
    """Parse and apply one free-form text action.

    Unrecognized or inapplicable actions are rejected with a fixed error
    string and leave the state unchanged; accepted actions update the world,
    recompute the milestone score, and flag first entry into a room.
    """
    prior_score = state.score

    def rejected() -> tuple[Observation, WorldState, dict]:
        signal = {"done": state.done, "rejected": True, "score": state.score,
                  "score_delta": 0, "entered_new_room": False}
        obs = Observation(
            payload={"text": REJECTION_TEXT, "signal": signal, "state": state},
            rendered=REJECTION_TEXT)
        return obs, state, signal

    words = action_text.strip().lower().split()
    if not words or words[0] not in VERBS:
        return rejected()
    verb, rest = words[0], " ".join(words[1:])

    new = state
    entered_new_room = False
    text = ""

    if verb == "look":
        here = [n for n, loc in state.locations.items() if loc == state.agent_room]
        text = f"You are in the {state.agent_room}. You see: {', '.join(sorted(here)) or 'nothing'}."
    elif verb == "go":
        if rest not in world.rooms or not world.adjacent(state.agent_room, rest):
            return rejected()
        entered_new_room = rest not in state.visited_rooms
        new = replace(state, agent_room=rest,
                      visited_rooms=state.visited_rooms | {rest})
        text = f"You go to the {rest}."
    elif verb == "open":
        try:
            obj = world.object(rest)
        except KeyError:
            return rejected()
        if not obj.openable or not _reachable_object(world, state, rest) \
                or rest in state.open_objects:
            return rejected()
        new = replace(state, open_objects=state.open_objects | {rest})
        text = f"You open the {rest}."
    elif verb == "take":
        try:
            obj = world.object(rest)
        except KeyError:
            return rejected()
        if not obj.portable or not _reachable_object(world, state, rest) \
                or rest in state.inventory:
            return rejected()
        locations = dict(state.locations)
        locations[rest] = "inventory"
        new = replace(state, inventory=state.inventory | {rest}, locations=locations)
        text = f"You take the {rest}."
    elif verb == "put":
        names = list(state.locations.keys())
        match = _match_name(rest, names)
        if match is None:
            return rejected()
        name, where = match
        if name not in state.inventory:
            return rejected()
        valid_target = where == state.agent_room or (
            where in state.locations
            and state.locations.get(where) == state.agent_room
        )
        if not where or not valid_target:
            return rejected()
        locations = dict(state.locations)
        locations[name] = where
        new = replace(state, inventory=state.inventory - {name}, locations=locations)
        text = f"You put the {name} on the {where}."
    elif verb in ("activate", "focus"):
        if rest not in state.locations:
            return rejected()
        if not _reachable_object(world, state, rest):
            return rejected()
        if verb == "activate":
            new = replace(state, activated=state.activated | {rest})
        else:
            new = replace(state, focused=state.focused | {rest})
        text = f"You {verb} the {rest}."

    score = recompute_score(world, new)
    new = replace(new, score=score, last_observation=text)
    done = eval_condition(world.goal, world, new)
    new = replace(new, done=done)
    signal = {
        "done": done,
        "rejected": False,
        "score": score,
        "score_delta": score - prior_score,
        "entered_new_room": entered_new_room,
    }
    obs = Observation(payload={"text": text, "signal": signal, "state": new}, rendered=text)
    return obs, new, signal


def grounding_rooms(world: WorldDef) -> list[str]:
    """Rooms reachable from the start room, for grounding prompts and plans."""
    seen = {world.start}
    frontier = [world.start]
    while frontier:
        room = frontier.pop()
        for other in world.rooms:
            if other not in seen and world.adjacent(room, other):
                seen.add(other)
                frontier.append(other)
    return [r for r in world.rooms if r in seen]


def exploration_credit(predicate: Predicate, signal: Mapping) -> ValidationVerdict | None:
    """Credit an exploration predicate when the agent enters a new room."""
    if predicate.kind != EXPLORATION_KIND:
        return None
    if not signal.get("entered_new_room"):
        return None
    return ValidationVerdict(k=1, reason="entered a previously unvisited room")


def record_invalid_target(cache: tuple, predicate: Predicate) -> tuple:
    """Append-only cache of targets the environment has rejected."""
    if predicate.text in cache:
        return cache
    return cache + (predicate.text,)


def render_invalid_targets(cache: Sequence[str]) -> str:
    """Replan context block; empty cache renders nothing."""
    if not cache:
        return ""
    lines = "\n".join(f"- {text}" for text in cache)
    return f"Targets already proven invalid; do not propose them again:\n{lines}"


# ---------------------------------------------------------------------------
# World files


def world_from_jsonable(body: Mapping) -> WorldDef:
    adjacency = frozenset(frozenset(pair) for pair in body["adjacency"])
    objects = tuple(
        WorldObject(
            name=o["name"], location=o["location"],
            portable=o.get("portable", False),
            openable=o.get("openable", False),
            open=o.get("open", False),
        )
        for o in body["objects"]
    )
    milestones = tuple(
        Milestone(id=m["id"], condition=m["condition"], delta=m["delta"])
        for m in body["milestones"]
    )
    return WorldDef(
        name=body.get("name", "unnamed"),
        rooms=tuple(body["rooms"]),
        start=body["start"],
        adjacency=adjacency,
        objects=objects,
        milestones=milestones,
        goal=body["goal"],
    )


def load_world(path: str | Path) -> WorldDef:
    return world_from_jsonable(json.loads(Path(path).read_text()))


def bundled_world(name: str) -> WorldDef:
    text = resources.files("plancert.data").joinpath("worlds").joinpath(f"{name}.json").read_text()
    return world_from_jsonable(json.loads(text))


# ---------------------------------------------------------------------------
# Episode adapter


class TextWorldEnvironment:
    """Wraps a world definition and a live state for the engine."""

    def __init__(self, world: WorldDef, state: WorldState | None = None):
        self.world = world
        self.state = state or initial_state(world)
        self.invalid_targets: tuple = ()

    def snapshot(self) -> WorldState:
        return self.state

    def final_answer(self):
        return {"score": self.state.score, "done": self.state.done}

    def step(self, action: Action) -> Observation:
        obs, new_state, _ = step_world(self.world, self.state, action.rendered)
        self.state = new_state
        return obs


@dataclass(frozen=True)
class TextWorldScenario:
    """A scripted task over a world: predicates with their checkable
    conditions, one action per predicate, and optional replacement tails
    for stuck predicates."""

    predicates: tuple[Predicate, ...]
    conditions: Mapping[str, dict]
    actions: Mapping[str, str]
    replans: Mapping[str, tuple[Predicate, ...]] | None = None

    def goal(self) -> Predicate:
        return self.predicates[-1]


def make_textworld_validator(
    world: WorldDef,
    conditions: Mapping[str, dict],
    shortcuts: ValidationShortcutConfig = ValidationShortcutConfig(),
    backend=None,
):
    """Validator: hard shortcuts first, then the condition table (or an
    injected backend), with the cascade capped before the goal predicate."""

    def validate(plan_tail: Sequence[Predicate], observation: Observation) -> ValidationVerdict:
        signal = observation.payload["signal"]
        shortcut = apply_shortcuts(shortcuts, signal, plan_tail)
        if shortcut is not None:
            return shortcut
        if backend is not None:
            verdict = backend(plan_tail, observation)
            return ValidationVerdict(
                k=cap_cascade(verdict.k, plan_tail), reason=verdict.reason)
        state = observation.payload["state"]
        k = 0
        for pred in plan_tail:
            if pred.is_goal:
                break
            condition = conditions.get(pred.id)
            if condition is None or not eval_condition(condition, world, state):
                break
            k += 1
        if k == 0:
            credit = exploration_credit(plan_tail[0], signal)
            if credit is not None:
                return credit
            return ValidationVerdict(k=0, reason=f"condition for {plan_tail[0].id} unmet")
        k = cap_cascade(k, plan_tail)
        return ValidationVerdict(k=k, reason=f"{k} consecutive condition(s) hold")

    return validate


def textworld_operator_set(
    env: TextWorldEnvironment,
    scenario: TextWorldScenario,
    shortcuts: ValidationShortcutConfig = ValidationShortcutConfig(),
    backend=None,
) -> OperatorSet:
    """Scripted operators for one textworld task."""
    order = {p.id: i for i, p in enumerate(scenario.predicates)}

    def propose(state, goal):
        if isinstance(state, Predicate):
            return scenario.predicates[order[state.id] + 1]
        return scenario.predicates[0]

    def realize(state, target):
        text = scenario.actions[target.id]
        return Action(payload={"action": text}, rendered=text)

    validate = make_textworld_validator(env.world, scenario.conditions, shortcuts, backend)

    def replan(state, goal, trajectory):
        stuck = trajectory.plan[trajectory.cursor]
        env.invalid_targets = record_invalid_target(env.invalid_targets, stuck)
        replans = scenario.replans or {}
        if stuck.id in replans:
            return replans[stuck.id]
        return trajectory.remaining()

    return OperatorSet(propose=propose, realize=realize, validate=validate, replan=replan)
