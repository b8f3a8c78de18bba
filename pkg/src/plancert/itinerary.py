"""Deterministic synthetic travel-itinerary environment.

Plans are a fixed function of the trip shape, options are filtered upfront
so that every presented choice already satisfies every constraint, and all
validators are deterministic.  Costs are integer minor units (cents) to keep
the running-cost invariant exact; the arithmetic is deliberately simple
(flat per-option costs, no per-traveler multipliers) and is declared here
rather than claimed equivalent to any external evaluator.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Callable, Sequence

from .core import (
    Action,
    EngineConfig,
    Observation,
    Predicate,
    PlanTail,
    ValidationVerdict,
)
from .operators import OperatorSet

MAX_OPTIONS_SHOWN = 30
ITINERARY_ENGINE_DEFAULTS = EngineConfig(attempt_budget=3, max_replans=5, global_step_cap=60)

TRANSPORT_MODES = ("flight", "self-driving", "taxi")
MEAL_SLOTS = 3

FILTER_STAGES = (
    "sandbox",
    "local_constraints",
    "mode_consistency",
    "uniqueness",
    "affordability",
)


class ItineraryError(Exception):
    pass


class EmptyOptionSet(ItineraryError):
    """All candidates were eliminated; ``stage`` names the filter that did it."""

    def __init__(self, stage: str, diagnostics: "FilterDiagnostics", detail: str = ""):
        super().__init__(f"no options survive the {stage} filter{': ' + detail if detail else ''}")
        self.stage = stage
        self.diagnostics = diagnostics


class ChoiceOutOfRange(ItineraryError):
    pass


class CostInvariantError(ItineraryError):
    """The running total diverged from the recomputed cost; a bug, not a verdict."""


class IncompleteItineraryError(ItineraryError):
    pass


class GenerationInfeasible(ItineraryError):
    pass


@dataclass(frozen=True)
class Option:
    """One sandbox entry: a transport, hotel, restaurant, or attraction."""

    id: str
    city: str
    cost: int
    category: str
    origin: str = ""
    cuisine: str = ""
    room_type: str = ""
    house_rules: tuple[str, ...] = ()

    def __post_init__(self):
        if self.cost < 0:
            raise ValueError("option costs are non-negative")


@dataclass(frozen=True)
class Sandbox:
    """Immutable reference data; ids are unique per table."""

    flights: tuple[Option, ...]
    hotels: tuple[Option, ...]
    restaurants: tuple[Option, ...]
    attractions: tuple[Option, ...]
    ground_transport: tuple[Option, ...]

    def __post_init__(self):
        for name in ("flights", "hotels", "restaurants", "attractions", "ground_transport"):
            table = getattr(self, name)
            ids = [o.id for o in table]
            if len(set(ids)) != len(ids):
                raise ValueError(f"duplicate option ids in {name}")

    def transports_for_route(self, origin: str, dest: str) -> list[Option]:
        pool = list(self.flights) + list(self.ground_transport)
        return [o for o in pool if o.origin == origin and o.city == dest]

    def by_id(self, option_id: str) -> Option:
        for table in (self.flights, self.hotels, self.restaurants,
                      self.attractions, self.ground_transport):
            for option in table:
                if option.id == option_id:
                    return option
        raise KeyError(option_id)


@dataclass(frozen=True)
class LocalConstraints:
    forbidden_modes: tuple[str, ...] = ()
    room_type: str = ""
    house_rules: tuple[str, ...] = ()


@dataclass(frozen=True)
class TripSpec:
    origin: str
    city_sequence: tuple[str, ...]
    days: int
    travelers: int
    budget: int
    local: LocalConstraints = LocalConstraints()
    required_cuisines: tuple[str, ...] = ()
    spec_id: str = ""

    def __post_init__(self):
        if self.days < len(self.city_sequence):
            raise ValueError("need at least one day per city")
        if self.budget <= 0:
            raise ValueError("budget must be positive")
        if self.travelers <= 0:
            raise ValueError("travelers must be positive")

    def day_city(self, day: int) -> str:
        """Contiguous day-to-city mapping; earlier cities take the extra days."""
        n = len(self.city_sequence)
        base, extra = divmod(self.days, n)
        start = 0
        for i, city in enumerate(self.city_sequence):
            span = base + (1 if i < extra else 0)
            if start <= day < start + span:
                return city
            start += span
        raise ValueError(f"day {day} outside the trip")


@dataclass(frozen=True)
class ItineraryState:
    """Accumulated certified decisions; updates are additive only."""

    transports: tuple[Option, ...] = ()
    stays: tuple[tuple[str, Option], ...] = ()
    meals: tuple[tuple[int, Option], ...] = ()
    outings: tuple[tuple[int, Option], ...] = ()
    running_total_cost: int = 0
    used_names: frozenset = frozenset()
    collected_cuisines: frozenset = frozenset()

    def all_options(self) -> list[Option]:
        chosen = list(self.transports)
        chosen += [o for _, o in self.stays]
        chosen += [o for _, o in self.meals]
        chosen += [o for _, o in self.outings]
        return chosen

    def recomputed_cost(self) -> int:
        return sum(o.cost for o in self.all_options())

    def chosen_modes(self) -> frozenset:
        return frozenset(o.category for o in self.transports)

    def add_transport(self, option: Option) -> "ItineraryState":
        return self._rederive(replace(self, transports=self.transports + (option,)))

    def add_stay(self, city: str, option: Option) -> "ItineraryState":
        return self._rederive(replace(self, stays=self.stays + ((city, option),)))

    def add_meal(self, day: int, option: Option) -> "ItineraryState":
        new = replace(
            self,
            meals=self.meals + ((day, option),),
            used_names=self.used_names | {option.id},
            collected_cuisines=self.collected_cuisines | {option.cuisine},
        )
        return self._rederive(new)

    def add_outing(self, day: int, option: Option) -> "ItineraryState":
        new = replace(
            self,
            outings=self.outings + ((day, option),),
            used_names=self.used_names | {option.id},
        )
        return self._rederive(new)

    @staticmethod
    def _rederive(state: "ItineraryState") -> "ItineraryState":
        # the running total is always re-derived from scratch, never patched
        return replace(state, running_total_cost=state.recomputed_cost())

    def to_jsonable(self) -> dict:
        return {
            "transports": [o.id for o in self.transports],
            "stays": {city: o.id for city, o in self.stays},
            "meals": [[day, o.id] for day, o in self.meals],
            "outings": [[day, o.id] for day, o in self.outings],
            "running_total_cost": self.running_total_cost,
            "used_names": sorted(self.used_names),
            "collected_cuisines": sorted(self.collected_cuisines),
        }


# ---------------------------------------------------------------------------
# Plan construction

KIND_OUTBOUND = "transport_outbound"
KIND_STAY = "accommodation"
KIND_LEG = "transport_intercity"
KIND_MEALS = "day_meals"
KIND_FUN = "day_attractions"
KIND_RETURN = "transport_return"
KIND_BUDGET = "budget_check"
KIND_RENDER = "render"

SELECTION_KINDS = (KIND_OUTBOUND, KIND_STAY, KIND_LEG, KIND_MEALS, KIND_FUN, KIND_RETURN)


def build_constraint_plan(spec: TripSpec) -> PlanTail:
    """Emit the fixed predicate sequence for a trip shape.

    Cost-incurring global decisions come first, then per-day content, then
    the aggregate checks; the total count is 1 + n + (n-1) + 2N + 3.
    """
    cities = spec.city_sequence
    preds = [Predicate(
        id="go-out", kind=KIND_OUTBOUND,
        text=f"Outbound transport from {spec.origin} to {cities[0]} is booked.")]
    for i, city in enumerate(cities):
        preds.append(Predicate(
            id=f"stay-{i}", kind=KIND_STAY,
            text=f"Accommodation in {city} is booked."))
    for i in range(len(cities) - 1):
        preds.append(Predicate(
            id=f"go-leg-{i}", kind=KIND_LEG,
            text=f"Transport from {cities[i]} to {cities[i + 1]} is booked."))
    for day in range(spec.days):
        preds.append(Predicate(
            id=f"meals-{day}", kind=KIND_MEALS,
            text=f"All three meals for day {day + 1} in {spec.day_city(day)} are chosen."))
    for day in range(spec.days):
        preds.append(Predicate(
            id=f"fun-{day}", kind=KIND_FUN,
            text=f"An attraction for day {day + 1} in {spec.day_city(day)} is chosen."))
    preds.append(Predicate(
        id="go-back", kind=KIND_RETURN,
        text=f"Return transport from {cities[-1]} to {spec.origin} is booked."))
    preds.append(Predicate(
        id="budget", kind=KIND_BUDGET,
        text="The itinerary is structurally complete, within budget, and covers the required cuisines."))
    preds.append(Predicate(
        id="itinerary", kind=KIND_RENDER, is_goal=True,
        text="The finished itinerary is assembled in its output format."))
    return PlanTail(tuple(preds))


def _predicate_route(spec: TripSpec, predicate: Predicate) -> tuple[str, str]:
    cities = spec.city_sequence
    if predicate.kind == KIND_OUTBOUND:
        return spec.origin, cities[0]
    if predicate.kind == KIND_RETURN:
        return cities[-1], spec.origin
    if predicate.kind == KIND_LEG:
        leg = int(predicate.id.rsplit("-", 1)[1])
        return cities[leg], cities[leg + 1]
    raise ValueError(f"{predicate.id} is not a transport predicate")


def _predicate_day(predicate: Predicate) -> int:
    return int(predicate.id.rsplit("-", 1)[1])


def _predicate_city(spec: TripSpec, predicate: Predicate) -> str:
    if predicate.kind == KIND_STAY:
        return spec.city_sequence[int(predicate.id.rsplit("-", 1)[1])]
    return spec.day_city(_predicate_day(predicate))


# ---------------------------------------------------------------------------
# Constraint-upfront filtering


@dataclass(frozen=True)
class FilterDiagnostics:
    """Survivor count after each filter stage, in application order."""

    stages: tuple[tuple[str, int], ...]

    def survivors(self, stage: str) -> int:
        for name, count in self.stages:
            if name == stage:
                return count
        raise KeyError(stage)


def _candidates(spec: TripSpec, predicate: Predicate, sandbox: Sandbox) -> list[Option]:
    if predicate.kind in (KIND_OUTBOUND, KIND_LEG, KIND_RETURN):
        origin, dest = _predicate_route(spec, predicate)
        return sandbox.transports_for_route(origin, dest)
    if predicate.kind == KIND_STAY:
        city = _predicate_city(spec, predicate)
        return [o for o in sandbox.hotels if o.city == city]
    if predicate.kind == KIND_MEALS:
        city = _predicate_city(spec, predicate)
        return [o for o in sandbox.restaurants if o.city == city]
    if predicate.kind == KIND_FUN:
        city = _predicate_city(spec, predicate)
        return [o for o in sandbox.attractions if o.city == city]
    raise ValueError(f"{predicate.kind} is not a selection predicate")


def _passes_local(option: Option, spec: TripSpec) -> bool:
    if option.category in TRANSPORT_MODES:
        return option.category not in spec.local.forbidden_modes
    if option.category == "hotel":
        if spec.local.room_type and option.room_type != spec.local.room_type:
            return False
        return set(spec.local.house_rules) <= set(option.house_rules)
    return True


def _mode_consistent(option: Option, chosen_modes: frozenset) -> bool:
    if option.category not in TRANSPORT_MODES:
        return True
    if option.category == "self-driving" and chosen_modes & {"flight", "taxi"}:
        return False
    if option.category in ("flight", "taxi") and "self-driving" in chosen_modes:
        return False
    return True


def filter_options(
    state: ItineraryState,
    spec: TripSpec,
    predicate: Predicate,
    sandbox: Sandbox,
    max_options: int = MAX_OPTIONS_SHOWN,
) -> tuple[list[Option], FilterDiagnostics]:
    """Apply the five constraint filters in sequence.

    Returns the surviving options sorted cheapest-first (ties broken by id)
    and capped, plus per-stage survivor diagnostics.  Raises EmptyOptionSet
    naming the first stage at which the candidate set became empty.
    """
    counts: list[tuple[str, int]] = []

    def record(stage: str, options: list[Option]) -> list[Option]:
        counts.append((stage, len(options)))
        if not options:
            raise EmptyOptionSet(stage, FilterDiagnostics(tuple(counts)),
                                 detail=f"target {predicate.id}")
        return options

    survivors = record("sandbox", _candidates(spec, predicate, sandbox))
    survivors = record("local_constraints", [o for o in survivors if _passes_local(o, spec)])
    modes = state.chosen_modes()
    survivors = record("mode_consistency", [o for o in survivors if _mode_consistent(o, modes)])
    survivors = record("uniqueness", [o for o in survivors if o.id not in state.used_names])
    survivors = record(
        "affordability",
        [o for o in survivors if state.running_total_cost + o.cost <= spec.budget],
    )
    ranked = sorted(survivors, key=lambda o: (o.cost, o.id))[:max_options]
    return ranked, FilterDiagnostics(tuple(counts))


# ---------------------------------------------------------------------------
# Selection and deterministic validation


def cheapest_chooser(options: Sequence[Option]) -> int:
    return 0


def _apply_choice(state: ItineraryState, spec: TripSpec,
                  predicate: Predicate, option: Option) -> ItineraryState:
    if predicate.kind in (KIND_OUTBOUND, KIND_LEG, KIND_RETURN):
        return state.add_transport(option)
    if predicate.kind == KIND_STAY:
        return state.add_stay(_predicate_city(spec, predicate), option)
    if predicate.kind == KIND_MEALS:
        return state.add_meal(_predicate_day(predicate), option)
    if predicate.kind == KIND_FUN:
        return state.add_outing(_predicate_day(predicate), option)
    raise ValueError(f"{predicate.kind} is not a selection predicate")


def select_and_certify(
    state: ItineraryState,
    spec: TripSpec,
    sandbox: Sandbox,
    predicate: Predicate,
    options: Sequence[Option],
    chooser: Callable[[Sequence[Option]], int],
    max_options: int = MAX_OPTIONS_SHOWN,
) -> tuple[Action, ValidationVerdict, ItineraryState]:
    """Choose from pre-filtered options and certify the selection.

    Meal predicates decide all three slots sequentially within the single
    predicate: after every slot the scratch state is updated so the next
    slot's options exclude the just-chosen restaurant and reflect the reduced
    remaining budget.  Selection verdicts are always k = 1 because every
    presented option already satisfies every constraint.
    """
    if not options:
        raise EmptyOptionSet("sandbox", FilterDiagnostics((("sandbox", 0),)),
                             detail="no options supplied")

    def pick(current: Sequence[Option]) -> Option:
        index = chooser(current)
        if not isinstance(index, int) or not 0 <= index < len(current):
            raise ChoiceOutOfRange(f"chooser returned {index!r} for {len(current)} options")
        return current[index]

    chosen: list[Option] = []
    scratch = state
    if predicate.kind == KIND_MEALS:
        day = _predicate_day(predicate)
        slot_options: Sequence[Option] = options
        for slot in range(MEAL_SLOTS):
            if slot > 0:
                slot_options, _ = filter_options(scratch, spec, predicate, sandbox, max_options)
            option = pick(slot_options)
            chosen.append(option)
            scratch = scratch.add_meal(day, option)
    else:
        option = pick(options)
        chosen.append(option)
        scratch = _apply_choice(state, spec, predicate, option)

    action = Action(
        payload={
            "kind": "selection",
            "predicate": predicate.id,
            "choices": [o.id for o in chosen],
            "costs": [o.cost for o in chosen],
        },
        rendered=f"select {', '.join(o.id for o in chosen)} for {predicate.id}",
    )
    verdict = ValidationVerdict(k=1, reason="selection drawn from constraint-filtered options")
    return action, verdict, scratch


def _structural_gaps(state: ItineraryState, spec: TripSpec) -> str:
    n = len(spec.city_sequence)
    if len(state.transports) != n + 1:
        return f"expected {n + 1} transport legs, found {len(state.transports)}"
    stayed = {city for city, _ in state.stays}
    missing = [c for c in spec.city_sequence if c not in stayed]
    if missing:
        return f"no accommodation for {missing[0]}"
    for day in range(spec.days):
        meals = [o for d, o in state.meals if d == day]
        if len(meals) != MEAL_SLOTS:
            return f"day {day + 1} has {len(meals)} of {MEAL_SLOTS} meals"
    for day in range(spec.days):
        outings = [o for d, o in state.outings if d == day]
        if not outings:
            return f"day {day + 1} has no attraction"
    return ""


def validate_budget_check(state: ItineraryState, spec: TripSpec) -> ValidationVerdict:
    """The one cross-predicate validator: structure, total cost, cuisines.

    A mismatch between the running total and the recomputed cost is an
    invariant breach and raises CostInvariantError instead of producing a
    verdict.
    """
    recomputed = state.recomputed_cost()
    if recomputed != state.running_total_cost:
        raise CostInvariantError(
            f"running total {state.running_total_cost} != recomputed {recomputed}")
    gap = _structural_gaps(state, spec)
    if gap:
        return ValidationVerdict(k=0, reason=f"structural completeness: {gap}")
    if state.running_total_cost > spec.budget:
        return ValidationVerdict(
            k=0, reason=f"total cost {state.running_total_cost} exceeds budget {spec.budget}")
    missing = [c for c in spec.required_cuisines if c not in state.collected_cuisines]
    if missing:
        return ValidationVerdict(k=0, reason=f"cuisine coverage: missing {missing[0]}")
    return ValidationVerdict(k=1, reason="complete, within budget, cuisines covered")


def render_itinerary(state: ItineraryState, spec: TripSpec) -> dict:
    """Assemble the day-by-day itinerary record.

    Requires a structurally complete state; the record uses only JSON types
    so it round-trips losslessly through the trajectory persistence format.
    """
    gap = _structural_gaps(state, spec)
    if gap:
        raise IncompleteItineraryError(gap)
    stays = dict(state.stays)
    legs = ["outbound"] + [f"leg-{i}" for i in range(len(spec.city_sequence) - 1)] + ["return"]
    days = []
    for day in range(spec.days):
        city = spec.day_city(day)
        days.append({
            "day": day + 1,
            "city": city,
            "meals": [o.id for d, o in state.meals if d == day],
            "attraction": next(o.id for d, o in state.outings if d == day),
            "lodging": stays[city].id,
        })
    return {
        "origin": spec.origin,
        "cities": list(spec.city_sequence),
        "days": days,
        "transports": [
            {"leg": leg, "id": o.id, "mode": o.category, "cost": o.cost}
            for leg, o in zip(legs, state.transports)
        ],
        "total_cost": state.running_total_cost,
        "budget": spec.budget,
    }


# ---------------------------------------------------------------------------
# Episode adapter


class ItineraryEnvironment:
    """Holds the episode's itinerary state and applies certified selections."""

    def __init__(self, sandbox: Sandbox, spec: TripSpec):
        self.sandbox = sandbox
        self.spec = spec
        self.state = ItineraryState()
        self._plan = {p.id: p for p in build_constraint_plan(spec).predicates}
        self._final: dict | None = None

    def snapshot(self) -> ItineraryState:
        return self.state

    def final_answer(self):
        return self._final

    def step(self, action: Action) -> Observation:
        payload = action.payload
        kind = payload["kind"]
        if kind == "selection":
            predicate = self._plan[payload["predicate"]]
            for option_id in payload["choices"]:
                option = self.sandbox.by_id(option_id)
                self.state = _apply_choice(self.state, self.spec, predicate, option)
            return Observation(
                payload={"kind": "selection", "ok": True, "choices": payload["choices"]},
                rendered=f"applied {len(payload['choices'])} selection(s)",
            )
        if kind == "stuck":
            return Observation(
                payload={"kind": "stuck", "ok": False,
                         "stage": payload["stage"], "detail": payload["detail"]},
                rendered=f"no viable options ({payload['stage']})",
            )
        if kind == "budget_check":
            verdict = validate_budget_check(self.state, self.spec)
            return Observation(
                payload={"kind": "budget_check", "ok": verdict.k == 1, "reason": verdict.reason},
                rendered=verdict.reason,
            )
        if kind == "render":
            try:
                record = render_itinerary(self.state, self.spec)
            except IncompleteItineraryError as exc:
                return Observation(
                    payload={"kind": "render", "ok": False, "reason": str(exc)},
                    rendered=f"render refused: {exc}",
                )
            self._final = record
            return Observation(
                payload={"kind": "render", "ok": True, "itinerary": record},
                rendered="itinerary assembled",
            )
        raise ValueError(f"unknown action kind {kind!r}")


def itinerary_operator_set(
    env: ItineraryEnvironment,
    chooser: Callable[[Sequence[Option]], int] = cheapest_chooser,
    max_options: int = MAX_OPTIONS_SHOWN,
) -> OperatorSet:
    """The deterministic rule backend for the itinerary environment.

    Propose walks the fixed plan, realize filters upfront and selects,
    validation reads the deterministic signals, and replan is retry-only
    (certified selections are additive and never rolled back).
    """
    plan = build_constraint_plan(env.spec).predicates
    index_by_id = {p.id: i for i, p in enumerate(plan)}

    def propose(state, goal):
        if isinstance(state, Predicate):
            return plan[index_by_id[state.id] + 1]
        return plan[0]

    def realize(state: ItineraryState, target: Predicate) -> Action:
        if target.kind in SELECTION_KINDS:
            try:
                options, _ = filter_options(state, env.spec, target, env.sandbox, max_options)
                action, _, _ = select_and_certify(
                    state, env.spec, env.sandbox, target, options, chooser, max_options)
                return action
            except EmptyOptionSet as exc:
                return Action(
                    payload={"kind": "stuck", "stage": exc.stage, "detail": str(exc)},
                    rendered=f"stuck on {target.id}: {exc.stage} filter emptied the options",
                )
        if target.kind == KIND_BUDGET:
            return Action(payload={"kind": "budget_check"}, rendered="verify totals and coverage")
        if target.kind == KIND_RENDER:
            return Action(payload={"kind": "render"}, rendered="assemble the itinerary")
        raise ValueError(f"unexpected predicate kind {target.kind!r}")

    def validate(plan_tail, observation: Observation) -> ValidationVerdict:
        payload = observation.payload
        kind = payload["kind"]
        if kind == "selection":
            return ValidationVerdict(k=1, reason="selection drawn from constraint-filtered options")
        if kind == "stuck":
            return ValidationVerdict(
                k=0, reason=f"option set emptied at the {payload['stage']} stage: {payload['detail']}")
        if kind in ("budget_check", "render"):
            if payload["ok"]:
                return ValidationVerdict(k=1, reason="deterministic check passed")
            return ValidationVerdict(k=0, reason=payload.get("reason", "check failed"))
        return ValidationVerdict(k=0, reason=f"unknown observation kind {kind!r}")

    def replan(state, goal, trajectory):
        # retry-only: the certified prefix is additive and cannot roll back
        return trajectory.remaining()

    return OperatorSet(propose=propose, realize=realize, validate=validate, replan=replan)


# ---------------------------------------------------------------------------
# Seeded sandbox generation with a solvability guarantee

CITY_POOL = (
    "arden", "bellmar", "corvale", "duskwood", "elmsea",
    "farrow", "glenport", "harlow", "isleworth", "juniper",
)
ORIGIN_CITY = "homestead"
CUISINE_POOL = (
    "mediterranean", "sichuan", "bistro", "izakaya",
    "cantina", "smokehouse", "vegan", "creole",
)
ROOM_TYPES = ("single", "double", "suite", "shared")
HOUSE_RULE_POOL = ("pets", "parties", "smoking", "children", "visitors")


@dataclass(frozen=True)
class SandboxParams:
    cities: int = 4
    options_per_table: int = 20
    spec_count: int = 10
    min_days: int = 3
    max_days: int = 7
    max_cities_per_trip: int = 3


def cheapest_assignment(sandbox: Sandbox, spec: TripSpec) -> tuple[bool, int | None]:
    """Simulate the full plan with the cheapest chooser.

    Returns (True, total cost) when every selection predicate can be filled
    within the spec's constraints and budget, (False, None) otherwise.  This
    is the solvability oracle used at generation time.
    """
    state = ItineraryState()
    for predicate in build_constraint_plan(spec).predicates:
        if predicate.kind not in SELECTION_KINDS:
            continue
        try:
            options, _ = filter_options(state, spec, predicate, sandbox)
            _, _, state = select_and_certify(
                state, spec, sandbox, predicate, options, cheapest_chooser)
        except EmptyOptionSet:
            return False, None
    if state.running_total_cost > spec.budget:
        return False, None
    if any(c not in state.collected_cuisines for c in spec.required_cuisines):
        return False, None
    return True, state.running_total_cost


def _simulate_collected(sandbox: Sandbox, spec: TripSpec) -> tuple[int, frozenset]:
    unlimited = replace(spec, budget=10 ** 12, required_cuisines=())
    state = ItineraryState()
    for predicate in build_constraint_plan(unlimited).predicates:
        if predicate.kind not in SELECTION_KINDS:
            continue
        options, _ = filter_options(state, unlimited, predicate, sandbox)
        _, _, state = select_and_certify(
            state, unlimited, sandbox, predicate, options, cheapest_chooser)
    return state.running_total_cost, state.collected_cuisines


def generate_sandbox(seed: int, params: SandboxParams = SandboxParams()) -> tuple[Sandbox, list[TripSpec]]:
    """Deterministically generate a sandbox plus trip specs certified solvable.

    Every emitted spec passes the cheapest-assignment oracle at its final
    budget; shapes that cannot be satisfied are discarded and retried.
    Raises GenerationInfeasible when the parameters admit no solvable spec.
    """
    if params.cities < 1 or params.cities > len(CITY_POOL):
        raise GenerationInfeasible(f"cities must be in 1..{len(CITY_POOL)}")
    if params.options_per_table < MEAL_SLOTS:
        raise GenerationInfeasible("need at least three restaurants per city")

    rng = random.Random(seed)
    cities = list(CITY_POOL[: params.cities])

    hotels, restaurants, attractions = [], [], []
    for city in cities:
        for i in range(params.options_per_table):
            hotels.append(Option(
                id=f"hotel-{city}-{i:02d}", city=city, category="hotel",
                cost=rng.randint(80_00, 400_00),
                room_type=rng.choice(ROOM_TYPES),
                house_rules=tuple(sorted(rng.sample(
                    HOUSE_RULE_POOL, rng.randint(1, len(HOUSE_RULE_POOL))))),
            ))
            restaurants.append(Option(
                id=f"eat-{city}-{i:02d}", city=city, category="restaurant",
                cost=rng.randint(10_00, 80_00),
                cuisine=rng.choice(CUISINE_POOL),
            ))
            attractions.append(Option(
                id=f"see-{city}-{i:02d}", city=city, category="attraction",
                cost=rng.randint(5_00, 60_00),
            ))

    flights, ground = [], []
    places = [ORIGIN_CITY] + cities
    for origin in places:
        for dest in places:
            if origin == dest:
                continue
            for i in range(rng.randint(2, 3)):
                flights.append(Option(
                    id=f"fly-{origin}-{dest}-{i}", origin=origin, city=dest,
                    category="flight", cost=rng.randint(90_00, 450_00)))
            ground.append(Option(
                id=f"drive-{origin}-{dest}-0", origin=origin, city=dest,
                category="self-driving", cost=rng.randint(20_00, 120_00)))
            ground.append(Option(
                id=f"taxi-{origin}-{dest}-0", origin=origin, city=dest,
                category="taxi", cost=rng.randint(40_00, 200_00)))

    sandbox = Sandbox(
        flights=tuple(flights), hotels=tuple(hotels), restaurants=tuple(restaurants),
        attractions=tuple(attractions), ground_transport=tuple(ground),
    )

    specs: list[TripSpec] = []
    for index in range(params.spec_count):
        spec = None
        for _ in range(60):
            n = rng.randint(1, min(params.max_cities_per_trip, len(cities)))
            sequence = tuple(rng.sample(cities, n))
            days = rng.randint(max(n, params.min_days), params.max_days)
            local = LocalConstraints(
                forbidden_modes=rng.choice(((), ("flight",), ("self-driving",))),
                room_type=rng.choice(("",) + ROOM_TYPES),
                house_rules=rng.choice(((), (rng.choice(HOUSE_RULE_POOL),))),
            )
            candidate = TripSpec(
                origin=ORIGIN_CITY, city_sequence=sequence, days=days,
                travelers=rng.randint(1, 4), budget=10 ** 12, local=local,
                spec_id=f"trip-{seed}-{index:03d}",
            )
            try:
                total, collected = _simulate_collected(sandbox, candidate)
            except EmptyOptionSet:
                continue
            budget = total + rng.randint(0, max(total // 4, 1))
            wanted = rng.sample(sorted(collected), min(len(collected), rng.randint(0, 2)))
            spec = replace(candidate, budget=budget, required_cuisines=tuple(sorted(wanted)))
            solvable, _ = cheapest_assignment(sandbox, spec)
            if solvable:
                break
            spec = None
        if spec is None:
            raise GenerationInfeasible(
                f"could not find a solvable trip shape for spec {index}")
        specs.append(spec)
    return sandbox, specs


# ---------------------------------------------------------------------------
# JSON persistence for sandboxes and specs

SANDBOX_FORMAT_VERSION = 1


def _option_to_jsonable(option: Option) -> dict:
    record = {"id": option.id, "city": option.city, "cost": option.cost,
              "category": option.category}
    if option.origin:
        record["origin"] = option.origin
    if option.cuisine:
        record["cuisine"] = option.cuisine
    if option.room_type:
        record["room_type"] = option.room_type
    if option.house_rules:
        record["house_rules"] = list(option.house_rules)
    return record


def _option_from_jsonable(record: dict) -> Option:
    return Option(
        id=record["id"], city=record["city"], cost=record["cost"],
        category=record["category"], origin=record.get("origin", ""),
        cuisine=record.get("cuisine", ""), room_type=record.get("room_type", ""),
        house_rules=tuple(record.get("house_rules", ())),
    )


def spec_to_jsonable(spec: TripSpec) -> dict:
    return {
        "spec_id": spec.spec_id,
        "origin": spec.origin,
        "city_sequence": list(spec.city_sequence),
        "days": spec.days,
        "travelers": spec.travelers,
        "budget": spec.budget,
        "local_constraints": {
            "forbidden_modes": list(spec.local.forbidden_modes),
            "room_type": spec.local.room_type,
            "house_rules": list(spec.local.house_rules),
        },
        "required_cuisines": list(spec.required_cuisines),
    }


def spec_from_jsonable(record: dict) -> TripSpec:
    local = record.get("local_constraints", {})
    return TripSpec(
        origin=record["origin"],
        city_sequence=tuple(record["city_sequence"]),
        days=record["days"],
        travelers=record["travelers"],
        budget=record["budget"],
        local=LocalConstraints(
            forbidden_modes=tuple(local.get("forbidden_modes", ())),
            room_type=local.get("room_type", ""),
            house_rules=tuple(local.get("house_rules", ())),
        ),
        required_cuisines=tuple(record.get("required_cuisines", ())),
        spec_id=record.get("spec_id", ""),
    )


def save_sandbox(path: str | Path, sandbox: Sandbox, specs: Sequence[TripSpec]) -> None:
    """Write the sandbox (tables keyed by id) and the spec list to JSON."""
    body = {
        "format_version": SANDBOX_FORMAT_VERSION,
        "sandbox": {
            name: {o.id: _option_to_jsonable(o) for o in getattr(sandbox, name)}
            for name in ("flights", "hotels", "restaurants", "attractions", "ground_transport")
        },
        "specs": [spec_to_jsonable(s) for s in specs],
    }
    Path(path).write_text(json.dumps(body, indent=2, sort_keys=True))


def load_sandbox(path: str | Path) -> tuple[Sandbox, list[TripSpec]]:
    body = json.loads(Path(path).read_text())
    version = body.get("format_version")
    if version != SANDBOX_FORMAT_VERSION:
        raise ItineraryError(f"unsupported sandbox format version {version!r}")
    tables = {
        name: tuple(sorted(
            (_option_from_jsonable(r) for r in body["sandbox"][name].values()),
            key=lambda o: o.id))
        for name in ("flights", "hotels", "restaurants", "attractions", "ground_transport")
    }
    sandbox = Sandbox(**tables)
    specs = [spec_from_jsonable(r) for r in body["specs"]]
    return sandbox, specs
