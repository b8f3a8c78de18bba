"""Independent oracle implementations used to cross-check the library.

These deliberately avoid the library's own code paths: BM25 is computed by
direct per-document scans instead of postings lists, and the itinerary
checker applies each constraint as a standalone predicate over the raw
sandbox tables.
"""

from __future__ import annotations

import math
import re
from collections import Counter

from plancert.itinerary import (
    KIND_FUN,
    KIND_LEG,
    KIND_MEALS,
    KIND_OUTBOUND,
    KIND_RETURN,
    KIND_STAY,
    MEAL_SLOTS,
    TRANSPORT_MODES,
    ItineraryState,
    Option,
    Sandbox,
    TripSpec,
)
from plancert.retrieval import STOPWORDS

_WORD = re.compile(r"[a-z0-9]+")


def bm25_reference_scores(docs: list[tuple[str, str]], query: str,
                          k1: float = 1.2, b: float = 0.75) -> dict[str, float]:
    """Direct BM25 over (doc_id, text) pairs: no index, per-doc scans."""
    tokenized = {}
    for doc_id, text in docs:
        words = [w for w in _WORD.findall(text.lower()) if w not in STOPWORDS]
        tokenized[doc_id] = words
    n = len(docs)
    avgdl = sum(len(words) for words in tokenized.values()) / n
    terms = [w for w in _WORD.findall(query.lower()) if w not in STOPWORDS]
    scores = {}
    for doc_id, words in tokenized.items():
        counts = Counter(words)
        total = 0.0
        for term in terms:
            df = sum(1 for other in tokenized.values() if term in other)
            idf = math.log(1.0 + (n - df + 0.5) / (df + 0.5))
            tf = counts.get(term, 0)
            if tf == 0:
                continue
            total += idf * tf * (k1 + 1) / (tf + k1 * (1 - b + b * len(words) / avgdl))
        scores[doc_id] = total
    return scores


def brute_force_filter(state: ItineraryState, spec: TripSpec, predicate,
                       sandbox: Sandbox) -> set[str]:
    """Apply all five constraints independently; returns surviving ids."""
    survivors = set()
    for option in _raw_candidates(spec, predicate, sandbox):
        if not _local_ok(option, spec):
            continue
        if not _mode_ok(option, state):
            continue
        if option.category in ("restaurant", "attraction") and option.id in state.used_names:
            continue
        if state.running_total_cost + option.cost > spec.budget:
            continue
        survivors.add(option.id)
    return survivors


def _raw_candidates(spec: TripSpec, predicate, sandbox: Sandbox) -> list[Option]:
    cities = spec.city_sequence
    if predicate.kind == KIND_OUTBOUND:
        route = (spec.origin, cities[0])
    elif predicate.kind == KIND_RETURN:
        route = (cities[-1], spec.origin)
    elif predicate.kind == KIND_LEG:
        leg = int(predicate.id.rsplit("-", 1)[1])
        route = (cities[leg], cities[leg + 1])
    else:
        route = None
    if route is not None:
        pool = list(sandbox.flights) + list(sandbox.ground_transport)
        return [o for o in pool if (o.origin, o.city) == route]
    if predicate.kind == KIND_STAY:
        city = cities[int(predicate.id.rsplit("-", 1)[1])]
        return [o for o in sandbox.hotels if o.city == city]
    day = int(predicate.id.rsplit("-", 1)[1])
    city = spec.day_city(day)
    if predicate.kind == KIND_MEALS:
        return [o for o in sandbox.restaurants if o.city == city]
    if predicate.kind == KIND_FUN:
        return [o for o in sandbox.attractions if o.city == city]
    raise ValueError(predicate.kind)


def _local_ok(option: Option, spec: TripSpec) -> bool:
    if option.category in TRANSPORT_MODES:
        return option.category not in spec.local.forbidden_modes
    if option.category == "hotel":
        if spec.local.room_type and option.room_type != spec.local.room_type:
            return False
        return set(spec.local.house_rules).issubset(set(option.house_rules))
    return True


def _mode_ok(option: Option, state: ItineraryState) -> bool:
    if option.category not in TRANSPORT_MODES:
        return True
    modes = {o.category for o in state.transports}
    if option.category == "self-driving":
        return not ({"flight", "taxi"} & modes)
    return "self-driving" not in modes


def itinerary_violations(state: ItineraryState, spec: TripSpec, sandbox: Sandbox) -> list[str]:
    """Independent full-itinerary constraint audit; returns human-readable
    violations (empty list means the itinerary is valid)."""
    violations = []
    known = {o.id for table in ("flights", "hotels", "restaurants", "attractions",
                                "ground_transport") for o in getattr(sandbox, table)}
    for option in state.all_options():
        if option.id not in known:
            violations.append(f"{option.id} is not in the sandbox")
    n = len(spec.city_sequence)
    if len(state.transports) != n + 1:
        violations.append(f"expected {n + 1} transports, got {len(state.transports)}")
    modes = {o.category for o in state.transports}
    if "self-driving" in modes and modes & {"flight", "taxi"}:
        violations.append("self-driving co-occurs with flight or taxi")
    for option in state.transports:
        if option.category in spec.local.forbidden_modes:
            violations.append(f"forbidden mode {option.category}")
    stayed = {c for c, _ in state.stays}
    for city in spec.city_sequence:
        if city not in stayed:
            violations.append(f"no stay in {city}")
    for _, hotel in state.stays:
        if spec.local.room_type and hotel.room_type != spec.local.room_type:
            violations.append(f"{hotel.id} has wrong room type")
        if not set(spec.local.house_rules).issubset(set(hotel.house_rules)):
            violations.append(f"{hotel.id} misses required house rules")
    for day in range(spec.days):
        meals = [o for d, o in state.meals if d == day]
        if len(meals) != MEAL_SLOTS:
            violations.append(f"day {day} has {len(meals)} meals")
        if not [o for d, o in state.outings if d == day]:
            violations.append(f"day {day} has no attraction")
    names = [o.id for _, o in state.meals] + [o.id for _, o in state.outings]
    if len(names) != len(set(names)):
        violations.append("restaurant or attraction reused")
    total = sum(o.cost for o in state.all_options())
    if total != state.running_total_cost:
        violations.append("running total diverged")
    if total > spec.budget:
        violations.append(f"over budget: {total} > {spec.budget}")
    missing = [c for c in spec.required_cuisines
               if c not in {o.cuisine for _, o in state.meals}]
    if missing:
        violations.append(f"missing cuisines: {missing}")
    return violations
