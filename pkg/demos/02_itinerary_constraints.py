"""The deterministic itinerary environment: constraint-upfront filtering.

A seeded sandbox is generated together with trip specs that are certified
solvable, so the cheapest chooser completes every plan.  Because every
presented option already satisfies every constraint, selection validation
cannot fail -- malformed-output and constraint-violation failures are
eliminated by construction.
"""

from plancert.core import Task, run_episode
from plancert.itinerary import (
    ITINERARY_ENGINE_DEFAULTS,
    ItineraryEnvironment,
    ItineraryState,
    build_constraint_plan,
    filter_options,
    generate_sandbox,
    itinerary_operator_set,
)

sandbox, specs = generate_sandbox(seed=42)
spec = specs[0]

print(f"trip {spec.spec_id}: {spec.days} days across {list(spec.city_sequence)}")
print(f"budget {spec.budget / 100:.2f}, forbidden modes {spec.local.forbidden_modes}")
print()

plan = build_constraint_plan(spec)
print(f"deterministic plan ({len(plan)} predicates):")
for pred in plan.predicates:
    print(f"  [{pred.kind:<20}] {pred.text}")
print()

# Filtering applies five constraint stages in sequence and reports survivors.
first = plan.predicates[0]
options, diagnostics = filter_options(ItineraryState(), spec, first, sandbox)
print(f"options for {first.id!r} (cheapest first, capped):")
for stage, survivors in diagnostics.stages:
    print(f"  after {stage:<18} {survivors:>3} options")
print(f"  presented: {[o.id for o in options[:5]]} ...")
print()

env = ItineraryEnvironment(sandbox, spec)
ops = itinerary_operator_set(env)
artifact = run_episode(ITINERARY_ENGINE_DEFAULTS, ops, env,
                       Task(task_id=spec.spec_id, goal=plan.predicates[-1]))

print(f"episode: goal_certified={artifact.goal_certified} "
      f"in {len(artifact.attempts)} steps, {len(artifact.replan_events)} replans")
itinerary = artifact.final_answer
print(f"total cost {itinerary['total_cost'] / 100:.2f} <= budget {itinerary['budget'] / 100:.2f}")
for day in itinerary["days"]:
    print(f"  day {day['day']} in {day['city']}: meals {day['meals']}, "
          f"see {day['attraction']}, stay {day['lodging']}")
