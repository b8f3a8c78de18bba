"""Walk through one scripted episode and inspect the artifact it produces.

The engine needs four operators (propose, realize, validate, replan) and an
environment.  Here everything is table-driven, so the run is exactly
reproducible and small enough to read end to end.
"""

from plancert import (
    Action,
    EngineConfig,
    Observation,
    Predicate,
    ScriptedEnvironment,
    ScriptedScript,
    Task,
    run_episode,
    scripted_operator_set,
)

# A three-predicate plan: two working conditions, then the goal.
p1 = Predicate(id="door-open", text="The front door is open.")
p2 = Predicate(id="inside", text="The agent is inside the house.")
goal = Predicate(id="lights-on", text="The lights are on.", is_goal=True)

# Propose chains from the previous predicate toward the goal.
script = ScriptedScript(
    propose_table={
        ("start", goal.id): p1,
        (p1.id, goal.id): p2,
        (p2.id, goal.id): goal,
    },
    realize_table={
        ("start", p1.id): Action(payload=None, rendered="turn the handle"),
        ("opened", p2.id): Action(payload=None, rendered="step through"),
        ("inside", goal.id): Action(payload=None, rendered="flip the switch"),
    },
    validate_table={
        (p1.id, "the door swings open"): 1,
        (p2.id, "you are in the hallway"): 1,
        (goal.id, "the hallway lights up"): 1,
    },
)

# The environment maps (state, action) to an observation and a state move.
env = ScriptedEnvironment(
    observations={
        ("start", "turn the handle"): Observation(payload=None, rendered="the door swings open"),
        ("opened", "step through"): Observation(payload=None, rendered="you are in the hallway"),
        ("inside", "flip the switch"): Observation(payload=None, rendered="the hallway lights up"),
    },
    moves={
        ("start", "turn the handle"): "opened",
        ("opened", "step through"): "inside",
        ("inside", "flip the switch"): "lit",
    },
    start="start",
)

config = EngineConfig(attempt_budget=3, max_replans=2, global_step_cap=20)
artifact = run_episode(config, scripted_operator_set(script), env,
                       Task(task_id="demo-house", goal=goal))

print("goal certified: ", artifact.goal_certified)
print("termination:    ", artifact.termination)
print("plan:           ", [p.id for p in artifact.plans[0].predicates])
print()
print("certified transitions:")
for t in artifact.transitions:
    print(f"  step {t.step_index}: cursor {t.from_cursor} -> {t.to_cursor} "
          f"(depth {t.cascade_depth}) via {t.action.rendered!r}")
print()
print("attempt history (append-only):")
for a in artifact.attempts:
    print(f"  step {a.step_index}: {a.action.rendered!r} -> k={a.verdict.k} ({a.reason})")
