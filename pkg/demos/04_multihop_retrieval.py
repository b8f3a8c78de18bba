"""BM25 retrieval with title boosting, and a two-hop QA episode.

The index boosts exact and prefix title matches ahead of content scores
(so "Dunkirk" surfaces "Dunkirk (film)" even when other paragraphs mention
the word more often), and the hop validator recovers from a wrongly cited
title by ranking all accumulated paragraphs by keyword overlap.
"""

from plancert.cli import scripted_verifier
from plancert.core import Task, run_episode
from plancert.retrieval import (
    TWO_HOP_ENGINE_DEFAULTS,
    HopFinding,
    HopPlanSpec,
    MultihopEnvironment,
    Paragraph,
    build_hop_plan,
    build_index,
    multihop_operator_set,
    search,
    validate_hop,
)

corpus = [
    Paragraph(doc_id="d1", title="Tom Hardy",
              text="Tom Hardy starred in the war film Dunkirk released in 2017."),
    Paragraph(doc_id="d2", title="Dunkirk (film)",
              text="Dunkirk is a 2017 war film directed by Christopher Nolan."),
    Paragraph(doc_id="d3", title="Dunkirk",
              text="Dunkirk is a commune in northern France with a busy harbour."),
    Paragraph(doc_id="d4", title="Christopher Nolan",
              text="Christopher Nolan directed Inception, Interstellar, and Dunkirk."),
    Paragraph(doc_id="d5", title="Harbour towns",
              text="Dunkirk Dunkirk Dunkirk: ferries, beaches, and the harbour."),
]
index = build_index(corpus)

print("search 'Dunkirk' (title boost beats raw term frequency):")
for para, score in search(index, "Dunkirk", top_k=3):
    print(f"  {score:7.3f}  {para.title}")
print()

# Hop validation: the model cited a garbage title, but the right paragraph
# is found by keyword overlap and the finding is accepted with a correction.
finding = HopFinding(
    sub_question="Who directed Dunkirk?",
    cited_title="Some Hallucinated Article",
    finding_text="Dunkirk is a war film directed by Christopher Nolan",
    bridge_entity="Christopher Nolan",
)
result = validate_hop(finding, corpus, {}, scripted_verifier)
print(f"hop verdict k={result.verdict.k}, corrected title: {result.corrected_title!r}")
print(f"  ({result.verdict.reason})")
print()

# A full two-hop episode with scripted findings.
sub_q1 = "Which 2017 war film did Tom Hardy star in?"
sub_q2 = "Who directed the film Dunkirk?"
plan_spec = HopPlanSpec(
    question="Who directed the 2017 war film that Tom Hardy starred in?",
    sub_questions=(sub_q1, sub_q2))
findings = {
    sub_q1: HopFinding(sub_question=sub_q1, cited_title="Tom Hardy",
                       finding_text="Tom Hardy starred in the war film Dunkirk",
                       bridge_entity="Dunkirk"),
    sub_q2: HopFinding(sub_question=sub_q2, cited_title="Dunkirk (film)",
                       finding_text="Dunkirk film directed by Christopher Nolan",
                       bridge_entity="Christopher Nolan"),
}
env = MultihopEnvironment(index=index)
ops = multihop_operator_set(env, plan_spec,
                            finding_for=lambda q, state: findings[q],
                            verifier=scripted_verifier,
                            answer_for=lambda state: "Christopher Nolan")
goal = build_hop_plan(plan_spec).predicates[-1]
artifact = run_episode(TWO_HOP_ENGINE_DEFAULTS, ops, env,
                       Task(task_id="demo-qa", goal=goal))

print(f"episode: goal_certified={artifact.goal_certified}, "
      f"answer={artifact.final_answer!r}")
print(f"hop chain: " + " -> ".join(
    f"{f.cited_title} [{f.bridge_entity}]" for f in env.state.findings))
print(f"final transition cascade depth: {artifact.transitions[-1].cascade_depth} "
      "(a valid answer certifies the answer predicate and the goal together)")
