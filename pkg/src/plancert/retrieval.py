"""BM25 retrieval with title boosting, plus the multi-hop QA machinery:
hop findings with bridge-entity chaining, two-stage hop validation with a
paragraph fallback, strict answer filters, and escalating search diversity.
"""

from __future__ import annotations

import json
import math
import re
from collections import Counter
from dataclasses import dataclass, replace
from importlib import resources
from pathlib import Path
from typing import Callable, Mapping, Sequence

from .core import Action, EngineConfig, Observation, Predicate, PlanTail, ValidationVerdict
from .operators import OperatorSet

TWO_HOP_ENGINE_DEFAULTS = EngineConfig(attempt_budget=3, max_replans=2, global_step_cap=20)
MULTI_HOP_ENGINE_DEFAULTS = EngineConfig(attempt_budget=3, max_replans=2, global_step_cap=25)
DEFAULT_TOP_K = 10

NEGATION_PHRASES = ("does not provide", "not mentioned", "not specified")
GARBAGE_ANSWERS = ("unknown", "not available", "cannot determine")
MAX_ANSWER_WORDS = 15
ENTITY_QUERY_AFTER = 4
GUESS_QUERY_AFTER = 6

MONTHS = ("january", "february", "march", "april", "may", "june", "july",
          "august", "september", "october", "november", "december")


class RetrievalError(Exception):
    pass


class EmptyCorpus(RetrievalError):
    pass


class DuplicateDoc(RetrievalError):
    pass


class EmptyQuery(RetrievalError):
    pass


class GuesserUnavailable(RetrievalError):
    pass


class IndexFormatError(RetrievalError):
    pass


def _load_stopwords() -> frozenset:
    text = resources.files("plancert.data").joinpath("stopwords.txt").read_text()
    return frozenset(w.strip() for w in text.splitlines() if w.strip())


STOPWORDS = _load_stopwords()

_WORD_RE = re.compile(r"[a-z0-9]+")
_SUFFIX_RE = re.compile(r"\s*\([^)]*\)\s*$")


def tokenize(text: str, drop_stopwords: bool = True) -> list[str]:
    """Lowercase alphanumeric word split, with optional stopword removal."""
    words = _WORD_RE.findall(text.lower())
    if drop_stopwords:
        return [w for w in words if w not in STOPWORDS]
    return words


@dataclass(frozen=True)
class Paragraph:
    title: str
    text: str
    doc_id: str

    def __post_init__(self):
        if not self.title:
            raise ValueError("paragraph titles must be non-empty")


@dataclass(frozen=True)
class Bm25Index:
    """Inverted index plus the title map used for boosted retrieval."""

    postings: Mapping[str, tuple[tuple[str, int], ...]]  # term -> (doc_id, tf), sorted
    doc_lengths: Mapping[str, int]
    avg_doc_length: float
    titles: Mapping[str, tuple[str, ...]]      # normalized full title -> doc ids
    base_titles: Mapping[str, tuple[str, ...]] # suffix-stripped title -> doc ids
    paragraphs: Mapping[str, Paragraph]
    k1: float = 1.2
    b: float = 0.75

    def __len__(self):
        return len(self.doc_lengths)


def _title_key(title: str) -> str:
    return " ".join(tokenize(title, drop_stopwords=False))


def _base_title_key(title: str) -> str:
    return _title_key(_SUFFIX_RE.sub("", title))


def build_index(corpus: Sequence[Paragraph], k1: float = 1.2, b: float = 0.75) -> Bm25Index:
    """Tokenize the corpus and build postings plus the title n-gram maps.

    Title maps cover both the full title and the title with a trailing
    parenthesized disambiguation suffix stripped, so a query n-gram like
    "dunkirk" matches the title "Dunkirk (film)" by prefix.
    """
    if not corpus:
        raise EmptyCorpus("cannot index an empty corpus")
    seen: set[str] = set()
    postings: dict[str, list[tuple[str, int]]] = {}
    doc_lengths: dict[str, int] = {}
    titles: dict[str, list[str]] = {}
    base_titles: dict[str, list[str]] = {}
    paragraphs: dict[str, Paragraph] = {}

    for para in corpus:
        if para.doc_id in seen:
            raise DuplicateDoc(f"duplicate doc_id {para.doc_id!r}")
        seen.add(para.doc_id)
        paragraphs[para.doc_id] = para
        terms = tokenize(para.text)
        doc_lengths[para.doc_id] = len(terms)
        for term, tf in sorted(Counter(terms).items()):
            postings.setdefault(term, []).append((para.doc_id, tf))
        titles.setdefault(_title_key(para.title), []).append(para.doc_id)
        base = _base_title_key(para.title)
        if base:
            base_titles.setdefault(base, []).append(para.doc_id)

    for term in postings:
        postings[term].sort(key=lambda entry: entry[0])
    avg = sum(doc_lengths.values()) / len(doc_lengths)
    return Bm25Index(
        postings={t: tuple(v) for t, v in postings.items()},
        doc_lengths=doc_lengths,
        avg_doc_length=avg,
        titles={t: tuple(v) for t, v in titles.items()},
        base_titles={t: tuple(v) for t, v in base_titles.items()},
        paragraphs=paragraphs,
        k1=k1,
        b=b,
    )


def _idf(index: Bm25Index, term: str) -> float:
    df = len(index.postings.get(term, ()))
    n = len(index)
    return math.log(1.0 + (n - df + 0.5) / (df + 0.5))


def bm25_scores(index: Bm25Index, terms: Sequence[str]) -> dict[str, float]:
    """Accumulate BM25 content scores over the postings lists."""
    scores: dict[str, float] = {}
    for term, qtf in Counter(terms).items():
        idf = _idf(index, term)
        for doc_id, tf in index.postings.get(term, ()):
            dl = index.doc_lengths[doc_id]
            norm = index.k1 * (1 - index.b + index.b * dl / index.avg_doc_length)
            contribution = idf * tf * (index.k1 + 1) / (tf + norm)
            scores[doc_id] = scores.get(doc_id, 0.0) + contribution * qtf
    return scores


def _query_ngrams(words: Sequence[str], max_n: int = 3) -> list[str]:
    grams = []
    for n in range(min(max_n, len(words)), 0, -1):
        for i in range(len(words) - n + 1):
            grams.append(" ".join(words[i:i + n]))
    return grams


def title_matches(index: Bm25Index, query: str) -> list[str]:
    """Doc ids whose title (full or suffix-stripped) equals a query n-gram."""
    words = tokenize(query, drop_stopwords=False)
    matched: list[str] = []
    seen: set[str] = set()
    for gram in _query_ngrams(words):
        for table in (index.titles, index.base_titles):
            for doc_id in table.get(gram, ()):
                if doc_id not in seen:
                    seen.add(doc_id)
                    matched.append(doc_id)
    return matched


def search(index: Bm25Index, query: str, top_k: int = DEFAULT_TOP_K) -> list[tuple[Paragraph, float]]:
    """Two-stage retrieval: title-matched docs first, BM25 fills the rest.

    Within each stage the order is score-descending with doc_id as the
    deterministic tie-break.  Raises EmptyQuery when tokenization leaves no
    content terms.
    """
    if top_k < 1:
        raise ValueError("top_k must be at least 1")
    terms = tokenize(query)
    if not terms:
        raise EmptyQuery(f"no content terms in query {query!r}")
    scores = bm25_scores(index, terms)
    boosted = title_matches(index, query)
    boosted_set = set(boosted)

    def rank(ids):
        return sorted(ids, key=lambda d: (-scores.get(d, 0.0), d))

    ranked = rank(boosted)
    remaining = [d for d in scores if d not in boosted_set]
    ranked += rank(remaining)
    out = ranked[:top_k]
    return [(index.paragraphs[d], scores.get(d, 0.0)) for d in out]


# ---------------------------------------------------------------------------
# Index persistence and corpus ingestion

INDEX_FORMAT_VERSION = 1


def save_index(index: Bm25Index, path: str | Path) -> None:
    body = {
        "format_version": INDEX_FORMAT_VERSION,
        "k1": index.k1,
        "b": index.b,
        "paragraphs": [
            {"doc_id": p.doc_id, "title": p.title, "text": p.text}
            for p in sorted(index.paragraphs.values(), key=lambda p: p.doc_id)
        ],
    }
    Path(path).write_text(json.dumps(body, sort_keys=True))


def load_index(path: str | Path) -> Bm25Index:
    body = json.loads(Path(path).read_text())
    version = body.get("format_version")
    if version != INDEX_FORMAT_VERSION:
        raise IndexFormatError(f"unsupported index format version {version!r}")
    corpus = [Paragraph(title=r["title"], text=r["text"], doc_id=r["doc_id"])
              for r in body["paragraphs"]]
    return build_index(corpus, k1=body["k1"], b=body["b"])


def load_corpus_jsonl(path: str | Path) -> list[Paragraph]:
    """One JSON object per line: {"title", "text", optional "doc_id"}."""
    corpus = []
    for i, line in enumerate(Path(path).read_text().splitlines()):
        if not line.strip():
            continue
        record = json.loads(line)
        corpus.append(Paragraph(
            title=record["title"], text=record["text"],
            doc_id=record.get("doc_id", f"doc-{i:06d}")))
    return corpus


# ---------------------------------------------------------------------------
# Hop findings and two-stage hop validation


@dataclass(frozen=True)
class HopFinding:
    sub_question: str
    cited_title: str
    finding_text: str
    bridge_entity: str | None = None


@dataclass(frozen=True)
class HopValidation:
    verdict: ValidationVerdict
    corrected_title: str | None = None
    verifier_calls: int = 0


def _resolve_title(cited: str, available: Sequence[Paragraph],
                   cache: Mapping[str, Sequence[Paragraph]]) -> Paragraph | None:
    lowered = cited.lower().strip()
    for para in available:
        if para.title.lower() == lowered:
            return para
    for para in available:
        if lowered and (lowered in para.title.lower() or para.title.lower() in lowered):
            return para
    for results in cache.values():
        for para in results:
            if para.title.lower() == lowered:
                return para
        for para in results:
            if lowered and (lowered in para.title.lower() or para.title.lower() in lowered):
                return para
    return None


def _content_words(text: str) -> list[str]:
    return [w for w in tokenize(text) if len(w) >= 4]


def rank_by_keyword_overlap(finding_text: str, paragraphs: Sequence[Paragraph]) -> list[Paragraph]:
    """Order candidate paragraphs by overlap with the finding's content words."""
    words = set(_content_words(finding_text))
    scored = []
    for para in paragraphs:
        text_words = set(tokenize(para.text))
        scored.append((len(words & text_words), para))
    scored.sort(key=lambda entry: (-entry[0], entry[1].doc_id))
    return [para for _, para in scored]


def validate_hop(
    finding: HopFinding,
    available: Sequence[Paragraph],
    cache: Mapping[str, Sequence[Paragraph]],
    verifier: Callable[[HopFinding, Paragraph], bool],
) -> HopValidation:
    """Two-stage hop verification.

    Stage one rejects negation-phrased findings outright (before any
    verifier call), resolves the cited title (exact, substring, then search
    cache), and asks the verifier.  Stage two ranks every accumulated
    paragraph by keyword overlap with the finding and submits the top
    candidate; on success the finding is accepted with the corrected title.
    """
    lowered = finding.finding_text.lower()
    for phrase in NEGATION_PHRASES:
        if phrase in lowered:
            return HopValidation(
                verdict=ValidationVerdict(k=0, reason=f"finding contains negation phrase {phrase!r}"),
                verifier_calls=0)
    if not finding.finding_text.strip():
        return HopValidation(
            verdict=ValidationVerdict(k=0, reason="empty finding"), verifier_calls=0)

    calls = 0
    resolved = _resolve_title(finding.cited_title, available, cache)
    if resolved is not None:
        calls += 1
        if verifier(finding, resolved):
            return HopValidation(
                verdict=ValidationVerdict(k=1, reason=f"supported by {resolved.title!r}"),
                corrected_title=resolved.title, verifier_calls=calls)

    pool: list[Paragraph] = list(available)
    seen = {p.doc_id for p in pool}
    for results in cache.values():
        for para in results:
            if para.doc_id not in seen:
                seen.add(para.doc_id)
                pool.append(para)
    candidates = rank_by_keyword_overlap(finding.finding_text, pool)
    skip_id = resolved.doc_id if resolved is not None else None
    top = next((c for c in candidates if c.doc_id != skip_id), None)
    if top is not None:
        calls += 1
        if verifier(finding, top):
            return HopValidation(
                verdict=ValidationVerdict(
                    k=1, reason=f"fallback match accepted with corrected title {top.title!r}"),
                corrected_title=top.title, verifier_calls=calls)
    return HopValidation(
        verdict=ValidationVerdict(k=0, reason="no paragraph supports the finding"),
        verifier_calls=calls)


# ---------------------------------------------------------------------------
# Answer validation


def _normalize(text: str) -> str:
    return " ".join(tokenize(text, drop_stopwords=False))


def validate_answer(
    answer: str,
    question: str,
    hop_chain: Sequence[HopFinding],
    strict: bool = False,
    goal_follows: bool = True,
) -> ValidationVerdict:
    """Reject garbage and, in strict mode, structurally implausible answers.

    Strict mode additionally rejects answers already present in the question,
    intermediate bridge entities, answers over the word limit, and type
    mismatches for "when" questions.  A passing answer certifies the answer
    predicate and, when the goal predicate immediately follows, the goal too
    (k = 2).
    """
    normalized = _normalize(answer)
    if not normalized:
        return ValidationVerdict(k=0, reason="empty answer")
    lowered = answer.lower()
    for phrase in GARBAGE_ANSWERS:
        if phrase in lowered:
            return ValidationVerdict(k=0, reason=f"garbage answer ({phrase!r})")
    if strict:
        if normalized and normalized in _normalize(question):
            return ValidationVerdict(k=0, reason="answer is already present in the question")
        bridges = {_normalize(h.bridge_entity) for h in hop_chain[:-1]
                   if h.bridge_entity}
        if normalized in bridges:
            return ValidationVerdict(k=0, reason="answer is an intermediate bridge entity")
        if len(answer.split()) > MAX_ANSWER_WORDS:
            return ValidationVerdict(
                k=0, reason=f"answer exceeds {MAX_ANSWER_WORDS} words")
        if _is_when_question(question) and not _looks_temporal(answer):
            return ValidationVerdict(k=0, reason="non-temporal answer to a 'when' question")
    k = 2 if goal_follows else 1
    return ValidationVerdict(k=k, reason="answer passed the filters")


def _is_when_question(question: str) -> bool:
    words = tokenize(question, drop_stopwords=False)
    return bool(words) and words[0] == "when"


def _looks_temporal(answer: str) -> bool:
    if any(ch.isdigit() for ch in answer):
        return True
    lowered = answer.lower()
    return any(month in lowered for month in MONTHS)


# ---------------------------------------------------------------------------
# Escalating search diversity


def extract_entities(text: str) -> str:
    """Capitalized token runs plus quoted spans, joined as one query."""
    parts = re.findall(r'"([^"]+)"', text)
    run: list[str] = []
    for word in re.findall(r"[A-Za-z0-9']+", text):
        if word[0].isupper():
            run.append(word)
        else:
            if len(run) > 0:
                parts.append(" ".join(run))
            run = []
    if run:
        parts.append(" ".join(run))
    # drop leading question words that happen to be capitalized
    cleaned = [p for p in parts if p.lower() not in
               ("who", "what", "when", "where", "which", "why", "how")]
    out: list[str] = []
    for part in cleaned:
        if part not in out:
            out.append(part)
    return " ".join(out)


def escalate_query(
    sub_question: str,
    tried_queries: Sequence[str],
    guesser: Callable[[str], str] | None = None,
    generate: Callable[[str, Sequence[str]], str] | None = None,
) -> str:
    """Pick the next search query with escalating diversity.

    The first four attempts use generated queries (the sub-question itself
    when no generator is supplied); after four failures the query falls back
    to extracted entities only; after six the guesser's answer guess is
    searched directly.
    """
    attempt = len(tried_queries)
    if attempt < ENTITY_QUERY_AFTER:
        if generate is not None:
            return generate(sub_question, tried_queries)
        return sub_question
    if attempt < GUESS_QUERY_AFTER:
        entities = extract_entities(sub_question)
        return entities or sub_question
    if guesser is None:
        raise GuesserUnavailable(
            f"attempt {attempt + 1} needs an answer guesser and none is configured")
    return guesser(sub_question)


# ---------------------------------------------------------------------------
# Hop plans and the multi-hop episode adapter


@dataclass(frozen=True)
class HopPlanSpec:
    """A multi-hop question decomposed into 2-4 sub-questions."""

    question: str
    sub_questions: tuple[str, ...]
    strict: bool = False
    task_id: str = ""

    def __post_init__(self):
        if not 2 <= len(self.sub_questions) <= 4:
            raise ValueError("hop count must be between 2 and 4")

    @property
    def hop_count(self) -> int:
        return len(self.sub_questions)


def build_hop_plan(spec: HopPlanSpec) -> PlanTail:
    """Hop predicates in order, then the answer predicate, then the goal."""
    preds = [
        Predicate(id=f"hop-{i + 1}", kind="hop",
                  text=f"Hop {i + 1} is resolved: {q}")
        for i, q in enumerate(spec.sub_questions)
    ]
    preds.append(Predicate(id="answer", kind="answer",
                           text="A validated final answer is synthesized."))
    preds.append(Predicate(id="goal", kind="goal", is_goal=True,
                           text="The final answer is submitted."))
    return PlanTail(tuple(preds))


@dataclass(frozen=True)
class MultihopState:
    """Adapter state snapshot: certified findings, tried queries, answer."""

    findings: tuple[HopFinding, ...] = ()
    tried_queries: tuple[tuple[str, tuple[str, ...]], ...] = ()
    answer: str | None = None

    def tried_for(self, predicate_id: str) -> tuple[str, ...]:
        for pid, queries in self.tried_queries:
            if pid == predicate_id:
                return queries
        return ()

    def to_jsonable(self) -> dict:
        return {
            "findings": [
                {"sub_question": f.sub_question, "cited_title": f.cited_title,
                 "finding_text": f.finding_text, "bridge_entity": f.bridge_entity}
                for f in self.findings
            ],
            "tried_queries": {pid: list(qs) for pid, qs in self.tried_queries},
            "answer": self.answer,
        }


class MultihopEnvironment:
    """Holds the retrieval caches and certified findings for one episode.

    In open mode queries run against the BM25 index; in distractor mode
    retrieval is disabled and only the provided paragraphs are available.
    Retrieved paragraphs accumulate in the search cache across hops, so later
    hops can draw on earlier evidence.
    """

    def __init__(self, index: Bm25Index | None = None,
                 provided: Sequence[Paragraph] = (),
                 mode: str = "open", top_k: int = DEFAULT_TOP_K):
        if mode not in ("open", "distractor"):
            raise ValueError(f"unknown mode {mode!r}")
        if mode == "open" and index is None:
            raise ValueError("open mode requires an index")
        self.index = index
        self.provided = tuple(provided)
        self.mode = mode
        self.top_k = top_k
        self.cache: dict[str, tuple[Paragraph, ...]] = {}
        self.state = MultihopState()
        self.pending_finding: HopFinding | None = None
        self.pending_answer: str | None = None

    def snapshot(self) -> MultihopState:
        return self.state

    def final_answer(self):
        return self.state.answer

    def known_paragraphs(self) -> list[Paragraph]:
        out = list(self.provided)
        seen = {p.doc_id for p in out}
        for results in self.cache.values():
            for para in results:
                if para.doc_id not in seen:
                    seen.add(para.doc_id)
                    out.append(para)
        return out

    def _record_query(self, predicate_id: str, query: str) -> None:
        tried = dict(self.state.tried_queries)
        tried[predicate_id] = tried.get(predicate_id, ()) + (query,)
        self.state = replace(self.state, tried_queries=tuple(sorted(tried.items())))

    def step(self, action: Action) -> Observation:
        payload = action.payload
        if payload["kind"] == "hop":
            query = payload["query"]
            self._record_query(payload["predicate"], query)
            retrieved: tuple[Paragraph, ...] = ()
            if self.mode == "open":
                try:
                    results = search(self.index, query, self.top_k)
                    retrieved = tuple(p for p, _ in results)
                except EmptyQuery:
                    retrieved = ()
                self.cache[query] = retrieved
            finding = payload["finding"]
            self.pending_finding = HopFinding(
                sub_question=finding["sub_question"],
                cited_title=finding["cited_title"],
                finding_text=finding["finding_text"],
                bridge_entity=finding.get("bridge_entity"),
            )
            return Observation(
                payload={"kind": "hop", "retrieved": [p.title for p in retrieved],
                         "query": query},
                rendered=f"retrieved {len(retrieved)} paragraph(s) for {query!r}",
            )
        if payload["kind"] == "answer":
            self.pending_answer = payload["answer"]
            return Observation(
                payload={"kind": "answer", "answer": payload["answer"]},
                rendered=f"proposed answer: {payload['answer']}",
            )
        raise ValueError(f"unknown action kind {payload['kind']!r}")

    def commit_finding(self, corrected_title: str | None) -> None:
        finding = self.pending_finding
        if corrected_title:
            finding = replace(finding, cited_title=corrected_title)
        self.state = replace(self.state, findings=self.state.findings + (finding,))
        self.pending_finding = None

    def commit_answer(self) -> None:
        self.state = replace(self.state, answer=self.pending_answer)
        self.pending_answer = None


def multihop_operator_set(
    env: MultihopEnvironment,
    plan_spec: HopPlanSpec,
    finding_for: Callable[[str, MultihopState], HopFinding],
    verifier: Callable[[HopFinding, Paragraph], bool],
    answer_for: Callable[[MultihopState], str] | None = None,
    guesser: Callable[[str], str] | None = None,
) -> OperatorSet:
    """Scripted multi-hop operators; the LLM-shaped pieces are injectable.

    ``finding_for`` maps (sub-question, state) to the finding to commit,
    ``answer_for`` synthesizes the final answer from certified findings
    (default: the last finding's bridge entity or text).
    """
    plan = build_hop_plan(plan_spec).predicates
    order = {p.id: i for i, p in enumerate(plan)}
    sub_question_of = {f"hop-{i + 1}": q for i, q in enumerate(plan_spec.sub_questions)}

    def propose(state, goal):
        if isinstance(state, Predicate):
            return plan[order[state.id] + 1]
        return plan[0]

    def realize(state: MultihopState, target: Predicate) -> Action:
        if target.kind == "hop":
            sub_q = sub_question_of[target.id]
            query = escalate_query(sub_q, state.tried_for(target.id), guesser=guesser)
            finding = finding_for(sub_q, state)
            return Action(
                payload={
                    "kind": "hop", "predicate": target.id, "query": query,
                    "finding": {
                        "sub_question": finding.sub_question,
                        "cited_title": finding.cited_title,
                        "finding_text": finding.finding_text,
                        "bridge_entity": finding.bridge_entity,
                    },
                },
                rendered=f"search {query!r} and extract a finding for {target.id}",
            )
        if target.kind == "answer":
            if answer_for is not None:
                answer = answer_for(state)
            elif state.findings:
                last = state.findings[-1]
                answer = last.bridge_entity or last.finding_text
            else:
                answer = ""
            return Action(payload={"kind": "answer", "answer": answer},
                          rendered=f"submit answer {answer!r}")
        raise ValueError(f"unexpected predicate kind {target.kind!r}")

    def validate(plan_tail, observation: Observation) -> ValidationVerdict:
        payload = observation.payload
        if payload["kind"] == "hop":
            result = validate_hop(
                env.pending_finding, env.known_paragraphs(), env.cache, verifier)
            if result.verdict.k >= 1:
                env.commit_finding(result.corrected_title)
            return result.verdict
        if payload["kind"] == "answer":
            goal_follows = len(plan_tail) >= 2 and plan_tail[1].is_goal
            verdict = validate_answer(
                payload["answer"], plan_spec.question, env.state.findings,
                strict=plan_spec.strict, goal_follows=goal_follows)
            if verdict.k >= 1:
                env.commit_answer()
            return verdict
        return ValidationVerdict(k=0, reason="unknown observation kind")

    def replan(state, goal, trajectory):
        # certified hop findings are never regenerated; retry the open tail
        return trajectory.remaining()

    return OperatorSet(propose=propose, realize=realize, validate=validate, replan=replan)
