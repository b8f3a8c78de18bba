"""Chat-completion client and the LLM-backed operator set.

The client speaks a plain chat-completion wire protocol over HTTP and
retries transport faults with bounded exponential backoff.  Prompt templates
live in package data so adapters can override them without code changes; all
prompts are zero-shot and the retry prompts carry the append-only attempt
history so the model avoids repeating failed choices.
"""

from __future__ import annotations

import hashlib
import os
import time
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Sequence

import httpx

from .core import Action, AttemptRecord, Predicate, ValidationVerdict
from .operators import OperatorSet, ParseFailure, tolerant_parse


class TransportError(Exception):
    """The endpoint stayed unreachable after all retries."""


class ApiKeyMissing(Exception):
    def __init__(self, var_name: str):
        super().__init__(f"environment variable {var_name!r} is not set")
        self.var_name = var_name


@dataclass(frozen=True)
class LlmEndpoint:
    """Where and how to reach the model; the key is env-var indirection."""

    url: str
    model: str
    api_key_env: str = ""
    temperature: float = 0.0


class LlmClient:
    """Minimal chat-completion client with bounded retry.

    ``transport`` and ``sleep`` are injectable for tests; retries cover
    connection errors and 5xx responses, doubling the wait from
    ``backoff_base`` seconds.
    """

    def __init__(self, endpoint: LlmEndpoint, max_retries: int = 3,
                 backoff_base: float = 1.0, transport=None, sleep=time.sleep):
        self.endpoint = endpoint
        self.max_retries = max_retries
        self.backoff_base = backoff_base
        self.sleep = sleep
        self._client = httpx.Client(transport=transport, timeout=60.0)

    def _headers(self) -> dict:
        headers = {"Content-Type": "application/json"}
        if self.endpoint.api_key_env:
            key = os.environ.get(self.endpoint.api_key_env)
            if not key:
                raise ApiKeyMissing(self.endpoint.api_key_env)
            headers["Authorization"] = f"Bearer {key}"
        return headers

    def complete(self, messages: Sequence[dict], temperature: float | None = None) -> str:
        body = {
            "model": self.endpoint.model,
            "messages": list(messages),
            "temperature": self.endpoint.temperature if temperature is None else temperature,
            "response_format": {"type": "json_object"},
        }
        wait = self.backoff_base
        last_error = None
        for attempt in range(self.max_retries + 1):
            if attempt:
                self.sleep(wait)
                wait *= 2
            try:
                response = self._client.post(self.endpoint.url, json=body, headers=self._headers())
            except httpx.HTTPError as exc:
                last_error = exc
                continue
            if response.status_code >= 500:
                last_error = RuntimeError(f"server error {response.status_code}")
                continue
            if response.status_code != 200:
                raise TransportError(f"endpoint returned {response.status_code}: {response.text[:200]}")
            data = response.json()
            return data["choices"][0]["message"]["content"]
        raise TransportError(f"transport failed after {self.max_retries} retries: {last_error}")


def llm_call(client: LlmClient, prompt_parts: Sequence[dict], temperature: float | None = None) -> str:
    """Send assembled prompt messages and return the raw model text."""
    return client.complete(prompt_parts, temperature=temperature)


# ---------------------------------------------------------------------------
# Prompt assembly

PROMPT_NAMES = ("propose", "realize", "validate", "replan")


class PromptLibrary:
    """Loads prompt templates from package data or an override directory."""

    def __init__(self, override_dir: str | Path | None = None):
        self.override_dir = Path(override_dir) if override_dir else None

    def template(self, name: str) -> str:
        if self.override_dir is not None:
            candidate = self.override_dir / f"{name}.txt"
            if candidate.exists():
                return candidate.read_text()
        return resources.files("plancert.data").joinpath("prompts").joinpath(f"{name}.txt").read_text()

    def render(self, name: str, **fields) -> str:
        return self.template(name).format(**fields)


def render_attempt_history(attempts: Sequence[AttemptRecord]) -> str:
    """Format prior attempts (action + rejection reason) for retry prompts."""
    if not attempts:
        return "(no prior attempts)"
    lines = []
    for att in attempts:
        outcome = "certified" if att.verdict.k >= 1 else "rejected"
        lines.append(f"- attempt {att.step_index}: action={att.action.rendered!r} "
                     f"-> {outcome}: {att.reason}")
    return "\n".join(lines)


def _predicate_id(text: str) -> str:
    return "p-" + hashlib.sha1(text.encode("utf-8")).hexdigest()[:8]


def _render_state(state) -> str:
    if isinstance(state, Predicate):
        return state.text
    return str(state)


def llm_operator_set(client: LlmClient, prompts: PromptLibrary | None = None,
                     history=None) -> OperatorSet:
    """Generic LLM-backed operators over the chat-completion protocol.

    ``history`` is an optional callable returning the attempt records to
    surface in retry and replan prompts (adapters typically close over the
    running episode trace).
    """
    prompts = prompts or PromptLibrary()

    def attempt_block():
        return render_attempt_history(history() if history else ())

    def propose(state, goal):
        text = llm_call(client, [
            {"role": "user", "content": prompts.render(
                "propose", state=_render_state(state), goal=goal.text)},
        ])
        record = tolerant_parse(text, {"text": str, "is_goal": bool})
        if record["is_goal"]:
            return goal
        return Predicate(id=_predicate_id(record["text"]), text=record["text"], kind="llm")

    def realize(state, target):
        text = llm_call(client, [
            {"role": "user", "content": prompts.render(
                "realize", state=_render_state(state), target=target.text,
                history=attempt_block())},
        ])
        record = tolerant_parse(text, {"action": str})
        return Action(payload={"action": record["action"]}, rendered=record["action"])

    def validate(plan_tail, observation):
        tail_text = "\n".join(f"{i + 1}. {p.text}" for i, p in enumerate(plan_tail))
        text = llm_call(client, [
            {"role": "user", "content": prompts.render(
                "validate", plan_tail=tail_text, observation=observation.rendered)},
        ])
        try:
            record = tolerant_parse(text, {"k": int, "reason": str})
        except ParseFailure as exc:
            return ValidationVerdict(k=0, reason=f"unparseable validator output ({exc.field})")
        k = max(0, min(record["k"], len(plan_tail)))
        return ValidationVerdict(k=k, reason=record["reason"])

    def replan(state, goal, trajectory):
        text = llm_call(client, [
            {"role": "user", "content": prompts.render(
                "replan", state=_render_state(state), goal=goal.text,
                history=attempt_block())},
        ])
        record = tolerant_parse(text, {"predicates": list})
        tail = []
        for entry in record["predicates"]:
            body = entry.get("text", "") if isinstance(entry, dict) else str(entry)
            if not body:
                continue
            tail.append(Predicate(id=_predicate_id(body), text=body, kind="llm"))
        tail.append(goal)
        return tail

    return OperatorSet(propose=propose, realize=realize, validate=validate, replan=replan)
