"""Chat-completion client behavior over mock transports."""

from __future__ import annotations

import json

import httpx
import pytest

from plancert.core import Action, AttemptRecord, Predicate, ValidationVerdict
from plancert.llm import (
    ApiKeyMissing,
    LlmClient,
    LlmEndpoint,
    PromptLibrary,
    TransportError,
    llm_call,
    llm_operator_set,
    render_attempt_history,
)

ENDPOINT = LlmEndpoint(url="https://llm.invalid/v1/chat", model="test-model")


def _client_with(handler, **kwargs) -> LlmClient:
    transport = httpx.MockTransport(handler)
    return LlmClient(ENDPOINT, transport=transport, sleep=lambda s: None, **kwargs)


def _completion(content: str) -> httpx.Response:
    return httpx.Response(200, json={"choices": [{"message": {"content": content}}]})


def test_mock_endpoint_echoes_completion():
    client = _client_with(lambda request: _completion("canned"))
    assert llm_call(client, [{"role": "user", "content": "hi"}]) == "canned"


def test_request_wire_format():
    captured = {}

    def handler(request: httpx.Request) -> httpx.Response:
        captured.update(json.loads(request.content))
        return _completion("ok")

    client = _client_with(handler)
    client.complete([{"role": "user", "content": "hello"}])
    assert captured["model"] == "test-model"
    assert captured["messages"] == [{"role": "user", "content": "hello"}]
    assert captured["temperature"] == 0.0
    assert captured["response_format"] == {"type": "json_object"}


def test_server_errors_exhaust_retries():
    calls = []

    def handler(request):
        calls.append(1)
        return httpx.Response(500, text="boom")

    client = _client_with(handler)
    with pytest.raises(TransportError):
        client.complete([{"role": "user", "content": "hi"}])
    assert len(calls) == 4  # initial call + 3 retries


def test_retry_recovers_after_transient_error():
    calls = []

    def handler(request):
        calls.append(1)
        if len(calls) < 3:
            return httpx.Response(500, text="boom")
        return _completion("recovered")

    client = _client_with(handler)
    assert client.complete([{"role": "user", "content": "hi"}]) == "recovered"


def test_backoff_doubles():
    waits = []
    transport = httpx.MockTransport(lambda request: httpx.Response(500))
    client = LlmClient(ENDPOINT, transport=transport, sleep=waits.append, backoff_base=1.0)
    with pytest.raises(TransportError):
        client.complete([])
    assert waits == [1.0, 2.0, 4.0]


def test_missing_api_key_env():
    endpoint = LlmEndpoint(url="https://llm.invalid/v1/chat", model="m",
                           api_key_env="PLANCERT_TEST_KEY_UNSET")
    client = LlmClient(endpoint, transport=httpx.MockTransport(lambda r: _completion("x")))
    with pytest.raises(ApiKeyMissing):
        client.complete([])


def test_api_key_header(monkeypatch):
    monkeypatch.setenv("PLANCERT_TEST_KEY", "sekrit")
    seen = {}

    def handler(request):
        seen["auth"] = request.headers.get("authorization")
        return _completion("ok")

    endpoint = LlmEndpoint(url="https://llm.invalid/v1/chat", model="m",
                           api_key_env="PLANCERT_TEST_KEY")
    client = LlmClient(endpoint, transport=httpx.MockTransport(handler))
    client.complete([])
    assert seen["auth"] == "Bearer sekrit"


# ---------------------------------------------------------------------------
# prompt assembly


def _attempt(step: int, rendered: str, reason: str) -> AttemptRecord:
    return AttemptRecord(
        target_predicate_id="p1",
        action=Action(payload=None, rendered=rendered),
        verdict=ValidationVerdict(k=0, reason=reason),
        reason=reason,
        step_index=step,
    )


def test_retry_prompt_contains_prior_attempts():
    history = [
        _attempt(0, "pick hotel-a", "over budget"),
        _attempt(1, "pick hotel-b", "room type mismatch"),
    ]
    captured = {}

    def handler(request):
        captured["body"] = json.loads(request.content)
        return _completion('{"action": "pick hotel-c"}')

    client = _client_with(handler)
    ops = llm_operator_set(client, history=lambda: history)
    action = ops.realize("state", Predicate(id="p1", text="a hotel is booked"))
    prompt = captured["body"]["messages"][0]["content"]
    assert "pick hotel-a" in prompt and "over budget" in prompt
    assert "pick hotel-b" in prompt and "room type mismatch" in prompt
    assert action.rendered == "pick hotel-c"


def test_render_attempt_history_empty():
    assert "no prior attempts" in render_attempt_history(())


def test_prompt_templates_load_and_format():
    prompts = PromptLibrary()
    for name in ("propose", "realize", "validate", "replan"):
        assert prompts.template(name)
    rendered = prompts.render("validate", plan_tail="1. x", observation="obs")
    assert "1. x" in rendered and "obs" in rendered


def test_prompt_override_directory(tmp_path):
    (tmp_path / "validate.txt").write_text("OVERRIDE {plan_tail} / {observation}")
    prompts = PromptLibrary(override_dir=tmp_path)
    assert prompts.render("validate", plan_tail="t", observation="o") == "OVERRIDE t / o"
    # names without an override still come from package data
    assert "JSON" in prompts.template("propose")


# ---------------------------------------------------------------------------
# llm operator set parse handling


def test_llm_validate_parses_and_clamps():
    client = _client_with(lambda r: _completion('{"k": 99, "reason": "sure"}'))
    ops = llm_operator_set(client)
    tail = (Predicate(id="a", text="a"), Predicate(id="g", text="g", is_goal=True))
    from plancert.core import Observation
    verdict = ops.validate(tail, Observation(payload=None, rendered="obs"))
    assert verdict.k == 2  # clamped to the remaining plan length


def test_llm_validate_unparseable_is_a_rejection():
    client = _client_with(lambda r: _completion("gibberish with no fields"))
    ops = llm_operator_set(client)
    tail = (Predicate(id="g", text="g", is_goal=True),)
    from plancert.core import Observation
    verdict = ops.validate(tail, Observation(payload=None, rendered="obs"))
    assert verdict.k == 0
    assert "unparseable" in verdict.reason


def test_llm_propose_returns_goal_when_flagged():
    client = _client_with(lambda r: _completion('{"text": "done", "is_goal": true}'))
    ops = llm_operator_set(client)
    goal = Predicate(id="g", text="goal", is_goal=True)
    assert ops.propose("start", goal) is goal


def test_llm_replan_appends_goal():
    client = _client_with(lambda r: _completion('{"predicates": ["step one", "step two"]}'))
    ops = llm_operator_set(client)
    goal = Predicate(id="g", text="goal", is_goal=True)
    tail = ops.replan("state", goal, None)
    assert [p.text for p in tail[:-1]] == ["step one", "step two"]
    assert tail[-1] is goal
