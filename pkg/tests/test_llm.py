"""Chat client: stub determinism, wire defaults, retry discipline."""

from __future__ import annotations

import pytest

from simrag.errors import (
    BadStatusError,
    InvalidConfigError,
    MalformedResponseError,
    UnreachableError,
)
from simrag.llm import (
    LlmRequest,
    ProviderConfig,
    ProviderKind,
    STUB_MARKER,
    generate,
    list_models,
)

STUB = ProviderConfig(kind=ProviderKind.STUB)


def fast_http(url):
    return ProviderConfig(kind=ProviderKind.HTTP_CHAT, base_url=url,
                          retry_max=2, retry_backoff_ms=1)


def request_with(messages, **kwargs):
    return LlmRequest(model="m", messages=messages, **kwargs)


class TestRequestDefaults:
    def test_paper_anchored_defaults(self):
        request = request_with([{"role": "user", "content": "hi"}])
        body = request.to_wire_body()
        assert body["options"]["temperature"] == 0.0
        assert body["options"]["num_ctx"] == 8192

    def test_message_order_preserved(self):
        messages = [
            {"role": "system", "content": "s"},
            {"role": "user", "content": "u1"},
            {"role": "assistant", "content": "a1"},
            {"role": "user", "content": "u2"},
        ]
        assert request_with(messages).to_wire_body()["messages"] == messages

    def test_empty_messages_rejected(self):
        with pytest.raises(InvalidConfigError):
            request_with([])

    def test_system_must_lead(self):
        with pytest.raises(InvalidConfigError):
            request_with([
                {"role": "user", "content": "u"},
                {"role": "system", "content": "s"},
            ])


class TestStub:
    def test_deterministic(self):
        request = request_with([{"role": "user", "content": "hello there"}])
        assert generate(request, STUB).content == generate(request, STUB).content

    def test_embeds_context_headers_in_order(self):
        messages = [
            {"role": "system", "content": "sys\n[context:documentation] wiki.md#0\nbody\n[context:api-reference] api.md#2\nbody"},
            {"role": "user", "content": "question?"},
        ]
        content = generate(request_with(messages), STUB).content
        lines = content.splitlines()
        assert lines[0] == STUB_MARKER
        assert lines[1] == "question?"
        assert lines[2] == "[context:documentation] wiki.md#0"
        assert lines[3] == "[context:api-reference] api.md#2"

    def test_last_user_message_truncated_to_64(self):
        long_prompt = "x" * 100
        content = generate(
            request_with([{"role": "user", "content": long_prompt}]), STUB
        ).content
        assert "x" * 64 in content
        assert "x" * 65 not in content

    def test_list_models(self):
        assert list_models(STUB) == ["stub"]


class TestHttp:
    def test_happy_path(self, fake_server):
        url, handler = fake_server
        handler.script.append((200, {"message": {"content": "fine"}, "model": "m2"}))
        response = generate(request_with([{"role": "user", "content": "q"}]), fast_http(url))
        assert response.content == "fine"
        assert response.model == "m2"
        sent = handler.requests[0]
        assert sent["path"] == "/chat"
        assert sent["body"]["options"] == {"temperature": 0.0, "num_ctx": 8192}

    def test_retries_5xx_then_succeeds(self, fake_server):
        url, handler = fake_server
        handler.script.extend([
            (500, {}), (500, {}), (200, {"message": {"content": "ok"}}),
        ])
        response = generate(request_with([{"role": "user", "content": "q"}]), fast_http(url))
        assert response.content == "ok"
        assert len(handler.requests) == 3  # initial + 2 retries

    def test_retry_budget_exhausted(self, fake_server):
        url, handler = fake_server
        handler.script.extend([(500, {})] * 5)
        with pytest.raises(UnreachableError):
            generate(request_with([{"role": "user", "content": "q"}]), fast_http(url))
        assert len(handler.requests) == 3  # 1 + retry_max, never more

    def test_4xx_never_retried(self, fake_server):
        url, handler = fake_server
        handler.script.append((404, {}))
        with pytest.raises(BadStatusError) as excinfo:
            generate(request_with([{"role": "user", "content": "q"}]), fast_http(url))
        assert excinfo.value.status_code == 404
        assert len(handler.requests) == 1

    def test_malformed_response(self, fake_server):
        url, handler = fake_server
        handler.script.append((200, {"unexpected": True}))
        with pytest.raises(MalformedResponseError):
            generate(request_with([{"role": "user", "content": "q"}]), fast_http(url))

    def test_unreachable_host(self):
        provider = ProviderConfig(kind=ProviderKind.HTTP_CHAT,
                                  base_url="http://127.0.0.1:9", retry_max=0,
                                  retry_backoff_ms=1)
        with pytest.raises(UnreachableError):
            generate(request_with([{"role": "user", "content": "q"}]), provider)

    def test_list_models_from_server(self, fake_server):
        url, handler = fake_server
        handler.script.append((200, ["llama", "gemma"]))
        assert list_models(fast_http(url)) == ["llama", "gemma"]

    def test_list_models_dict_shape(self, fake_server):
        url, handler = fake_server
        handler.script.append((200, {"models": ["a"]}))
        assert list_models(fast_http(url)) == ["a"]

    def test_list_models_unreachable(self):
        provider = ProviderConfig(kind=ProviderKind.HTTP_CHAT,
                                  base_url="http://127.0.0.1:9")
        with pytest.raises(UnreachableError):
            list_models(provider)

    def test_http_requires_base_url(self, monkeypatch):
        monkeypatch.delenv("SIMRAG_LLM_URL", raising=False)
        with pytest.raises(InvalidConfigError):
            ProviderConfig(kind=ProviderKind.HTTP_CHAT)

    def test_base_url_from_env(self, monkeypatch):
        monkeypatch.setenv("SIMRAG_LLM_URL", "http://localhost:11434/")
        provider = ProviderConfig(kind=ProviderKind.HTTP_CHAT)
        assert provider.base_url == "http://localhost:11434"
