"""Provider-neutral chat completions: streamed token deltas, a deterministic
scripted backend for offline runs, and an HTTP backend speaking the standard
chat-completions SSE wire format."""

from __future__ import annotations

import asyncio
import json
import logging
from dataclasses import dataclass, replace
from typing import AsyncIterator, Protocol, Sequence

import httpx

logger = logging.getLogger(__name__)

# Fragment width used by the scripted backend (and test stubs) so streamed
# output is deterministic and re-joinable.
CHUNK_CHARS = 12

DEFAULT_TIMEOUT_S = 60.0
USER_SPEAKER = "user"


class ProviderError(Exception):
    """Base class for typed provider failures."""


class ProviderTimeout(ProviderError):
    pass


class ProviderAuthError(ProviderError):
    pass


class ProviderRateLimited(ProviderError):
    def __init__(self, message: str, retry_after: float = 0.0):
        super().__init__(message)
        self.retry_after = retry_after


class ProviderTransientError(ProviderError):
    pass


class MalformedStreamError(ProviderError):
    pass


@dataclass(frozen=True)
class ProviderMessage:
    """One labeled message of assembled context. The label is a display name,
    or "user" for the human gardener."""

    speaker: str
    content: str


@dataclass(frozen=True)
class ProviderRequest:
    system_prompt: str
    messages: tuple[ProviderMessage, ...]
    temperature: float
    max_tokens: int
    model_name: str = ""

    def __post_init__(self):
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if self.max_tokens < 1:
            raise ValueError("max_tokens must be >= 1")


@dataclass(frozen=True)
class TokenDelta:
    """One streamed increment. After a final delta nothing else is emitted."""

    text: str
    is_final: bool


class ChatProvider(Protocol):
    def stream(self, request: ProviderRequest) -> AsyncIterator[TokenDelta]: ...


def split_fragments(text: str, width: int = CHUNK_CHARS) -> list[str]:
    """Fixed-width fragmentation; concatenation always equals the input."""
    return [text[i:i + width] for i in range(0, len(text), width)]


async def collect_reply(provider: ChatProvider, request: ProviderRequest) -> str:
    """Drain a stream into the complete reply text."""
    parts: list[str] = []
    async for delta in provider.stream(request):
        parts.append(delta.text)
        if delta.is_final:
            break
    return "".join(parts)


@dataclass(frozen=True)
class ScriptRule:
    """One scripted behavior: a literal substring matched against the last
    message content, mapping to either a canned reply or an injected fault."""

    match: str
    reply: str = ""
    error: str | None = None  # timeout | transport | auth | rate_limit | malformed


_ERROR_BY_NAME = {
    "timeout": ProviderTimeout,
    "transport": ProviderTransientError,
    "auth": ProviderAuthError,
    "rate_limit": ProviderRateLimited,
    "malformed": MalformedStreamError,
}

SCRIPT_ERROR_NAMES = tuple(_ERROR_BY_NAME)


class ScriptedProvider:
    """Deterministic offline backend.

    Rules are tried in order against the last message content; first match
    wins; unmatched requests get the default reply. Every request is recorded
    for assertions. Identical request sequences always produce identical reply
    sequences.
    """

    def __init__(self, rules: Sequence[ScriptRule] = (), default_reply: str = "Happy to help with your garden."):
        self.rules = list(rules)
        self.default_reply = default_reply
        self.requests: list[ProviderRequest] = []

    def rule_for(self, request: ProviderRequest) -> ScriptRule:
        last = request.messages[-1].content if request.messages else ""
        for rule in self.rules:
            if rule.match in last:
                return rule
        return ScriptRule(match="", reply=self.default_reply)

    async def stream(self, request: ProviderRequest) -> AsyncIterator[TokenDelta]:
        self.requests.append(request)
        rule = self.rule_for(request)
        if rule.error:
            raise _ERROR_BY_NAME[rule.error](f"scripted {rule.error} fault")
        for fragment in split_fragments(rule.reply):
            yield TokenDelta(fragment, False)
        yield TokenDelta("", True)


class OpenAICompatibleProvider:
    """HTTP backend for any endpoint speaking the chat-completions SSE format.

    The wire format has no multi-agent speaker field, so non-user speaker
    labels are folded into message content as a fixed "Name: " prefix.
    Retry policy: one retry on 429 (honoring Retry-After) or 5xx; auth errors,
    timeouts, and malformed streams fail immediately.
    """

    def __init__(
        self,
        endpoint: str,
        api_key: str,
        model_name: str,
        *,
        timeout_s: float = DEFAULT_TIMEOUT_S,
        client: httpx.AsyncClient | None = None,
    ):
        self.endpoint = endpoint.rstrip("/")
        self.api_key = api_key
        self.model_name = model_name
        self.timeout_s = timeout_s
        self._client = client
        self.last_retry_count = 0

    def build_payload(self, request: ProviderRequest) -> dict:
        messages = [{"role": "system", "content": request.system_prompt}]
        for msg in request.messages:
            if msg.speaker == USER_SPEAKER:
                messages.append({"role": "user", "content": msg.content})
            else:
                messages.append({"role": "assistant", "content": f"{msg.speaker}: {msg.content}"})
        return {
            "model": request.model_name or self.model_name,
            "messages": messages,
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
            "stream": True,
        }

    async def stream(self, request: ProviderRequest) -> AsyncIterator[TokenDelta]:
        payload = self.build_payload(request)
        self.last_retry_count = 0
        for attempt in (0, 1):
            yielded = False
            try:
                async for delta in self._stream_once(payload):
                    yielded = True
                    yield delta
                return
            except ProviderRateLimited as exc:
                # Never retry once output has been surfaced: that would duplicate it.
                if attempt == 1 or yielded:
                    raise
                self.last_retry_count += 1
                await asyncio.sleep(min(exc.retry_after, 10.0))
            except ProviderTransientError:
                if attempt == 1 or yielded:
                    raise
                self.last_retry_count += 1

    async def _stream_once(self, payload: dict) -> AsyncIterator[TokenDelta]:
        headers = {"Authorization": f"Bearer {self.api_key}"}
        url = f"{self.endpoint}/chat/completions"
        owned = self._client is None
        client = self._client or httpx.AsyncClient()
        try:
            async with client.stream(
                "POST", url, json=payload, headers=headers, timeout=self.timeout_s
            ) as resp:
                if resp.status_code in (401, 403):
                    raise ProviderAuthError(f"authentication rejected (HTTP {resp.status_code})")
                if resp.status_code == 429:
                    retry_after = float(resp.headers.get("retry-after", "0") or 0)
                    raise ProviderRateLimited("rate limited (HTTP 429)", retry_after=retry_after)
                if resp.status_code >= 500:
                    raise ProviderTransientError(f"server error (HTTP {resp.status_code})")
                if resp.status_code != 200:
                    raise ProviderError(f"unexpected HTTP {resp.status_code}")
                finished = False
                async for line in resp.aiter_lines():
                    if not line.startswith("data:"):
                        continue
                    data = line[len("data:"):].strip()
                    if data == "[DONE]":
                        finished = True
                        yield TokenDelta("", True)
                        break
                    try:
                        parsed = json.loads(data)
                    except json.JSONDecodeError as exc:
                        raise MalformedStreamError(f"undecodable stream chunk: {data[:80]!r}") from exc
                    choices = parsed.get("choices") or []
                    if choices:
                        content = (choices[0].get("delta") or {}).get("content")
                        if content:
                            yield TokenDelta(content, False)
                if not finished:
                    raise MalformedStreamError("stream ended without a completion marker")
        except httpx.TimeoutException as exc:
            raise ProviderTimeout(f"request timed out after {self.timeout_s}s") from exc
        except httpx.HTTPError as exc:
            raise ProviderTransientError(str(exc)) from exc
        finally:
            if owned:
                await client.aclose()


def request_with_extra_message(request: ProviderRequest, message: ProviderMessage) -> ProviderRequest:
    return replace(request, messages=request.messages + (message,))
