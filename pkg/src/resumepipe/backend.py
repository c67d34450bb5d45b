"""Chat-completion backends: a remote HTTP client and a deterministic mock.

Every agent call in the pipeline goes through :class:`ChatClient`, which adds
rate limiting, retry with jittered backoff, response caching, and a transcript
log. The mock backend is a pure function of the request, so offline runs are
byte-reproducible.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import random
import re
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

from .errors import ConfigError, ContractViolation, RetriesExhausted, TransportError

log = logging.getLogger(__name__)

REQUEST_TAGS = ("classify", "assess", "decide")

API_KEY_ENV_DEFAULT = "SCREEN_LLM_API_KEY"
BASE_URL_ENV = "SCREEN_LLM_BASE_URL"

_RETRYABLE_STATUS = {429, 500, 502, 503, 504}

_MOCK_SUMMARY_WORDS = 60


@dataclass(frozen=True)
class ChatRequest:
    system_text: str
    user_text: str
    max_new_tokens: int = 200
    sampling: bool = True
    stop_sequences: tuple[str, ...] = ()
    request_tag: str = "classify"

    def __post_init__(self) -> None:
        if self.max_new_tokens < 1:
            raise ContractViolation("max_new_tokens must be >= 1")
        if not self.user_text:
            raise ContractViolation("user_text must be non-empty")
        if self.request_tag not in REQUEST_TAGS:
            raise ContractViolation(f"unknown request_tag {self.request_tag!r}")


@dataclass(frozen=True)
class ChatResponse:
    text: str
    latency_ms: int
    backend_name: str
    token_usage: dict | None = None
    cached: bool = False


@dataclass(frozen=True)
class RetryPolicy:
    max_attempts: int = 3
    base_backoff_ms: int = 250


@dataclass
class BackendConfig:
    kind: str = "mock"  # mock | http_chat
    base_url: str = ""
    model_name: str = "mock"
    api_key_env: str = API_KEY_ENV_DEFAULT
    max_in_flight: int = 4
    retry: RetryPolicy = field(default_factory=RetryPolicy)
    cache_dir: str = ""

    def __post_init__(self) -> None:
        if self.kind not in ("mock", "http_chat"):
            raise ConfigError(f"unknown backend kind {self.kind!r}")
        if self.max_in_flight < 1:
            raise ConfigError("max_in_flight must be >= 1")

    def to_json(self) -> dict:
        return {
            "kind": self.kind,
            "base_url": self.base_url,
            "model_name": self.model_name,
            "api_key_env": self.api_key_env,
            "max_in_flight": self.max_in_flight,
            "retry": {"max_attempts": self.retry.max_attempts,
                      "base_backoff_ms": self.retry.base_backoff_ms},
            "cache_dir": self.cache_dir,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "BackendConfig":
        retry = obj.get("retry", {})
        return cls(
            kind=obj.get("kind", "mock"),
            base_url=obj.get("base_url", ""),
            model_name=obj.get("model_name", "mock"),
            api_key_env=obj.get("api_key_env", API_KEY_ENV_DEFAULT),
            max_in_flight=int(obj.get("max_in_flight", 4)),
            retry=RetryPolicy(max_attempts=int(retry.get("max_attempts", 3)),
                              base_backoff_ms=int(retry.get("base_backoff_ms", 250))),
            cache_dir=obj.get("cache_dir", ""),
        )


def stable_hash(text: str) -> int:
    """Platform-independent non-negative hash of a string."""
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")


def request_hash(config: BackendConfig, req: ChatRequest) -> str:
    payload = json.dumps({
        "backend": config.kind,
        "model": config.model_name,
        "system": req.system_text,
        "user": req.user_text,
        "max_new_tokens": req.max_new_tokens,
        "sampling": req.sampling,
        "stop": list(req.stop_sequences),
    }, sort_keys=True, ensure_ascii=False)
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


# ---------------------------------------------------------------------------
# Mock backend
# ---------------------------------------------------------------------------

_CLASSIFY_MARKER = "\nClassify the resume sentence above"
_RESUME_START = "Resume:\n"
_RESUME_END = "\n\nTask"
_CARD_ID_RE = re.compile(r"^ID:\s*(\S+)", re.MULTILINE)
_HIRE_COUNT_RE = re.compile(r"exactly (\d+)")


def _mock_classify(user_text: str) -> str:
    from .classify import heuristic_classify

    idx = user_text.find(_CLASSIFY_MARKER)
    sentence = user_text[:idx] if idx >= 0 else user_text.split("\n", 1)[0]
    return "Answer: " + heuristic_classify(sentence)


def _mock_assess(user_text: str) -> str:
    start = user_text.find(_RESUME_START)
    if start >= 0:
        start += len(_RESUME_START)
        end = user_text.find(_RESUME_END, start)
        resume = user_text[start:end] if end >= 0 else user_text[start:]
    else:
        resume = user_text
    grade = 50 + 5 * (stable_hash(resume) % 10)
    words = resume.split()
    summary = " ".join(words[:_MOCK_SUMMARY_WORDS])
    return f"Grade: {grade}/100\nSummary: {summary}"


def _mock_decide(user_text: str) -> str:
    ids = _CARD_ID_RE.findall(user_text)
    m = _HIRE_COUNT_RE.search(user_text)
    hires = int(m.group(1)) if m else 1
    chosen = ids[:hires] if ids else []
    listed = ", ".join(chosen)
    return (f"Selected ID(s): {listed}. These candidates hold the strongest "
            "grades on the shortlist and their summaries show directly "
            "relevant experience for the stated role.")


def mock_complete(req: ChatRequest) -> ChatResponse:
    """Deterministic canned completion; same request always yields same text."""
    if req.request_tag == "classify":
        text = _mock_classify(req.user_text)
    elif req.request_tag == "assess":
        text = _mock_assess(req.user_text)
    else:
        text = _mock_decide(req.user_text)
    return ChatResponse(text=text, latency_ms=0, backend_name="mock")


# ---------------------------------------------------------------------------
# HTTP transport
# ---------------------------------------------------------------------------

Transport = Callable[[str, dict, dict, float], tuple[int, str]]


def requests_transport(url: str, headers: dict, payload: dict,
                       timeout: float) -> tuple[int, str]:
    import requests

    try:
        resp = requests.post(url, headers=headers, json=payload, timeout=timeout)
    except requests.Timeout as exc:
        raise TransportError(f"timeout calling {url}: {exc}", retryable=True)
    except requests.RequestException as exc:
        raise TransportError(f"transport failure calling {url}: {exc}", retryable=True)
    return resp.status_code, resp.text


class ChatClient:
    """Shared handle for one backend: limits concurrency, retries, caches.

    ``transport``, ``sleeper`` and ``rng`` are injectable so tests can fake
    the network and make backoff deterministic.
    """

    def __init__(self, config: BackendConfig, transport: Transport | None = None,
                 sleeper: Callable[[float], None] = time.sleep,
                 rng: random.Random | None = None,
                 transcript_path: str | Path | None = None,
                 timeout: float = 120.0):
        self.config = config
        self._transport = transport or requests_transport
        self._sleeper = sleeper
        self._rng = rng or random.Random()
        self._timeout = timeout
        self._semaphore = threading.BoundedSemaphore(config.max_in_flight)
        self._log_lock = threading.Lock()
        self._transcript_path = Path(transcript_path) if transcript_path else None
        self.call_log: list[dict] = []

    # -- public API ---------------------------------------------------------

    def complete(self, req: ChatRequest, use_cache: bool = True) -> ChatResponse:
        key = request_hash(self.config, req)
        if self.config.kind == "mock":
            resp = mock_complete(req)
        else:
            resp = None
            if use_cache:
                resp = self._cache_read(key)
            if resp is None:
                resp = self._complete_http(req)
                self._cache_write(key, resp)
        self._record(req, resp, key)
        return resp

    # -- internals ----------------------------------------------------------

    def _endpoint(self) -> str:
        base = os.environ.get(BASE_URL_ENV) or self.config.base_url
        if not base:
            raise ConfigError(f"no base_url configured and {BASE_URL_ENV} unset")
        return base.rstrip("/") + "/chat/completions"

    def _headers(self) -> dict:
        key = os.environ.get(self.config.api_key_env)
        if not key:
            raise ConfigError(
                f"api key env var {self.config.api_key_env} is not set")
        return {"Authorization": f"Bearer {key}",
                "Content-Type": "application/json"}

    def _payload(self, req: ChatRequest) -> dict:
        messages = []
        if req.system_text:
            messages.append({"role": "system", "content": req.system_text})
        messages.append({"role": "user", "content": req.user_text})
        payload = {
            "model": self.config.model_name,
            "messages": messages,
            "max_tokens": req.max_new_tokens,
        }
        if req.stop_sequences:
            payload["stop"] = list(req.stop_sequences)
        if not req.sampling:
            payload["temperature"] = 0.0
        return payload

    def _complete_http(self, req: ChatRequest) -> ChatResponse:
        url = self._endpoint()
        headers = self._headers()
        payload = self._payload(req)
        policy = self.config.retry
        last_error: Exception | None = None

        for attempt in range(policy.max_attempts):
            if attempt:
                cap = policy.base_backoff_ms * (2 ** (attempt - 1))
                self._sleeper(self._rng.uniform(0, cap) / 1000.0)
            started = time.monotonic()
            try:
                with self._semaphore:
                    status, body = self._transport(url, headers, payload, self._timeout)
            except TransportError as exc:
                if not exc.retryable:
                    raise
                last_error = exc
                log.warning("attempt %d/%d failed: %s", attempt + 1,
                            policy.max_attempts, exc)
                continue
            latency_ms = int((time.monotonic() - started) * 1000)

            if status == 200:
                return self._parse_body(body, latency_ms)
            if status in _RETRYABLE_STATUS:
                last_error = TransportError(f"HTTP {status}", status=status,
                                            retryable=True)
                log.warning("attempt %d/%d got HTTP %d", attempt + 1,
                            policy.max_attempts, status)
                continue
            raise TransportError(f"fatal HTTP {status}: {body[:200]}",
                                 status=status, retryable=False)

        raise RetriesExhausted(
            f"gave up after {policy.max_attempts} attempts: {last_error}",
            attempts=policy.max_attempts, last=last_error)

    def _parse_body(self, body: str, latency_ms: int) -> ChatResponse:
        try:
            obj = json.loads(body)
            text = obj["choices"][0]["message"]["content"]
        except (json.JSONDecodeError, KeyError, IndexError, TypeError) as exc:
            raise TransportError(f"malformed completion body: {exc}",
                                 retryable=False)
        usage = obj.get("usage") or {}
        token_usage = None
        if usage:
            token_usage = {"prompt": usage.get("prompt_tokens"),
                           "completion": usage.get("completion_tokens")}
        return ChatResponse(text=text, latency_ms=latency_ms,
                            backend_name=self.config.model_name,
                            token_usage=token_usage)

    # -- cache ----------------------------------------------------------------

    def _cache_path(self, key: str) -> Path | None:
        if not self.config.cache_dir:
            return None
        return Path(self.config.cache_dir) / f"{key}.json"

    def _cache_read(self, key: str) -> ChatResponse | None:
        path = self._cache_path(key)
        if path is None or not path.is_file():
            return None
        try:
            obj = json.loads(path.read_text(encoding="utf-8"))
            return ChatResponse(text=obj["text"], latency_ms=0,
                                backend_name=obj["backend_name"],
                                token_usage=obj.get("token_usage"),
                                cached=True)
        except (json.JSONDecodeError, KeyError) as exc:
            log.warning("cache entry %s unreadable (%s); recomputing", path, exc)
            return None

    def _cache_write(self, key: str, resp: ChatResponse) -> None:
        path = self._cache_path(key)
        if path is None:
            return
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp = path.with_suffix(".tmp")
        tmp.write_text(json.dumps({
            "text": resp.text,
            "backend_name": resp.backend_name,
            "token_usage": resp.token_usage,
        }, ensure_ascii=False, sort_keys=True), encoding="utf-8")
        tmp.replace(path)

    # -- transcript -----------------------------------------------------------

    def _record(self, req: ChatRequest, resp: ChatResponse, key: str) -> None:
        entry = {
            "tag": req.request_tag,
            "request_hash": key,
            "cached": resp.cached,
            "latency_ms": resp.latency_ms,
            "backend": resp.backend_name,
        }
        full = dict(entry, system=req.system_text, user=req.user_text,
                    response=resp.text)
        with self._log_lock:
            self.call_log.append(full)
            if self._transcript_path is not None:
                self._transcript_path.parent.mkdir(parents=True, exist_ok=True)
                with self._transcript_path.open("a", encoding="utf-8") as fh:
                    fh.write(json.dumps(entry, sort_keys=True) + "\n")
