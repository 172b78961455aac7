"""Model-completion backends.

Every agent call goes through ``backend.complete(request)``.  Two concrete
backends exist: :class:`HttpBackend` speaks the common ``/chat/completions``
JSON protocol, and :class:`ScriptedBackend` answers from a playbook of
canned responses so whole runs can be replayed byte-for-byte.
:class:`CachedBackend` wraps either one.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import re
import threading
import time
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Protocol

import httpx

from .errors import ConfigurationError, ParseError, PlaybookMissError, TransportError

log = logging.getLogger(__name__)

ROLE_TAGS = ("PA", "DAA", "IEA", "DEA", "FEA")


@dataclass(frozen=True)
class CompletionRequest:
    role_tag: str
    system_prompt: str
    user_prompt: str
    temperature: float = 0.2
    model_id: str = "gpt-4"

    def __post_init__(self) -> None:
        if self.role_tag not in ROLE_TAGS:
            raise ValueError(f"unknown role tag {self.role_tag!r}")
        if not self.system_prompt or not self.user_prompt:
            raise ValueError("prompts must be non-empty")
        if not 0.0 <= self.temperature <= 2.0:
            raise ValueError(f"temperature {self.temperature} outside [0, 2]")

    @property
    def digest(self) -> str:
        return prompt_digest(self.user_prompt)

    def cache_key(self) -> str:
        blob = json.dumps(
            [self.model_id, self.system_prompt, self.user_prompt, self.temperature],
            ensure_ascii=False,
        )
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class CompletionResponse:
    text: str
    prompt_tokens: int = 0
    completion_tokens: int = 0
    latency_ms: int = 0
    source: str = "scripted"
    attempts: int = 1


def prompt_digest(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()[:12]


class Backend(Protocol):
    def complete(self, request: CompletionRequest) -> CompletionResponse: ...


# --------------------------------------------------------------------------
# Scripted backend
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class PlaybookEntry:
    role: str
    match: str
    response: str = ""
    regex: bool = False
    error: str | None = None

    def matches(self, request: CompletionRequest) -> bool:
        if self.role not in ("*", request.role_tag):
            return False
        if self.regex:
            return re.search(self.match, request.user_prompt) is not None
        return self.match in request.user_prompt


@dataclass(frozen=True)
class Playbook:
    entries: tuple[PlaybookEntry, ...] = ()

    def lookup(self, request: CompletionRequest) -> PlaybookEntry | None:
        for entry in self.entries:
            if entry.matches(request):
                return entry
        return None

    def __len__(self) -> int:
        return len(self.entries)


def load_playbook(path: str | os.PathLike) -> Playbook:
    """Read a JSON-lines playbook: one ``{role, match, response}`` object per line.

    Optional keys: ``regex`` (treat ``match`` as a regular expression) and
    ``error`` (raise a transport error instead of answering).
    """
    entries: list[PlaybookEntry] = []
    seen: set[tuple[str, str, bool]] = set()
    text = Path(path).read_text(encoding="utf-8")
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
            if not isinstance(rec, dict):
                raise ValueError("entry is not an object")
            role = rec["role"]
            match = rec["match"]
            if role != "*" and role not in ROLE_TAGS:
                raise ValueError(f"unknown role {role!r}")
            if not isinstance(match, str):
                raise ValueError("match must be a string")
            if "response" not in rec and "error" not in rec:
                raise ValueError("entry needs 'response' or 'error'")
            entry = PlaybookEntry(
                role=role,
                match=match,
                response=str(rec.get("response", "")),
                regex=bool(rec.get("regex", False)),
                error=rec.get("error"),
            )
            if entry.regex:
                re.compile(entry.match)
        except (ValueError, KeyError, re.error) as exc:
            raise ParseError(f"{path}:{lineno}: malformed playbook entry ({exc})") from exc
        key = (entry.role, entry.match, entry.regex)
        if key in seen:
            warnings.warn(f"{path}:{lineno}: duplicate matcher {key}, first entry wins")
            continue
        seen.add(key)
        entries.append(entry)
    return Playbook(tuple(entries))


class ScriptedBackend:
    """Deterministic backend: responses are returned verbatim from a playbook."""

    def __init__(self, playbook: Playbook, model_id: str = "scripted") -> None:
        self.playbook = playbook
        self.model_id = model_id

    @classmethod
    def from_file(cls, path: str | os.PathLike) -> "ScriptedBackend":
        return cls(load_playbook(path))

    def complete(self, request: CompletionRequest) -> CompletionResponse:
        entry = self.playbook.lookup(request)
        if entry is None:
            raise PlaybookMissError(request.role_tag, request.digest)
        if entry.error is not None:
            raise TransportError(
                f"scripted fault for role={request.role_tag}: {entry.error}",
                attempts=[{"attempt": 1, "error": entry.error}],
            )
        return CompletionResponse(text=entry.response, source="scripted")


# --------------------------------------------------------------------------
# Live HTTP backend
# --------------------------------------------------------------------------


@dataclass
class RetryPolicy:
    max_retries: int = 3
    backoff_base: float = 0.5
    backoff_factor: float = 2.0

    def delay(self, attempt: int) -> float:
        """Delay after failed attempt number ``attempt`` (0-based)."""
        return self.backoff_base * self.backoff_factor**attempt


_TRANSIENT_STATUS = {429, 500, 502, 503, 504}


class HttpBackend:
    """Client for an OpenAI-compatible ``{base_url}/chat/completions`` endpoint."""

    def __init__(
        self,
        base_url: str,
        model_id: str,
        api_key_env: str = "XAGENTS_API_KEY",
        timeout: float = 60.0,
        retry: RetryPolicy | None = None,
        concurrency: int = 4,
        sleep: Callable[[float], None] = time.sleep,
        transport: httpx.BaseTransport | None = None,
    ) -> None:
        api_key = os.environ.get(api_key_env)
        if not api_key:
            raise ConfigurationError(
                f"environment variable {api_key_env} is not set", field="backend.api_key_env"
            )
        self.base_url = base_url.rstrip("/")
        self.model_id = model_id
        self.retry = retry or RetryPolicy()
        self._sleep = sleep
        self._slots = threading.BoundedSemaphore(max(1, concurrency))
        self._client = httpx.Client(
            timeout=timeout,
            transport=transport,
            headers={"Authorization": f"Bearer {api_key}"},
        )

    def close(self) -> None:
        self._client.close()

    def complete(self, request: CompletionRequest) -> CompletionResponse:
        body = {
            "model": request.model_id or self.model_id,
            "messages": [
                {"role": "system", "content": request.system_prompt},
                {"role": "user", "content": request.user_prompt},
            ],
            "temperature": request.temperature,
        }
        attempts: list[dict] = []
        url = f"{self.base_url}/chat/completions"
        with self._slots:
            for attempt in range(self.retry.max_retries + 1):
                started = time.monotonic()
                try:
                    reply = self._client.post(url, json=body)
                except httpx.TimeoutException as exc:
                    attempts.append({"attempt": attempt + 1, "error": f"timeout: {exc}"})
                except httpx.TransportError as exc:
                    attempts.append({"attempt": attempt + 1, "error": f"transport: {exc}"})
                else:
                    if reply.status_code == 200:
                        return self._parse(reply, started, attempt + 1)
                    attempts.append({"attempt": attempt + 1, "status": reply.status_code})
                    if reply.status_code not in _TRANSIENT_STATUS:
                        break
                if attempt < self.retry.max_retries:
                    delay = self.retry.delay(attempt)
                    log.warning("%s call failed (%s), retrying in %.2fs", request.role_tag, attempts[-1], delay)
                    self._sleep(delay)
        raise TransportError(
            f"{request.role_tag} call failed after {len(attempts)} attempt(s)", attempts=attempts
        )

    @staticmethod
    def _parse(reply: httpx.Response, started: float, attempts: int) -> CompletionResponse:
        try:
            doc = reply.json()
            text = doc["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise TransportError(f"malformed completion payload: {exc}") from exc
        usage = doc.get("usage") or {}
        return CompletionResponse(
            text=text,
            prompt_tokens=max(0, int(usage.get("prompt_tokens", 0))),
            completion_tokens=max(0, int(usage.get("completion_tokens", 0))),
            latency_ms=max(0, int((time.monotonic() - started) * 1000)),
            source="live",
            attempts=attempts,
        )


# --------------------------------------------------------------------------
# Cache
# --------------------------------------------------------------------------


@dataclass
class CachedBackend:
    """Serve identical requests from memory, optionally persisted to a JSON file."""

    inner: Backend
    path: Path | None = None
    _store: dict[str, dict] = field(default_factory=dict, init=False, repr=False)
    _lock: threading.Lock = field(default_factory=threading.Lock, init=False, repr=False)

    def __post_init__(self) -> None:
        if self.path is not None:
            self.path = Path(self.path)
            if self.path.exists():
                self._store = json.loads(self.path.read_text(encoding="utf-8"))

    def complete(self, request: CompletionRequest) -> CompletionResponse:
        key = request.cache_key()
        with self._lock:
            hit = self._store.get(key)
        if hit is not None:
            return CompletionResponse(
                text=hit["text"],
                prompt_tokens=hit.get("prompt_tokens", 0),
                completion_tokens=hit.get("completion_tokens", 0),
                source="cache",
            )
        response = self.inner.complete(request)
        with self._lock:
            self._store[key] = {
                "text": response.text,
                "prompt_tokens": response.prompt_tokens,
                "completion_tokens": response.completion_tokens,
            }
        return response

    def save(self) -> None:
        if self.path is None:
            return
        with self._lock:
            payload = json.dumps(self._store, sort_keys=True, ensure_ascii=False, indent=0)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self.path.write_text(payload, encoding="utf-8")

