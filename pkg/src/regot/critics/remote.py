"""Chat-completion HTTP backend with bounded retry and record/replay sessions.

Modes:
  live    call the endpoint
  record  call the endpoint and append each exchange to a session file
  replay  answer from a session file only; no HTTP client is ever created

Session entries are keyed by the sha256 of the canonical request body, so a
replay serves the same answer for the same prompt. Repeated identical
requests are served in recorded order.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import tempfile
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import httpx

from .base import CriticError, CriticRequest, CriticTransportError

log = logging.getLogger(__name__)

API_KEY_ENV = "REGOT_API_KEY"
MODES = ("live", "record", "replay")
RETRY_STATUS = frozenset({429, 500, 502, 503, 504})
SESSION_VERSION = 1


def request_key(body: dict) -> str:
    canonical = json.dumps(body, sort_keys=True, separators=(",", ":"), ensure_ascii=False)
    return hashlib.sha256(canonical.encode()).hexdigest()


_UMASK = os.umask(0)
os.umask(_UMASK)


def atomic_write_text(path: Path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        # mkstemp creates 0600 files; use the usual umask-derived mode instead
        os.chmod(tmp, 0o666 & ~_UMASK)
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


class SessionStore:
    """Ordered (key, request, response) records in a JSON file."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._cursor: dict[str, int] = {}
        self.entries: list[dict] = self._load()

    def lookup(self, key: str) -> str:
        matches = [e for e in self.entries if e["key"] == key]
        i = self._cursor.get(key, 0)
        if i >= len(matches):
            raise CriticError(f"no recorded response for request {key[:12]} "
                              f"({len(matches)} recorded, {i} already served) in {self.path}")
        self._cursor[key] = i + 1
        return matches[i]["response"]

    def _load(self) -> list[dict]:
        if not self.path.exists():
            return []
        doc = json.loads(self.path.read_text())
        if doc.get("version") != SESSION_VERSION:
            raise CriticError(f"{self.path}: unsupported session version {doc.get('version')}")
        return doc["entries"]

    def append(self, key: str, body: dict, response: str) -> None:
        # re-read first: several recorders (one per critic role) may share the file
        self.entries = self._load()
        self.entries.append({"key": key, "request": body, "response": response})
        self.save()

    def save(self) -> None:
        atomic_write_text(self.path, json.dumps(
            {"version": SESSION_VERSION, "entries": self.entries}, indent=1, ensure_ascii=False))


@dataclass(frozen=True)
class RetryPolicy:
    max_retries: int = 5
    initial: float = 1.0
    cap: float = 30.0

    def delays(self) -> list[float]:
        return [min(self.initial * 2 ** i, self.cap) for i in range(self.max_retries)]

    @property
    def max_total_wait(self) -> float:
        return sum(self.delays())


class RemoteCritic:
    name = "remote"

    def __init__(self, endpoint: str, model: str, temperature: float = 0.0, mode: str = "live",
                 session: str | Path | None = None, log_path: str | Path | None = None,
                 retry: RetryPolicy = RetryPolicy(), timeout: float = 120.0,
                 transport: httpx.BaseTransport | None = None,
                 sleep: Callable[[float], None] = time.sleep):
        if mode not in MODES:
            raise ValueError(f"remote mode must be one of {MODES}, got {mode!r}")
        if mode != "live" and session is None:
            raise ValueError(f"mode {mode!r} needs a session file")
        self.endpoint = endpoint
        self.model = model
        self.temperature = float(temperature)
        self.mode = mode
        self.store = SessionStore(session) if session is not None else None
        if mode == "replay" and not self.store.path.exists():
            raise CriticError(f"replay session {self.store.path} does not exist")
        self.log_path = Path(log_path) if log_path else None
        self.retry = retry
        self.timeout = timeout
        self.transport = transport
        self.sleep = sleep
        self.calls: list[CriticRequest] = []
        self.http_requests = 0
        self._client: httpx.Client | None = None

    def body(self, request: CriticRequest) -> dict:
        return {"model": self.model, "temperature": self.temperature,
                "messages": [dict(m) for m in request.messages]}

    def complete(self, request: CriticRequest) -> str:
        self.calls.append(request)
        body = self.body(request)
        key = request_key(body)
        if self.mode == "replay":
            content = self.store.lookup(key)
        else:
            content = self._post(body)
            if self.mode == "record":
                self.store.append(key, body, content)
        self._log(request, key, body, content)
        return content

    def _api_key(self) -> str:
        key = os.environ.get(API_KEY_ENV)
        if not key:
            raise CriticError(f"remote critic needs the {API_KEY_ENV} environment variable")
        return key

    def _post(self, body: dict) -> str:
        api_key = self._api_key()
        if self._client is None:
            self._client = httpx.Client(transport=self.transport, timeout=self.timeout)
        headers = {"Authorization": f"Bearer {api_key}", "Content-Type": "application/json"}
        delays = self.retry.delays()
        last = ""
        for attempt in range(len(delays) + 1):
            try:
                self.http_requests += 1
                resp = self._client.post(self.endpoint, json=body, headers=headers)
            except httpx.TransportError as exc:
                last = f"transport error: {exc}"
            else:
                if resp.status_code == 200:
                    try:
                        return resp.json()["choices"][0]["message"]["content"]
                    except (ValueError, KeyError, IndexError, TypeError) as exc:
                        raise CriticError(f"unexpected response shape from {self.endpoint}: "
                                          f"{exc!r}") from None
                if resp.status_code not in RETRY_STATUS:
                    raise CriticTransportError(f"HTTP {resp.status_code} from {self.endpoint}: "
                                               f"{resp.text[:500]}")
                last = f"HTTP {resp.status_code}"
            if attempt < len(delays):
                log.warning("critic call failed (%s); retrying in %.0f s", last, delays[attempt])
                self.sleep(delays[attempt])
        raise CriticTransportError(f"{self.endpoint}: giving up after {len(delays) + 1} "
                                   f"attempts, last error {last}")

    def _log(self, request: CriticRequest, key: str, body: dict, content: str) -> None:
        if self.log_path is None:
            return
        secret = os.environ.get(API_KEY_ENV)
        line = json.dumps({"purpose": request.purpose, "attempt": request.attempt, "key": key,
                           "mode": self.mode, "request": body, "response": content},
                          sort_keys=True, ensure_ascii=False)
        if secret:
            line = line.replace(secret, "[REDACTED]")
        self.log_path.parent.mkdir(parents=True, exist_ok=True)
        with open(self.log_path, "a") as fh:
            fh.write(line + "\n")

    def close(self) -> None:
        if self._client is not None:
            self._client.close()
            self._client = None
