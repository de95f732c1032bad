"""Provider plumbing: configuration, usage accounting, rate limiting, retries.

Clients are shareable handles: safe to use from several worker threads. Every
successful outbound call appends exactly one UsageRecord to the shared
UsageLog (failed attempts consume no billable work and log nothing).
"""

from __future__ import annotations

import json
import logging
import os
import threading
import time
from dataclasses import dataclass

from ..errors import ConfigError, SlidecastError
from ..jsonio import dumps_compact, write_bytes

logger = logging.getLogger(__name__)

PROVIDER_KINDS = ("llm", "tts", "ocr")

# usage record kinds; narration and alignment are split so per-component cost
# can be reconstructed from the log alone
USAGE_KINDS = ("narration", "alignment", "tts", "ocr")


class ProviderError(SlidecastError):
    """A provider call failed after exhausting its retry budget."""


@dataclass(frozen=True)
class ProviderConfig:
    """How to reach one external service."""

    kind: str
    endpoint: str
    model_name: str = ""
    credential: str = ""
    credential_env: str = ""
    rate_limit: float | None = None  # requests per second
    retries: int = 2
    timeout_ms: int = 60000

    def __post_init__(self):
        if self.kind not in PROVIDER_KINDS:
            raise ConfigError(f"unknown provider kind: {self.kind!r}")
        if self.retries < 0:
            raise ConfigError("retries must be >= 0")
        if self.timeout_ms <= 0:
            raise ConfigError("timeout_ms must be positive")
        if self.rate_limit is not None and self.rate_limit <= 0:
            raise ConfigError("rate_limit must be positive when set")

    def resolve_credential(self) -> str:
        """Credential string, following the env indirection when configured."""
        if self.credential:
            return self.credential
        if self.credential_env:
            value = os.environ.get(self.credential_env, "")
            if value:
                return value
        return ""

    def to_dict(self) -> dict:
        # credential material is never serialized or hashed into artifacts
        return {
            "kind": self.kind,
            "endpoint": self.endpoint,
            "model_name": self.model_name,
            "rate_limit": self.rate_limit,
            "retries": self.retries,
            "timeout_ms": self.timeout_ms,
        }

    @classmethod
    def from_dict(cls, d: dict, kind: str | None = None) -> "ProviderConfig":
        return cls(
            kind=kind or d["kind"],
            endpoint=d.get("endpoint", ""),
            model_name=d.get("model_name", ""),
            credential=d.get("credential", ""),
            credential_env=d.get("credential_env", ""),
            rate_limit=d.get("rate_limit"),
            retries=d.get("retries", 2),
            timeout_ms=d.get("timeout_ms", 60000),
        )


@dataclass(frozen=True)
class UsageRecord:
    """Billable quantities of one provider call."""

    kind: str
    input_tokens: int = 0
    output_tokens: int = 0
    characters: int = 0
    pages: int = 0
    timestamp: int = 0  # epoch milliseconds

    def __post_init__(self):
        if self.kind not in USAGE_KINDS:
            raise ValueError(f"unknown usage kind: {self.kind!r}")
        for name in ("input_tokens", "output_tokens", "characters", "pages", "timestamp"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "input_tokens": self.input_tokens,
            "output_tokens": self.output_tokens,
            "characters": self.characters,
            "pages": self.pages,
            "timestamp": self.timestamp,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "UsageRecord":
        return cls(
            kind=d["kind"],
            input_tokens=d.get("input_tokens", 0),
            output_tokens=d.get("output_tokens", 0),
            characters=d.get("characters", 0),
            pages=d.get("pages", 0),
            timestamp=d.get("timestamp", 0),
        )

    def sort_key(self):
        return (
            self.timestamp,
            self.kind,
            self.input_tokens,
            self.output_tokens,
            self.characters,
            self.pages,
        )


class UsageLog:
    """Thread-safe accumulator of UsageRecords.

    Records are written canonically sorted, not in completion order, so a
    parallel run produces the same file as a serial one.
    """

    def __init__(self):
        self._lock = threading.Lock()
        self._records: list[UsageRecord] = []

    def append(self, record: UsageRecord) -> None:
        with self._lock:
            self._records.append(record)

    def snapshot(self) -> list[UsageRecord]:
        with self._lock:
            return sorted(self._records, key=UsageRecord.sort_key)

    def __len__(self) -> int:
        with self._lock:
            return len(self._records)

    def write(self, path: str) -> None:
        rows = [r.to_dict() for r in self.snapshot()]
        body = "".join(dumps_compact(row) + "\n" for row in rows)
        write_bytes(path, body.encode("utf-8"))


def load_usage(path: str) -> list[UsageRecord]:
    records = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                records.append(UsageRecord.from_dict(json.loads(line)))
    return records


def wall_clock_ms() -> int:
    return int(time.time() * 1000)


def zero_clock() -> int:
    """Clock for offline runs: fixed zero so artifacts are byte-stable."""
    return 0


class RateLimiter:
    """Token bucket: at most rate requests/second with burst capacity."""

    def __init__(self, rate: float, capacity: float | None = None, clock=time.monotonic, sleep=time.sleep):
        if rate <= 0:
            raise ValueError("rate must be positive")
        self._rate = rate
        self._capacity = capacity if capacity is not None else max(1.0, rate)
        self._tokens = self._capacity
        self._clock = clock
        self._sleep = sleep
        self._last = clock()
        self._lock = threading.Lock()

    def acquire(self) -> None:
        while True:
            with self._lock:
                now = self._clock()
                self._tokens = min(self._capacity, self._tokens + (now - self._last) * self._rate)
                self._last = now
                if self._tokens >= 1.0:
                    self._tokens -= 1.0
                    return
                wait = (1.0 - self._tokens) / self._rate
            self._sleep(wait)


def retry_call(fn, *, retries: int, base_delay: float = 0.5, sleep=time.sleep, what: str = "call"):
    """Run fn() with exponential backoff; retries+1 attempts total."""
    attempts = retries + 1
    last: Exception | None = None
    for attempt in range(attempts):
        try:
            return fn()
        except Exception as exc:  # noqa: BLE001 - provider faults are opaque
            last = exc
            if attempt + 1 < attempts:
                delay = base_delay * (2**attempt)
                logger.warning("%s failed (attempt %d/%d): %s; retrying in %.2fs", what, attempt + 1, attempts, exc, delay)
                sleep(delay)
    raise ProviderError(f"{what} failed after {attempts} attempts: {last}") from last
