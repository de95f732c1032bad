"""Deterministic offline providers.

Every mock is a pure function of (request bytes, fixture directory): fixture
lookups are keyed by the SHA-256 digest of the request payload, the TTS mock
is fully procedural, and timestamps come from a fixed zero clock, so repeated
offline runs produce identical artifacts with no network access.

Fixture directory layout::

    <fixture_dir>/
      narration/<digest16>.txt    reply for narrating the image with that digest
      ocr/<digest16>.json         OCR payload for that image (read_v4 grammar)
      ocr/<digest16>.tsv          ... or a tesseract payload
"""

from __future__ import annotations

import hashlib
import io
import json
import logging
import os
import re
import wave

from ..errors import SlidecastError
from ..matcher import levenshtein
from ..model import WordTimestamp, normalize_text, normalize_words
from .base import ProviderError, UsageLog, UsageRecord, zero_clock

logger = logging.getLogger(__name__)

MOCK_MS_PER_WORD = 500
MOCK_SAMPLE_RATE = 24000


def digest(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()[:16]


def _estimate_tokens(size: int) -> int:
    return max(1, size // 4)


class _UsageMixin:
    usage_log: UsageLog | None
    clock: object

    def _record(self, kind: str, **counts) -> None:
        if self.usage_log is not None:
            self.usage_log.append(UsageRecord(kind=kind, timestamp=self.clock(), **counts))


_TARGET_RE = re.compile(r"Target Highlight Phrase:\n`(.*?)`\n", re.DOTALL)
_CANDIDATE_RE = re.compile(r"^(\d+)\. (.*)$")


def _contains_run(big: list[str], small: list[str]) -> bool:
    if not small or len(small) > len(big):
        return False
    return any(big[i : i + len(small)] == small for i in range(len(big) - len(small) + 1))


def heuristic_index_reply(prompt: str) -> str:
    """Deterministic stand-in for model judgment on an alignment prompt.

    Picks candidates whose normalized words form a run inside the target
    phrase or vice versa; when nothing qualifies, falls back to the single
    most similar candidate above 0.5. Returns a JSON index array.
    """
    m = _TARGET_RE.search(prompt)
    if not m:
        return "[]"
    target = normalize_words(m.group(1))
    candidates: list[tuple[int, str]] = []
    in_list = False
    for line in prompt.splitlines():
        if line.startswith("Candidate OCR Text Elements"):
            in_list = True
            continue
        if in_list:
            cm = _CANDIDATE_RE.match(line)
            if cm:
                candidates.append((int(cm.group(1)), cm.group(2)))
            elif line.strip() == "" and candidates:
                break
    if not target or not candidates:
        return "[]"
    picked = []
    for i, raw in candidates:
        words = normalize_words(raw)
        if words and (_contains_run(target, words) or _contains_run(words, target)):
            picked.append(i)
    if not picked:
        target_text = " ".join(target)
        scored = []
        for i, raw in candidates:
            text = normalize_text(raw)
            if not text:
                continue
            sim = 1.0 - levenshtein(target_text, text) / max(len(target_text), len(text))
            scored.append((sim, -i))
        if scored:
            best_sim, neg_i = max(scored)
            if best_sim > 0.5:
                picked = [-neg_i]
    return json.dumps(picked)


class FixtureLlm(_UsageMixin):
    """Offline language model: canned narration, heuristic alignment replies."""

    def __init__(self, fixture_dir: str, usage_log: UsageLog | None = None, clock=zero_clock):
        self.fixture_dir = fixture_dir
        self.usage_log = usage_log
        self.clock = clock

    def narrate(self, image: bytes, prompt: str) -> str:
        key = digest(image)
        path = os.path.join(self.fixture_dir, "narration", f"{key}.txt")
        if not os.path.exists(path):
            raise ProviderError(f"no narration fixture for image digest {key} at {path}")
        with open(path, "r", encoding="utf-8") as fh:
            reply = fh.read()
        self._record(
            "narration",
            input_tokens=_estimate_tokens(len(image) + len(prompt.encode("utf-8"))),
            output_tokens=_estimate_tokens(len(reply.encode("utf-8"))),
        )
        return reply

    def complete(self, prompt: str) -> str:
        reply = heuristic_index_reply(prompt)
        self._record(
            "alignment",
            input_tokens=_estimate_tokens(len(prompt.encode("utf-8"))),
            output_tokens=_estimate_tokens(len(reply.encode("utf-8"))),
        )
        return reply


class ScriptedLlm(_UsageMixin):
    """Plays back a fixed list of replies; entries that are exceptions raise.

    Both narrate() and complete() consume from the same script unless a
    separate narrations list is given. Prompts are recorded for assertions.
    """

    def __init__(
        self,
        replies: list,
        narrations: list | None = None,
        usage_log: UsageLog | None = None,
        clock=zero_clock,
    ):
        self._replies = list(replies)
        self._narrations = list(narrations) if narrations is not None else None
        self.usage_log = usage_log
        self.clock = clock
        self.prompts: list[str] = []

    def _next(self, queue: list):
        if not queue:
            raise ProviderError("scripted client ran out of replies")
        item = queue.pop(0)
        if isinstance(item, Exception):
            raise item
        return item

    def narrate(self, image: bytes, prompt: str) -> str:
        self.prompts.append(prompt)
        queue = self._narrations if self._narrations is not None else self._replies
        reply = self._next(queue)
        self._record(
            "narration",
            input_tokens=_estimate_tokens(len(image) + len(prompt.encode("utf-8"))),
            output_tokens=_estimate_tokens(len(reply.encode("utf-8"))),
        )
        return reply

    def complete(self, prompt: str) -> str:
        self.prompts.append(prompt)
        reply = self._next(self._replies)
        self._record(
            "alignment",
            input_tokens=_estimate_tokens(len(prompt.encode("utf-8"))),
            output_tokens=_estimate_tokens(len(reply.encode("utf-8"))),
        )
        return reply


def silent_wav(duration_ms: int, sample_rate: int = MOCK_SAMPLE_RATE) -> bytes:
    """Silent 16-bit mono PCM WAV of the requested duration."""
    n_frames = duration_ms * sample_rate // 1000
    buf = io.BytesIO()
    with wave.open(buf, "wb") as out:
        out.setnchannels(1)
        out.setsampwidth(2)
        out.setframerate(sample_rate)
        out.writeframes(b"\x00" * (n_frames * 2))
    return buf.getvalue()


class MockTts(_UsageMixin):
    """Procedural speech synthesis: 500 ms per word, silent audio."""

    def __init__(self, usage_log: UsageLog | None = None, clock=zero_clock):
        self.usage_log = usage_log
        self.clock = clock

    def synthesize(self, text: str) -> tuple[bytes, list[WordTimestamp]]:
        words = text.split()
        timestamps = [
            WordTimestamp(word=w, start_ms=i * MOCK_MS_PER_WORD, end_ms=(i + 1) * MOCK_MS_PER_WORD)
            for i, w in enumerate(words)
        ]
        audio = silent_wav(len(words) * MOCK_MS_PER_WORD)
        self._record("tts", characters=len(text))
        return audio, timestamps


class FixtureOcr(_UsageMixin):
    """Offline OCR: canned payloads keyed by image digest."""

    def __init__(self, fixture_dir: str, usage_log: UsageLog | None = None, clock=zero_clock):
        self.fixture_dir = fixture_dir
        self.usage_log = usage_log
        self.clock = clock

    def analyze(self, image: bytes) -> tuple[str, object]:
        key = digest(image)
        json_path = os.path.join(self.fixture_dir, "ocr", f"{key}.json")
        tsv_path = os.path.join(self.fixture_dir, "ocr", f"{key}.tsv")
        if os.path.exists(json_path):
            with open(json_path, "r", encoding="utf-8") as fh:
                payload = json.load(fh)
            self._record("ocr", pages=1)
            return "read_v4_json", payload
        if os.path.exists(tsv_path):
            with open(tsv_path, "r", encoding="utf-8") as fh:
                payload = fh.read()
            self._record("ocr", pages=1)
            return "tesseract_tsv", payload
        raise ProviderError(f"no OCR fixture for image digest {key} under {self.fixture_dir}")


class FlakyClient:
    """Wraps a client, failing the first n calls of each method; test helper."""

    def __init__(self, inner, failures: int, exc: Exception | None = None):
        self._inner = inner
        self._failures = failures
        self._exc = exc or SlidecastError("injected transient fault")
        self._calls = 0

    def _maybe_fail(self):
        self._calls += 1
        if self._calls <= self._failures:
            raise self._exc

    def narrate(self, image: bytes, prompt: str) -> str:
        self._maybe_fail()
        return self._inner.narrate(image, prompt)

    def complete(self, prompt: str) -> str:
        self._maybe_fail()
        return self._inner.complete(prompt)

    def synthesize(self, text: str):
        self._maybe_fail()
        return self._inner.synthesize(text)

    def analyze(self, image: bytes):
        self._maybe_fail()
        return self._inner.analyze(image)
