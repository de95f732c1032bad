"""Provider operations: narration, speech synthesis, OCR.

The operations here are client-agnostic; pass any object implementing the
client protocols (the HTTP clients for live services, the fixture/procedural
mocks for offline runs). Preconditions are checked before any outbound call
so a bad input never burns quota.
"""

from __future__ import annotations

import io
import logging

from PIL import Image, UnidentifiedImageError

from ..errors import ConfigError
from ..model import Transcript, WordTimestamp
from ..ocr_ingest import OcrBackendDoc
from ..transcript import MarkerSyntaxError, parse_transcript
from .base import (
    PROVIDER_KINDS,
    ProviderConfig,
    ProviderError,
    RateLimiter,
    UsageLog,
    UsageRecord,
    load_usage,
    retry_call,
    wall_clock_ms,
    zero_clock,
)
from .http import HttpLlm, HttpOcr, HttpTts
from .mock import FixtureLlm, FixtureOcr, FlakyClient, MockTts, ScriptedLlm

logger = logging.getLogger(__name__)

__all__ = [
    "PROVIDER_KINDS",
    "ProviderConfig",
    "ProviderError",
    "RateLimiter",
    "UsageLog",
    "UsageRecord",
    "load_usage",
    "retry_call",
    "wall_clock_ms",
    "zero_clock",
    "HttpLlm",
    "HttpOcr",
    "HttpTts",
    "FixtureLlm",
    "FixtureOcr",
    "FlakyClient",
    "MockTts",
    "ScriptedLlm",
    "build_narration_prompt",
    "generate_narration",
    "synthesize_speech",
    "run_ocr",
    "build_clients",
]

NARRATION_INSTRUCTIONS = """\
You are narrating one slide of a lecture for a voiced-over video.

Write the spoken narration for the slide image you are given. Requirements:
- Explain the slide's content fully: motivate it, walk through every major
  point, and connect it to what came before.
- Keep continuity with the previous narration excerpt below; do not repeat it.
- Describe significant visual elements (figures, plots, diagrams) so a
  listener who cannot see the slide still follows.
- Read notation as meaning: say what a formula expresses rather than spelling
  symbols letter by letter.
- Whenever you discuss a term, definition, or formula that is visible on the
  slide, wrap the exact text as it appears on the slide in a marker:
  highlight(text exactly as shown). Markers must not be nested.
- Output only the narration text with its markers, no headings or notes.

Previous narration excerpt:
"""


def build_narration_prompt(prior_context: str) -> str:
    context = prior_context.strip() or "(this is the first slide)"
    return NARRATION_INSTRUCTIONS + context + "\n"


def _require_image(data: bytes, what: str) -> None:
    if not data:
        raise ValueError(f"{what}: empty image payload")
    try:
        with Image.open(io.BytesIO(data)) as img:
            img.verify()
    except (UnidentifiedImageError, OSError) as exc:
        raise ValueError(f"{what}: image does not decode: {exc}") from exc


def generate_narration(slide_image: bytes, prior_context: str, llm) -> Transcript:
    """Produce a parsed, marker-annotated transcript for one slide image.

    The model reply must pass transcript parsing; one regeneration is
    attempted on marker syntax errors before giving up.
    """
    _require_image(slide_image, "generate_narration")
    prompt = build_narration_prompt(prior_context)
    raw = llm.narrate(slide_image, prompt)
    try:
        return parse_transcript(raw)
    except MarkerSyntaxError as exc:
        logger.warning("narration has invalid markers (%s); regenerating once", exc)
        raw = llm.narrate(slide_image, prompt)
        try:
            return parse_transcript(raw)
        except MarkerSyntaxError as exc2:
            raise ProviderError(
                f"narration still has invalid markers after regeneration: {exc2}"
            ) from exc2


def synthesize_speech(text: str, tts) -> tuple[bytes, list[WordTimestamp]]:
    """Synthesize audio plus word timestamps for the stripped transcript."""
    if not text.strip():
        raise ValueError("synthesize_speech: text must be non-empty")
    audio, timestamps = tts.synthesize(text)
    return audio, list(timestamps)


def run_ocr(slide_image: bytes, ocr, slide_index: int) -> OcrBackendDoc:
    """Recognize one slide image into a backend-native OCR document."""
    _require_image(slide_image, "run_ocr")
    backend, payload = ocr.analyze(slide_image)
    return OcrBackendDoc(backend=backend, payload=payload, slide_index=slide_index)


def build_clients(
    configs: dict[str, ProviderConfig],
    offline_dir: str | None,
    usage_log: UsageLog | None = None,
):
    """Construct (llm, tts, ocr) clients.

    With offline_dir set, all three are deterministic offline mocks rooted at
    that fixture directory. Otherwise every kind needs a configured endpoint
    and credential; missing ones fail fast here, before any stage runs.
    """
    if offline_dir is not None:
        return (
            FixtureLlm(offline_dir, usage_log=usage_log),
            MockTts(usage_log=usage_log),
            FixtureOcr(offline_dir, usage_log=usage_log),
        )
    missing = [k for k in PROVIDER_KINDS if k not in configs]
    if missing:
        raise ConfigError(f"missing provider configuration for: {', '.join(missing)}")
    for kind in PROVIDER_KINDS:
        cfg = configs[kind]
        if not cfg.endpoint:
            raise ConfigError(f"{kind} provider has no endpoint configured")
        if not cfg.resolve_credential():
            raise ConfigError(f"{kind} provider has no credential (set credential or credential_env)")
    return (
        HttpLlm(configs["llm"], usage_log=usage_log),
        HttpTts(configs["tts"], usage_log=usage_log),
        HttpOcr(configs["ocr"], usage_log=usage_log),
    )
