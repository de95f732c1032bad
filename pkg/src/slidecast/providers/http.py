"""HTTP clients for live language-model, speech and OCR services.

All three speak a small JSON-over-POST gateway shape documented here rather
than any one vendor's API, so deployments front their vendor with a thin
proxy or point the endpoint at a compatible service:

* LLM:  POST {model, prompt, image_b64?} -> {text, usage?: {input_tokens, output_tokens}}
* TTS:  POST {model, text}               -> {audio_b64, timestamps: [{word, start_ms, end_ms}]}
* OCR:  POST {model, image_b64}          -> {payload} in the read_v4 grammar, plus pages?

Every client retries with exponential backoff (config.retries extra attempts)
and appends one UsageRecord per successful call.
"""

from __future__ import annotations

import base64
import logging
import time

import requests

from ..errors import ConfigError
from ..model import WordTimestamp
from .base import (
    ProviderConfig,
    ProviderError,
    RateLimiter,
    UsageLog,
    UsageRecord,
    retry_call,
    wall_clock_ms,
)

logger = logging.getLogger(__name__)


class _HttpClient:
    def __init__(
        self,
        config: ProviderConfig,
        usage_log: UsageLog | None = None,
        clock=wall_clock_ms,
        sleep=time.sleep,
        session: requests.Session | None = None,
    ):
        if not config.endpoint:
            raise ConfigError(f"{config.kind} provider needs an endpoint")
        self.config = config
        self.usage_log = usage_log
        self.clock = clock
        self._sleep = sleep
        self._session = session or requests.Session()
        self._limiter = RateLimiter(config.rate_limit) if config.rate_limit else None

    def _post(self, body: dict) -> dict:
        if self._limiter is not None:
            self._limiter.acquire()
        headers = {"Content-Type": "application/json"}
        credential = self.config.resolve_credential()
        if credential:
            headers["Authorization"] = f"Bearer {credential}"

        def attempt() -> dict:
            resp = self._session.post(
                self.config.endpoint,
                json=body,
                headers=headers,
                timeout=self.config.timeout_ms / 1000.0,
            )
            resp.raise_for_status()
            return resp.json()

        return retry_call(
            attempt,
            retries=self.config.retries,
            sleep=self._sleep,
            what=f"{self.config.kind} request to {self.config.endpoint}",
        )

    def _record(self, kind: str, **counts) -> None:
        if self.usage_log is not None:
            self.usage_log.append(UsageRecord(kind=kind, timestamp=self.clock(), **counts))


def _estimate_tokens(size: int) -> int:
    return max(1, size // 4)


class HttpLlm(_HttpClient):
    def _call(self, body: dict, kind: str) -> str:
        data = self._post(body)
        if "text" not in data:
            raise ProviderError(f"llm response missing 'text': {list(data)}")
        text = str(data["text"])
        usage = data.get("usage") or {}
        self._record(
            kind,
            input_tokens=int(usage.get("input_tokens", _estimate_tokens(len(str(body))))),
            output_tokens=int(usage.get("output_tokens", _estimate_tokens(len(text)))),
        )
        return text

    def narrate(self, image: bytes, prompt: str) -> str:
        body = {
            "model": self.config.model_name,
            "prompt": prompt,
            "image_b64": base64.b64encode(image).decode("ascii"),
        }
        return self._call(body, "narration")

    def complete(self, prompt: str) -> str:
        return self._call({"model": self.config.model_name, "prompt": prompt}, "alignment")


class HttpTts(_HttpClient):
    def synthesize(self, text: str) -> tuple[bytes, list[WordTimestamp]]:
        data = self._post({"model": self.config.model_name, "text": text})
        try:
            audio = base64.b64decode(data["audio_b64"])
            timestamps = [WordTimestamp.from_dict(t) for t in data["timestamps"]]
        except (KeyError, TypeError, ValueError) as exc:
            raise ProviderError(f"malformed tts response: {exc}") from exc
        self._record("tts", characters=len(text))
        return audio, timestamps


class HttpOcr(_HttpClient):
    def analyze(self, image: bytes) -> tuple[str, object]:
        data = self._post(
            {
                "model": self.config.model_name,
                "image_b64": base64.b64encode(image).decode("ascii"),
            }
        )
        payload = data.get("payload", data)
        self._record("ocr", pages=int(data.get("pages", 1)))
        return "read_v4_json", payload
