"""End-to-end lecture generation.

Stage order per deck: rasterize (PDF input only) -> narration (sequential,
each slide's narration sees the previous slide's text) -> per-slide fan-out
of OCR, ingest, speech synthesis, matching, timing, events -> optional video
encode. Every artifact lands in the working directory:

    workdir/
      images/<n>.png            rasterized slides (PDF input only)
      transcripts/slide_<n>.txt raw narration with markers
      transcripts/slide_<n>.json parsed transcript
      ocr/<n>.json|.tsv         backend-native OCR payload
      layout/<n>.json           ingested OcrLayout
      tts/<n>.json              word timestamps (bare list)
      audio/<n>.wav             synthesized audio
      matches/<n>.json          per-marker match results
      events/<n>.json           render events
      plan.json                 whole-lecture render plan
      diagnostics.jsonl         dropped markers and slide failures
      usage.jsonl               one record per provider call
      manifest.json             stage config hashes for cache validation

Re-running with an unchanged configuration reuses every existing artifact and
performs no provider calls; changing a stage's configuration invalidates that
stage and everything after it. Slide failures are isolated: the run continues
and reports which slides failed.
"""

from __future__ import annotations

import concurrent.futures
import hashlib
import logging
import os
import re
import shutil
import subprocess
import time
from dataclasses import dataclass, field

from . import timing as timing_mod
from .errors import ConfigError, SlidecastError
from .jsonio import SCHEMA_VERSION, dumps_compact, read_json, write_bytes, write_json, write_jsonl, write_text
from .matcher import match_location
from .model import MatchConfig, Transcript, WordTimestamp
from .ocr_ingest import OcrBackendDoc, ingest, load_backend_doc
from .providers import ProviderConfig, UsageLog, build_clients, generate_narration, run_ocr, synthesize_speech
from .renderer import HighlightStyle, RenderPlan, SlidePlan, render_video
from .transcript import context_for_marker

logger = logging.getLogger(__name__)

IMAGE_EXTENSIONS = (".png", ".jpg", ".jpeg")


class RasterizerMissing(ConfigError):
    """PDF input needs an external rasterizer that is not installed."""


@dataclass(frozen=True)
class PipelineConfig:
    """Everything a generate run depends on."""

    input_path: str
    workdir: str
    match: MatchConfig = field(default_factory=lambda: MatchConfig(granularity="word", method="llm"))
    timing_fallback: str = "off"
    fps: int = 30
    resolution: tuple[int, int] = (1920, 1080)
    style: HighlightStyle = field(default_factory=HighlightStyle)
    providers: dict = field(default_factory=dict)  # kind -> ProviderConfig
    offline_dir: str | None = None
    jobs: int = 1
    dpi: int = 150
    events_only: bool = False
    encoder: str = "ffmpeg"
    use_prior_context: bool = True

    def __post_init__(self):
        if self.jobs < 1:
            raise ConfigError("jobs must be >= 1")
        if self.dpi < 25:
            raise ConfigError("dpi must be >= 25")
        if self.timing_fallback not in timing_mod.FALLBACK_MODES:
            raise ConfigError(f"unknown timing fallback: {self.timing_fallback!r}")

    # --- stage config hashes -------------------------------------------------

    def _hash(self, payload: dict) -> str:
        return hashlib.sha256(dumps_compact(payload).encode("utf-8")).hexdigest()[:16]

    def sources_hash(self) -> str:
        return self._hash(
            {
                "offline_dir": self.offline_dir,
                "dpi": self.dpi,
                "use_prior_context": self.use_prior_context,
                "providers": {k: v.to_dict() for k, v in sorted(self.providers.items())},
            }
        )

    def match_hash(self) -> str:
        return self._hash({"sources": self.sources_hash(), "match": self.match.to_dict()})

    def events_hash(self) -> str:
        return self._hash({"match": self.match_hash(), "timing_fallback": self.timing_fallback})

    def stage_hashes(self) -> dict:
        return {
            "sources": self.sources_hash(),
            "match": self.match_hash(),
            "events": self.events_hash(),
        }


@dataclass
class SlideFailure:
    slide_index: int
    stage: str
    error: str

    def to_dict(self) -> dict:
        return {"slide_index": self.slide_index, "stage": self.stage, "error": self.error}


@dataclass
class GenerateResult:
    workdir: str
    slide_count: int
    failures: list[SlideFailure]
    video_path: str | None
    provider_calls: int

    @property
    def ok(self) -> bool:
        return not self.failures


def _natural_key(name: str):
    return [int(part) if part.isdigit() else part for part in re.split(r"(\d+)", name)]


def discover_slide_images(input_path: str, workdir: str, dpi: int) -> list[str]:
    """Absolute slide image paths in deck order.

    Directories are read as pre-rasterized decks (images in natural filename
    order); a .pdf input is rasterized into workdir/images with an external
    rasterizer (pdftoppm) at the configured DPI.
    """
    input_path = os.path.abspath(input_path)
    if os.path.isdir(input_path):
        names = [n for n in os.listdir(input_path) if n.lower().endswith(IMAGE_EXTENSIONS)]
        if not names:
            raise ConfigError(f"no slide images found under {input_path}")
        names.sort(key=_natural_key)
        return [os.path.join(input_path, n) for n in names]
    if input_path.lower().endswith(".pdf"):
        return rasterize_pdf(input_path, os.path.join(workdir, "images"), dpi)
    raise ConfigError(f"input must be a slide-image directory or a .pdf file: {input_path}")


def rasterize_pdf(pdf_path: str, out_dir: str, dpi: int, tool: str = "pdftoppm") -> list[str]:
    if shutil.which(tool) is None:
        raise RasterizerMissing(f"rasterizer binary {tool!r} not found on PATH")
    os.makedirs(out_dir, exist_ok=True)
    prefix = os.path.join(out_dir, "slide")
    proc = subprocess.run(
        [tool, "-r", str(dpi), "-png", pdf_path, prefix], capture_output=True, text=True
    )
    if proc.returncode != 0:
        raise SlidecastError(f"rasterizer failed: {proc.stderr.strip()[:400]}")
    names = sorted(
        (n for n in os.listdir(out_dir) if n.startswith("slide") and n.endswith(".png")),
        key=_natural_key,
    )
    return [os.path.join(out_dir, n) for n in names]


def log_stage(stage: str, slide: int | None, started: float, **extra) -> None:
    payload = {"stage": stage, "duration_ms": int((time.monotonic() - started) * 1000)}
    if slide is not None:
        payload["slide"] = slide
    payload.update(extra)
    logger.info(dumps_compact(payload))


class _Workdir:
    """Path helpers plus cache validity for one working directory."""

    def __init__(self, root: str, hashes: dict):
        self.root = os.path.abspath(root)
        self.hashes = hashes
        manifest_path = os.path.join(self.root, "manifest.json")
        previous = {}
        if os.path.exists(manifest_path):
            try:
                previous = read_json(manifest_path).get("hashes", {})
            except (OSError, ValueError):
                previous = {}
        self.valid_stage = {k: previous.get(k) == v for k, v in hashes.items()}

    def path(self, *parts: str) -> str:
        return os.path.join(self.root, *parts)

    def fresh(self, stage: str, *parts: str) -> bool:
        """True when the artifact exists and its stage config is unchanged."""
        return self.valid_stage.get(stage, False) and os.path.exists(self.path(*parts))

    def write_manifest(self, slide_count: int) -> None:
        write_json(
            self.path("manifest.json"),
            {"schema_version": SCHEMA_VERSION, "hashes": self.hashes, "slides": slide_count},
        )


def _read_image(path: str) -> bytes:
    with open(path, "rb") as fh:
        return fh.read()


def _narration_stage(cfg: PipelineConfig, wd: _Workdir, images: list[str], llm, failures) -> dict[int, Transcript]:
    """Sequential narration; returns transcripts by slide index."""
    transcripts: dict[int, Transcript] = {}
    prior = ""
    for n, image_path in enumerate(images):
        started = time.monotonic()
        txt_path = wd.path("transcripts", f"slide_{n}.txt")
        json_path = wd.path("transcripts", f"slide_{n}.json")
        try:
            if wd.fresh("sources", "transcripts", f"slide_{n}.json"):
                transcript = Transcript.from_dict(read_json(json_path)["transcript"])
            else:
                transcript = generate_narration(
                    _read_image(image_path), prior if cfg.use_prior_context else "", llm
                )
                write_text(txt_path, transcript.raw_text)
                write_json(
                    json_path,
                    {
                        "schema_version": SCHEMA_VERSION,
                        "config_hash": wd.hashes["sources"],
                        "transcript": transcript.to_dict(),
                    },
                )
            transcripts[n] = transcript
            prior = transcript.raw_text
            log_stage("narration", n, started)
        except Exception as exc:  # noqa: BLE001 - per-slide isolation
            logger.error("narration failed for slide %d: %s", n, exc)
            failures.append(SlideFailure(n, "narration", str(exc)))
    return transcripts


def _ocr_stage(cfg: PipelineConfig, wd: _Workdir, n: int, image_path: str, ocr_client):
    json_path = wd.path("ocr", f"{n}.json")
    tsv_path = wd.path("ocr", f"{n}.tsv")
    if wd.fresh("sources", "ocr", f"{n}.json"):
        return load_backend_doc(json_path, n)
    if wd.fresh("sources", "ocr", f"{n}.tsv"):
        return load_backend_doc(tsv_path, n)
    doc = run_ocr(_read_image(image_path), ocr_client, n)
    if doc.backend == "read_v4_json":
        write_json(json_path, doc.payload)
    else:
        write_text(tsv_path, str(doc.payload))
    return doc


def _layout_stage(cfg: PipelineConfig, wd: _Workdir, n: int, doc: OcrBackendDoc, page_size):
    from .model import OcrLayout

    layout_rel = ("layout", f"{n}.json")
    if wd.fresh("sources", *layout_rel):
        return OcrLayout.from_dict(read_json(wd.path(*layout_rel))["layout"])
    layout = ingest(doc, page_size[0], page_size[1])
    write_json(
        wd.path(*layout_rel),
        {
            "schema_version": SCHEMA_VERSION,
            "config_hash": wd.hashes["sources"],
            "layout": layout.to_dict(),
        },
    )
    return layout


def _tts_stage(cfg: PipelineConfig, wd: _Workdir, n: int, transcript: Transcript, tts_client):
    tts_rel = ("tts", f"{n}.json")
    audio_rel = ("audio", f"{n}.wav")
    if wd.fresh("sources", *tts_rel) and wd.fresh("sources", *audio_rel):
        timestamps = [WordTimestamp.from_dict(t) for t in read_json(wd.path(*tts_rel))]
        return wd.path(*audio_rel), timestamps
    audio, timestamps = synthesize_speech(transcript.stripped_text, tts_client)
    write_bytes(wd.path(*audio_rel), audio)
    write_json(wd.path(*tts_rel), [t.to_dict() for t in timestamps])
    return wd.path(*audio_rel), timestamps


def _match_stage(cfg: PipelineConfig, wd: _Workdir, n: int, transcript: Transcript, layout, llm):
    from .model import MatchResult

    match_rel = ("matches", f"{n}.json")
    if wd.fresh("match", *match_rel):
        doc = read_json(wd.path(*match_rel))
        return [MatchResult.from_dict(r["result"]) for r in doc["results"]]
    results = []
    for idx, marker in enumerate(transcript.markers):
        if cfg.match.method == "llm":
            before, after = context_for_marker(transcript, idx)
            result = match_location(
                marker.phrase, layout, cfg.match, llm=llm, context_before=before, context_after=after
            )
        else:
            result = match_location(marker.phrase, layout, cfg.match)
        results.append(result)
    write_json(
        wd.path(*match_rel),
        {
            "schema_version": SCHEMA_VERSION,
            "config_hash": wd.hashes["match"],
            "slide_index": n,
            "results": [
                {"marker_index": i, "phrase": m.phrase, "result": r.to_dict()}
                for i, (m, r) in enumerate(zip(transcript.markers, results))
            ],
        },
    )
    return results


def _audio_duration_ms(timestamps: list[WordTimestamp]) -> int:
    return timestamps[-1].end_ms if timestamps else 1


def generate_lecture(cfg: PipelineConfig) -> GenerateResult:
    """Run the full pipeline; returns a result with per-slide failures."""
    from .renderer import build_events

    usage_log = UsageLog()
    llm, tts, ocr_client = build_clients(cfg.providers, cfg.offline_dir, usage_log)
    wd = _Workdir(cfg.workdir, cfg.stage_hashes())
    os.makedirs(wd.root, exist_ok=True)

    images = discover_slide_images(cfg.input_path, wd.root, cfg.dpi)
    failures: list[SlideFailure] = []
    transcripts = _narration_stage(cfg, wd, images, llm, failures)

    slide_plans: dict[int, SlidePlan] = {}
    drops_by_slide: dict[int, list] = {}

    def process_slide(n: int) -> None:
        started = time.monotonic()
        transcript = transcripts[n]
        image_path = images[n]
        with_image_size = _page_size(image_path)
        doc = _ocr_stage(cfg, wd, n, image_path, ocr_client)
        layout = _layout_stage(cfg, wd, n, doc, with_image_size)
        audio_path, timestamps = _tts_stage(cfg, wd, n, transcript, tts)
        results = _match_stage(cfg, wd, n, transcript, layout, llm if cfg.match.method == "llm" else None)
        located = timing_mod.locate_markers(transcript, timestamps, fallback=cfg.timing_fallback)
        intervals = [interval for _marker, interval in located]
        events, drops = build_events(list(transcript.markers), results, intervals, layout)
        drops_by_slide[n] = drops
        slide_plans[n] = SlidePlan(
            slide_index=n,
            image_path=image_path,
            audio_path=audio_path,
            audio_duration_ms=_audio_duration_ms(timestamps),
            events=tuple(events),
        )
        log_stage("slide", n, started, markers=len(transcript.markers), events=len(events))

    ready = sorted(transcripts)
    if cfg.jobs == 1:
        for n in ready:
            try:
                process_slide(n)
            except Exception as exc:  # noqa: BLE001 - per-slide isolation
                logger.error("slide %d failed: %s", n, exc)
                failures.append(SlideFailure(n, "slide", str(exc)))
    else:
        with concurrent.futures.ThreadPoolExecutor(max_workers=cfg.jobs) as pool:
            futures = {pool.submit(process_slide, n): n for n in ready}
            for fut in concurrent.futures.as_completed(futures):
                n = futures[fut]
                try:
                    fut.result()
                except Exception as exc:  # noqa: BLE001 - per-slide isolation
                    logger.error("slide %d failed: %s", n, exc)
                    failures.append(SlideFailure(n, "slide", str(exc)))

    plan = RenderPlan(
        slides=tuple(slide_plans[n] for n in sorted(slide_plans)),
        fps=cfg.fps,
        resolution=cfg.resolution,
        style=cfg.style,
    )
    write_json(
        wd.path("plan.json"),
        {"schema_version": SCHEMA_VERSION, "config_hash": wd.hashes["events"], "plan": plan.to_dict()},
    )

    diagnostics = []
    for n in sorted(drops_by_slide):
        diagnostics.extend(d.to_dict() for d in drops_by_slide[n])
    for failure in sorted(failures, key=lambda f: (f.slide_index, f.stage)):
        diagnostics.append({"failure": failure.to_dict()})
    write_jsonl(wd.path("diagnostics.jsonl"), diagnostics)

    if len(usage_log):
        usage_log.write(wd.path("usage.jsonl"))

    video_path = render_video(
        plan, wd.root, encoder=cfg.encoder, events_only=cfg.events_only, config_hash=wd.hashes["events"]
    )

    wd.write_manifest(len(images))
    failures.sort(key=lambda f: (f.slide_index, f.stage))
    return GenerateResult(
        workdir=wd.root,
        slide_count=len(images),
        failures=failures,
        video_path=video_path,
        provider_calls=len(usage_log),
    )


def _page_size(image_path: str) -> tuple[int, int]:
    from PIL import Image

    with Image.open(image_path) as img:
        return img.size


def load_provider_configs(path: str) -> dict[str, ProviderConfig]:
    """Read a providers JSON file: {"llm": {...}, "tts": {...}, "ocr": {...}}."""
    doc = read_json(path)
    if not isinstance(doc, dict):
        raise ConfigError("providers file must be a JSON object keyed by provider kind")
    out = {}
    for kind, body in doc.items():
        if not isinstance(body, dict):
            raise ConfigError(f"provider entry {kind!r} must be an object")
        out[kind] = ProviderConfig.from_dict(body, kind=kind)
    return out
