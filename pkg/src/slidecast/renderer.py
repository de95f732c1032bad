"""Turning matches plus timing into overlay events, frames and video.

Overlay timing is quantized to frames by flooring both interval edges:
an event spanning [start_ms, end_ms] is visible on every frame f with
floor(start_ms*fps/1000) <= f <= floor(end_ms*fps/1000). At word
granularity, horizontally adjacent word boxes on the same line merge into one
box when the gap between them is smaller than the median character width of
the slide; matched words on different lines stay separate boxes.

Video encoding shells out to an external encoder (ffmpeg by default) with a
pinned argument list; the per-slide event sidecars are written whether or not
an encoder is installed.
"""

from __future__ import annotations

import logging
import os
import shutil
import statistics
import subprocess
import tempfile
from dataclasses import dataclass, field

from PIL import Image, ImageDraw

from .errors import SlidecastError
from .jsonio import SCHEMA_VERSION, write_json
from .model import (
    HighlightMarker,
    MatchResult,
    OcrLayout,
    Polygon,
    RenderEvent,
    bounding_box,
)

logger = logging.getLogger(__name__)


class EncoderMissing(SlidecastError):
    """The configured external encoder binary is not on PATH."""


class EncoderFailed(SlidecastError):
    """The encoder subprocess exited non-zero; message carries its stderr."""


@dataclass(frozen=True)
class HighlightStyle:
    """Visual style of highlight overlays."""

    stroke_rgba: tuple[int, int, int, int] = (220, 30, 30, 255)
    stroke_width: int = 3
    corner_radius: int = 6
    fill_alpha: int = 40

    def __post_init__(self):
        object.__setattr__(self, "stroke_rgba", tuple(self.stroke_rgba))
        if len(self.stroke_rgba) != 4:
            raise ValueError("stroke_rgba must be an RGBA 4-tuple")
        if not (0 <= self.fill_alpha <= 255):
            raise ValueError("fill_alpha must be within 0..255")
        if self.stroke_width < 1:
            raise ValueError("stroke_width must be >= 1")
        if self.corner_radius < 0:
            raise ValueError("corner_radius must be >= 0")

    def to_dict(self) -> dict:
        return {
            "stroke_rgba": list(self.stroke_rgba),
            "stroke_width": self.stroke_width,
            "corner_radius": self.corner_radius,
            "fill_alpha": self.fill_alpha,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "HighlightStyle":
        return cls(
            stroke_rgba=tuple(d.get("stroke_rgba", (220, 30, 30, 255))),
            stroke_width=d.get("stroke_width", 3),
            corner_radius=d.get("corner_radius", 6),
            fill_alpha=d.get("fill_alpha", 40),
        )


@dataclass(frozen=True)
class SlidePlan:
    """Everything needed to render one slide's segment."""

    slide_index: int
    image_path: str
    audio_path: str
    audio_duration_ms: int
    events: tuple[RenderEvent, ...]

    def __post_init__(self):
        object.__setattr__(self, "events", tuple(self.events))
        if self.audio_duration_ms <= 0:
            raise ValueError("audio_duration_ms must be positive")
        for ev in self.events:
            if ev.end_ms > self.audio_duration_ms:
                raise ValueError(
                    f"event ends at {ev.end_ms}ms after audio end {self.audio_duration_ms}ms"
                )

    def to_dict(self) -> dict:
        return {
            "slide_index": self.slide_index,
            "image_path": self.image_path,
            "audio_path": self.audio_path,
            "audio_duration_ms": self.audio_duration_ms,
            "events": [e.to_dict() for e in self.events],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SlidePlan":
        return cls(
            slide_index=d["slide_index"],
            image_path=d["image_path"],
            audio_path=d["audio_path"],
            audio_duration_ms=d["audio_duration_ms"],
            events=tuple(RenderEvent.from_dict(e) for e in d["events"]),
        )


@dataclass(frozen=True)
class RenderPlan:
    """Whole-lecture render description."""

    slides: tuple[SlidePlan, ...]
    fps: int = 30
    resolution: tuple[int, int] = (1920, 1080)
    style: HighlightStyle = field(default_factory=HighlightStyle)

    def __post_init__(self):
        object.__setattr__(self, "slides", tuple(self.slides))
        object.__setattr__(self, "resolution", tuple(self.resolution))
        if self.fps <= 0:
            raise ValueError("fps must be positive")
        if len(self.resolution) != 2 or any(v <= 0 for v in self.resolution):
            raise ValueError("resolution must be a positive (width, height) pair")

    def to_dict(self) -> dict:
        return {
            "slides": [s.to_dict() for s in self.slides],
            "fps": self.fps,
            "resolution": list(self.resolution),
            "style": self.style.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RenderPlan":
        return cls(
            slides=tuple(SlidePlan.from_dict(s) for s in d["slides"]),
            fps=d.get("fps", 30),
            resolution=tuple(d.get("resolution", (1920, 1080))),
            style=HighlightStyle.from_dict(d.get("style", {})),
        )


def median_char_width(layout: OcrLayout) -> float:
    """Median per-character box width over the slide's word elements."""
    widths = []
    for w in layout.words:
        x0, _y0, x1, _y1 = bounding_box(w.polygon)
        if len(w.text) > 0 and x1 > x0:
            widths.append((x1 - x0) / len(w.text))
    return statistics.median(widths) if widths else 0.0


def _merge_word_boxes(word_ids: list[int], layout: OcrLayout) -> list[Polygon]:
    """One rectangle per visual run: same-line neighbors merge on small gaps."""
    gap_limit = median_char_width(layout)
    by_line: dict[int, list[tuple[int, int, int, int]]] = {}
    for wid in word_ids:
        word = layout.words[wid]
        by_line.setdefault(word.line_id, []).append(bounding_box(word.polygon))
    polygons = []
    for line_id in sorted(by_line):
        boxes = sorted(by_line[line_id])
        current = list(boxes[0])
        for box in boxes[1:]:
            if box[0] - current[2] < gap_limit:
                current[1] = min(current[1], box[1])
                current[2] = max(current[2], box[2])
                current[3] = max(current[3], box[3])
            else:
                polygons.append(_rect(current))
                current = list(box)
        polygons.append(_rect(current))
    return polygons


def _rect(b) -> Polygon:
    x0, y0, x1, y1 = b
    return Polygon(points=((x0, y0), (x1, y0), (x1, y1), (x0, y1)))


@dataclass(frozen=True)
class DroppedMarker:
    """Diagnostics row for a marker that produced no overlay."""

    slide_index: int
    phrase: str
    reason: str  # "no_match" | "no_timing" | "empty_interval"

    def to_dict(self) -> dict:
        return {"slide_index": self.slide_index, "phrase": self.phrase, "reason": self.reason}


def build_events(
    markers: list[HighlightMarker],
    match_results: list[MatchResult],
    time_intervals: list[tuple[int, int] | None],
    layout: OcrLayout,
) -> tuple[list[RenderEvent], list[DroppedMarker]]:
    """Combine matches and timing into overlay events.

    Inputs are parallel lists, one entry per marker. Markers without a match
    or without a located audio interval are dropped into the diagnostics
    list; they never abort the slide.
    """
    if not (len(markers) == len(match_results) == len(time_intervals)):
        raise ValueError("markers, match_results and time_intervals must be parallel")
    events: list[RenderEvent] = []
    drops: list[DroppedMarker] = []
    for marker, result, interval in zip(markers, match_results, time_intervals):
        if result.status != "matched":
            drops.append(DroppedMarker(layout.slide_index, marker.phrase, "no_match"))
            continue
        if interval is None:
            drops.append(DroppedMarker(layout.slide_index, marker.phrase, "no_timing"))
            continue
        start_ms, end_ms = interval
        if end_ms <= start_ms:
            drops.append(DroppedMarker(layout.slide_index, marker.phrase, "empty_interval"))
            continue
        if result.granularity == "word":
            polygons = _merge_word_boxes(list(result.matched_ids), layout)
        else:
            polygons = [layout.lines[i].polygon for i in result.matched_ids]
        events.append(
            RenderEvent(
                slide_index=layout.slide_index,
                polygons=tuple(polygons),
                start_ms=start_ms,
                end_ms=end_ms,
                phrase=marker.phrase,
            )
        )
    return events, drops


def frame_of(ms: int, fps: int) -> int:
    """Frame index containing the given time (floor quantization)."""
    return ms * fps // 1000


def event_frame_span(event: RenderEvent, fps: int) -> tuple[int, int]:
    """Inclusive frame range on which the event is visible."""
    return frame_of(event.start_ms, fps), frame_of(event.end_ms, fps)


def active_events(events, frame_index: int, fps: int) -> list[RenderEvent]:
    out = []
    for ev in events:
        first, last = event_frame_span(ev, fps)
        if first <= frame_index <= last:
            out.append(ev)
    return out


def compose_frame(
    base: Image.Image, events, frame_index: int, fps: int, style: HighlightStyle | None = None
) -> Image.Image:
    """Base slide plus the overlays active on this frame.

    Returns the base image unchanged (converted to RGB) when nothing is
    active, so inactive frames are pixel-identical to the slide.
    """
    style = style or HighlightStyle()
    active = active_events(events, frame_index, fps)
    frame = base.convert("RGB")
    if not active:
        return frame
    overlay = Image.new("RGBA", frame.size, (0, 0, 0, 0))
    draw = ImageDraw.Draw(overlay)
    for ev in active:
        for poly in ev.polygons:
            x0, y0, x1, y1 = bounding_box(poly)
            if x1 <= x0 or y1 <= y0:
                raise SlidecastError(f"degenerate highlight box {x0, y0, x1, y1} in event {ev.phrase!r}")
            radius = min(style.corner_radius, (x1 - x0) // 2, (y1 - y0) // 2)
            fill = style.stroke_rgba[:3] + (style.fill_alpha,)
            draw.rounded_rectangle(
                (x0, y0, x1, y1),
                radius=radius,
                fill=fill,
                outline=style.stroke_rgba,
                width=min(style.stroke_width, max(1, (x1 - x0) // 2), max(1, (y1 - y0) // 2)),
            )
    return Image.alpha_composite(frame.convert("RGBA"), overlay).convert("RGB")


def slide_frame_count(duration_ms: int, fps: int) -> int:
    """Frames needed to cover the audio duration (ceiling, at least one)."""
    return max(1, -(-duration_ms * fps // 1000))


def iter_frames(slide: SlidePlan, fps: int, style: HighlightStyle):
    """Yield every frame of one slide's segment as an RGB image."""
    with Image.open(slide.image_path) as base:
        base = base.convert("RGB")
        for f in range(slide_frame_count(slide.audio_duration_ms, fps)):
            yield compose_frame(base, slide.events, f, fps, style)


def write_event_sidecars(plan: RenderPlan, out_dir: str, config_hash: str = "") -> list[str]:
    """events/<slide_index>.json for every slide; always written."""
    events_dir = os.path.join(out_dir, "events")
    paths = []
    for slide in plan.slides:
        doc = {
            "schema_version": SCHEMA_VERSION,
            "config_hash": config_hash,
            "slide_index": slide.slide_index,
            "events": [e.to_dict() for e in slide.events],
        }
        path = os.path.join(events_dir, f"{slide.slide_index}.json")
        write_json(path, doc)
        paths.append(path)
    return paths


def _encode_args(encoder: str, fps: int, frames_pattern: str, audio: str, resolution, segment: str) -> list[str]:
    w, h = resolution
    scale = f"scale={w}:{h}:force_original_aspect_ratio=decrease,pad={w}:{h}:(ow-iw)/2:(oh-ih)/2"
    return [
        encoder, "-y", "-loglevel", "error",
        "-framerate", str(fps), "-i", frames_pattern,
        "-i", audio,
        "-vf", scale,
        "-c:v", "libx264", "-preset", "medium", "-crf", "18", "-pix_fmt", "yuv420p",
        "-c:a", "aac", "-b:a", "192k",
        "-shortest",
        segment,
    ]


def _concat_args(encoder: str, list_path: str, output: str) -> list[str]:
    return [
        encoder, "-y", "-loglevel", "error",
        "-f", "concat", "-safe", "0", "-i", list_path,
        "-c", "copy",
        output,
    ]


def _run_encoder(args: list[str]) -> None:
    proc = subprocess.run(args, capture_output=True, text=True)
    if proc.returncode != 0:
        tail = proc.stderr.strip().splitlines()[-15:]
        raise EncoderFailed(
            f"encoder exited {proc.returncode} for {' '.join(args[:3])}...: " + " | ".join(tail)
        )


def render_video(
    plan: RenderPlan,
    out_dir: str,
    encoder: str = "ffmpeg",
    events_only: bool = False,
    config_hash: str = "",
) -> str | None:
    """Render the lecture into out_dir.

    Event sidecars are always written. With events_only=True no encoder is
    needed and no video is produced; otherwise returns the path of the
    concatenated video. Raises EncoderMissing/EncoderFailed accordingly.
    """
    write_event_sidecars(plan, out_dir, config_hash)
    if events_only:
        return None
    if shutil.which(encoder) is None:
        raise EncoderMissing(f"encoder binary {encoder!r} not found on PATH")
    os.makedirs(out_dir, exist_ok=True)
    segments = []
    with tempfile.TemporaryDirectory(dir=out_dir, prefix=".frames-") as tmp:
        for slide in plan.slides:
            frame_dir = os.path.join(tmp, f"slide_{slide.slide_index}")
            os.makedirs(frame_dir)
            for i, frame in enumerate(iter_frames(slide, plan.fps, plan.style)):
                frame.save(os.path.join(frame_dir, f"{i:06d}.png"))
            segment = os.path.join(tmp, f"segment_{slide.slide_index}.mp4")
            logger.info("encoding slide %d segment", slide.slide_index)
            _run_encoder(
                _encode_args(
                    encoder,
                    plan.fps,
                    os.path.join(frame_dir, "%06d.png"),
                    slide.audio_path,
                    plan.resolution,
                    segment,
                )
            )
            segments.append(segment)
        list_path = os.path.join(tmp, "segments.txt")
        with open(list_path, "w", encoding="utf-8") as fh:
            for seg in segments:
                fh.write(f"file '{seg}'\n")
        output = os.path.join(out_dir, "lecture.mp4")
        _run_encoder(_concat_args(encoder, list_path, output))
    return output
