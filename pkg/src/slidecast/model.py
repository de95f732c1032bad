"""Core value types shared across the pipeline.

Conventions used throughout the package:

* Geometry is integer pixels in slide-image space, origin at the top-left
  corner, x growing right and y growing down.
* Text comparisons never happen on raw strings. ``normalize_text`` is the
  single normalization used by matching, timing and transcript bookkeeping;
  raw text is preserved verbatim on every element for display and prompts.
* All types are immutable after construction and serialize to key-sorted
  JSON dicts via ``to_dict``.
"""

from __future__ import annotations

import re
import unicodedata
from dataclasses import dataclass

GRANULARITIES = ("word", "line")
METHODS = ("simple", "fuzzy", "llm")

# Token made of single alphanumeric characters separated by periods, like
# "w.r.t." or "e.g." or "1.2.3"; such tokens keep their periods.
_ABBREV_RE = re.compile(r"^(?:[^\W_]\.)+[^\W_]?$")


def _filter_token(token: str) -> str:
    # Pass 1: drop everything that is not alphanumeric, hyphen or period.
    kept = "".join(ch for ch in token if ch.isalnum() or ch in "-.")
    if not kept:
        return ""
    is_abbrev = bool(_ABBREV_RE.match(kept))
    out = []
    last = len(kept) - 1
    for i, ch in enumerate(kept):
        if ch == ".":
            if is_abbrev:
                out.append(ch)
            elif 0 < i < last and kept[i - 1].isdigit() and kept[i + 1].isdigit():
                out.append(ch)  # decimal point, e.g. "3.14"
        elif ch == "-":
            if 0 < i < last and kept[i - 1].isalnum() and kept[i + 1].isalnum():
                out.append(ch)  # intra-word hyphen, e.g. "cross-entropy"
        else:
            out.append(ch)
    return "".join(out)


def normalize_token(token: str) -> list[str]:
    """Normalize one whitespace-delimited token; may yield 0..n words."""
    # NFKC + casefold + NFKC is the Unicode NFKC_Casefold construction; unlike
    # plain NFKC+lower it is idempotent, which downstream bookkeeping relies on.
    token = unicodedata.normalize("NFKC", token)
    token = unicodedata.normalize("NFKC", token.casefold())
    words = []
    for piece in token.split():
        piece = _filter_token(piece)
        if piece:
            words.append(piece)
    return words


def normalize_text(text: str) -> str:
    """Canonical comparison form of a string.

    Compatibility-normalized, case-folded, punctuation stripped except
    intra-word hyphens ("cross-entropy"), abbreviation periods ("w.r.t.") and
    decimal points ("3.14"), whitespace collapsed to single spaces, trimmed.
    Idempotent: normalize_text(normalize_text(s)) == normalize_text(s).
    """
    return " ".join(w for tok in text.split() for w in normalize_token(tok))


def normalize_words(text: str) -> list[str]:
    """Normalized word sequence of a string (normalize_text, split on spaces)."""
    return [w for tok in text.split() for w in normalize_token(tok)]


@dataclass(frozen=True)
class Polygon:
    """Closed polygon in pixel space; stored as the ordered vertex list."""

    points: tuple[tuple[int, int], ...]

    def __post_init__(self):
        pts = tuple((int(x), int(y)) for x, y in self.points)
        if len(pts) < 3:
            raise ValueError(f"polygon needs >= 3 points, got {len(pts)}")
        for x, y in pts:
            if x < 0 or y < 0:
                raise ValueError(f"negative coordinate in polygon: ({x}, {y})")
        object.__setattr__(self, "points", pts)

    def to_dict(self) -> dict:
        return {"points": [[x, y] for x, y in self.points]}

    @classmethod
    def from_dict(cls, d: dict) -> "Polygon":
        return cls(points=tuple((p[0], p[1]) for p in d["points"]))


def bounding_box(polygon: Polygon) -> tuple[int, int, int, int]:
    """Axis-aligned bounds of a polygon as (x_min, y_min, x_max, y_max)."""
    xs = [p[0] for p in polygon.points]
    ys = [p[1] for p in polygon.points]
    return (min(xs), min(ys), max(xs), max(ys))


@dataclass(frozen=True)
class OcrElement:
    """One recognized text element: a word or a whole line."""

    id: int
    level: str  # "word" | "line"
    polygon: Polygon
    text: str
    line_id: int | None = None  # parent line for words, None for lines

    def __post_init__(self):
        if self.id < 0:
            raise ValueError(f"element id must be >= 0, got {self.id}")
        if self.level not in GRANULARITIES:
            raise ValueError(f"unknown element level: {self.level!r}")
        if self.level == "line" and self.line_id is not None:
            raise ValueError("line elements must not carry a line_id")
        if self.level == "word" and self.line_id is None:
            raise ValueError("word elements must carry a line_id")

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "level": self.level,
            "line_id": self.line_id,
            "polygon": self.polygon.to_dict(),
            "text": self.text,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "OcrElement":
        return cls(
            id=d["id"],
            level=d["level"],
            polygon=Polygon.from_dict(d["polygon"]),
            text=d["text"],
            line_id=d.get("line_id"),
        )


@dataclass(frozen=True)
class OcrLayout:
    """All OCR elements of one slide, in reading order with dense ids."""

    slide_index: int
    page_width: int
    page_height: int
    lines: tuple[OcrElement, ...]
    words: tuple[OcrElement, ...]

    def __post_init__(self):
        if self.slide_index < 0:
            raise ValueError("slide_index must be >= 0")
        if self.page_width <= 0 or self.page_height <= 0:
            raise ValueError("page dimensions must be positive")
        object.__setattr__(self, "lines", tuple(self.lines))
        object.__setattr__(self, "words", tuple(self.words))
        for seq, level in ((self.lines, "line"), (self.words, "word")):
            for i, el in enumerate(seq):
                if el.id != i:
                    raise ValueError(f"{level} ids must be dense 0..n-1, got {el.id} at {i}")
                if el.level != level:
                    raise ValueError(f"{level} list contains a {el.level} element")
        line_ids = set(range(len(self.lines)))
        for w in self.words:
            if w.line_id not in line_ids:
                raise ValueError(f"word {w.id} references unknown line {w.line_id}")

    def elements(self, granularity: str) -> tuple[OcrElement, ...]:
        if granularity == "word":
            return self.words
        if granularity == "line":
            return self.lines
        raise ValueError(f"unknown granularity: {granularity!r}")

    def to_dict(self) -> dict:
        return {
            "slide_index": self.slide_index,
            "page_width": self.page_width,
            "page_height": self.page_height,
            "lines": [e.to_dict() for e in self.lines],
            "words": [e.to_dict() for e in self.words],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "OcrLayout":
        return cls(
            slide_index=d["slide_index"],
            page_width=d["page_width"],
            page_height=d["page_height"],
            lines=tuple(OcrElement.from_dict(e) for e in d["lines"]),
            words=tuple(OcrElement.from_dict(e) for e in d["words"]),
        )


@dataclass(frozen=True)
class HighlightMarker:
    """One highlight(...) marker extracted from a narration transcript.

    word_offset/word_count index into the normalized word sequence of the
    stripped transcript; occurrence_index is the 1-based rank of this phrase
    occurrence among identical phrase occurrences in that word sequence.
    """

    phrase: str
    occurrence_index: int
    word_offset: int
    word_count: int

    def __post_init__(self):
        if not self.phrase:
            raise ValueError("marker phrase must be non-empty")
        if self.occurrence_index < 1:
            raise ValueError("occurrence_index is 1-based, must be >= 1")
        if self.word_offset < 0:
            raise ValueError("word_offset must be >= 0")
        if self.word_count < 1:
            raise ValueError("word_count must be >= 1")

    def to_dict(self) -> dict:
        return {
            "phrase": self.phrase,
            "occurrence_index": self.occurrence_index,
            "word_offset": self.word_offset,
            "word_count": self.word_count,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "HighlightMarker":
        return cls(
            phrase=d["phrase"],
            occurrence_index=d["occurrence_index"],
            word_offset=d["word_offset"],
            word_count=d["word_count"],
        )


@dataclass(frozen=True)
class Transcript:
    """Narration text for one slide: raw marker form plus the spoken form."""

    raw_text: str
    stripped_text: str
    markers: tuple[HighlightMarker, ...]

    def __post_init__(self):
        object.__setattr__(self, "markers", tuple(self.markers))
        offsets = [m.word_offset for m in self.markers]
        if offsets != sorted(offsets):
            raise ValueError("markers must be ordered by word_offset")

    def to_dict(self) -> dict:
        return {
            "raw_text": self.raw_text,
            "stripped_text": self.stripped_text,
            "markers": [m.to_dict() for m in self.markers],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Transcript":
        return cls(
            raw_text=d["raw_text"],
            stripped_text=d["stripped_text"],
            markers=tuple(HighlightMarker.from_dict(m) for m in d["markers"]),
        )


@dataclass(frozen=True)
class WordTimestamp:
    """One spoken word with its audio interval in milliseconds."""

    word: str
    start_ms: int
    end_ms: int

    def __post_init__(self):
        if self.start_ms < 0:
            raise ValueError("start_ms must be >= 0")
        if self.end_ms < self.start_ms:
            raise ValueError("end_ms must be >= start_ms")

    def to_dict(self) -> dict:
        return {"word": self.word, "start_ms": self.start_ms, "end_ms": self.end_ms}

    @classmethod
    def from_dict(cls, d: dict) -> "WordTimestamp":
        return cls(word=d["word"], start_ms=d["start_ms"], end_ms=d["end_ms"])


@dataclass(frozen=True)
class MatchConfig:
    """Which matching configuration to run: granularity x method plus knobs."""

    granularity: str
    method: str
    fuzzy_threshold: float = 0.8
    fuzzy_window_slack: int = 2

    def __post_init__(self):
        if self.granularity not in GRANULARITIES:
            raise ValueError(f"unknown granularity: {self.granularity!r}")
        if self.method not in METHODS:
            raise ValueError(f"unknown method: {self.method!r}")
        if not (0.0 < self.fuzzy_threshold <= 1.0):
            raise ValueError("fuzzy_threshold must be in (0, 1]")
        if self.fuzzy_window_slack < 0:
            raise ValueError("fuzzy_window_slack must be >= 0")

    @property
    def code(self) -> str:
        """Two-letter configuration code, e.g. word+fuzzy -> 'WF'."""
        return self.granularity[0].upper() + self.method[0].upper()

    def to_dict(self) -> dict:
        return {
            "granularity": self.granularity,
            "method": self.method,
            "fuzzy_threshold": self.fuzzy_threshold,
            "fuzzy_window_slack": self.fuzzy_window_slack,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MatchConfig":
        return cls(
            granularity=d["granularity"],
            method=d["method"],
            fuzzy_threshold=d.get("fuzzy_threshold", 0.8),
            fuzzy_window_slack=d.get("fuzzy_window_slack", 2),
        )


@dataclass(frozen=True)
class MatchResult:
    """Outcome of locating one phrase on one slide layout."""

    matched_ids: tuple[int, ...]
    granularity: str
    status: str  # "matched" | "no_match"
    score: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "matched_ids", tuple(self.matched_ids))
        if self.granularity not in GRANULARITIES:
            raise ValueError(f"unknown granularity: {self.granularity!r}")
        if self.status not in ("matched", "no_match"):
            raise ValueError(f"unknown status: {self.status!r}")
        if self.status == "matched" and not self.matched_ids:
            raise ValueError("matched result must carry at least one id")
        if self.status == "no_match" and self.matched_ids:
            raise ValueError("no_match result must carry no ids")

    def to_dict(self) -> dict:
        return {
            "matched_ids": list(self.matched_ids),
            "granularity": self.granularity,
            "status": self.status,
            "score": self.score,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MatchResult":
        return cls(
            matched_ids=tuple(d["matched_ids"]),
            granularity=d["granularity"],
            status=d["status"],
            score=d.get("score"),
        )


@dataclass(frozen=True)
class RenderEvent:
    """One highlight overlay: boxes on a slide, visible over a time interval."""

    slide_index: int
    polygons: tuple[Polygon, ...]
    start_ms: int
    end_ms: int
    phrase: str

    def __post_init__(self):
        object.__setattr__(self, "polygons", tuple(self.polygons))
        if self.slide_index < 0:
            raise ValueError("slide_index must be >= 0")
        if not self.polygons:
            raise ValueError("render event needs at least one polygon")
        if self.start_ms < 0:
            raise ValueError("start_ms must be >= 0")
        if self.end_ms <= self.start_ms:
            raise ValueError("end_ms must be > start_ms")

    def to_dict(self) -> dict:
        return {
            "slide_index": self.slide_index,
            "polygons": [p.to_dict() for p in self.polygons],
            "start_ms": self.start_ms,
            "end_ms": self.end_ms,
            "phrase": self.phrase,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RenderEvent":
        return cls(
            slide_index=d["slide_index"],
            polygons=tuple(Polygon.from_dict(p) for p in d["polygons"]),
            start_ms=d["start_ms"],
            end_ms=d["end_ms"],
            phrase=d["phrase"],
        )
