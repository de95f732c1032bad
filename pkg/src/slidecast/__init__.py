"""Narrated lecture videos from slide decks, with synchronized highlights.

A deck goes in; per slide, a language model writes narration with inline
highlight(...) markers, speech synthesis produces audio with word timestamps,
OCR produces text layout, and the markers are matched to layout locations and
timed against the audio. The result is a render plan of highlight events and,
when an encoder is available, a finished video.
"""

from .costmodel import CostBreakdown, PriceSheet, SlideUsage, lecture_cost, slide_cost
from .errors import ConfigError, SlidecastError
from .evalkit import EvalReport, evaluate, load_dataset
from .matcher import levenshtein, match_location, similarity
from .model import (
    HighlightMarker,
    MatchConfig,
    MatchResult,
    OcrElement,
    OcrLayout,
    Polygon,
    RenderEvent,
    Transcript,
    WordTimestamp,
    normalize_text,
    normalize_words,
)
from .ocr_ingest import ingest, load_backend_doc
from .pipeline import PipelineConfig, generate_lecture
from .renderer import HighlightStyle, RenderPlan, SlidePlan, render_video
from .timing import locate_markers, lookup_time
from .transcript import parse_transcript

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "CostBreakdown",
    "EvalReport",
    "HighlightMarker",
    "HighlightStyle",
    "MatchConfig",
    "MatchResult",
    "OcrElement",
    "OcrLayout",
    "PipelineConfig",
    "Polygon",
    "PriceSheet",
    "RenderEvent",
    "RenderPlan",
    "SlidePlan",
    "SlideUsage",
    "SlidecastError",
    "Transcript",
    "WordTimestamp",
    "__version__",
    "evaluate",
    "generate_lecture",
    "ingest",
    "lecture_cost",
    "levenshtein",
    "load_backend_doc",
    "load_dataset",
    "locate_markers",
    "lookup_time",
    "match_location",
    "normalize_text",
    "normalize_words",
    "parse_transcript",
    "render_video",
    "similarity",
    "slide_cost",
]
