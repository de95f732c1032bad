"""Mapping highlight markers onto speech-synthesis word timestamps.

A marker is spoken somewhere in the synthesized audio; this module finds the
audio interval of the marker's occurrence_index-th occurrence by exact
normalized word-run search over the timestamp sequence. An optional fuzzy
fallback (off by default) rescues cases where the TTS engine tokenizes
differently from the transcript, e.g. reading "w.r.t." as the four words
"w r t x" run together with the following word: qualifying windows are scored
on compacted text (alphanumerics only), because tokenization drift moves
spaces and punctuation around while the letters stay put.
"""

from __future__ import annotations

import logging

from .errors import SlidecastError
from .matcher import levenshtein
from .model import HighlightMarker, Transcript, WordTimestamp, normalize_words

logger = logging.getLogger(__name__)

FALLBACK_MODES = ("off", "fuzzy")
FALLBACK_THRESHOLD = 0.8
FALLBACK_SLACK = 2


class OccurrenceNotFound(SlidecastError):
    """The requested phrase occurrence does not exist in the timestamps."""


def _validate(timestamps: tuple[WordTimestamp, ...] | list[WordTimestamp]):
    if not timestamps:
        raise ValueError("timestamps must be non-empty")
    prev = -1
    for ts in timestamps:
        if ts.start_ms < prev:
            raise ValueError("timestamps must be ordered by non-decreasing start_ms")
        prev = ts.start_ms


def _flatten(timestamps) -> list[tuple[str, int]]:
    """Normalized words with back-pointers to their timestamp index.

    Timestamp entries that normalize to nothing (stray punctuation tokens)
    carry no words and are skipped; runs are contiguous in this word list.
    """
    flat = []
    for i, ts in enumerate(timestamps):
        for w in normalize_words(ts.word):
            flat.append((w, i))
    return flat


def _compact(text: str) -> str:
    return "".join(ch for ch in text if ch.isalnum())


def _fuzzy_occurrences(
    phrase_words: list[str], flat: list[tuple[str, int]], slack: int, threshold: float
) -> list[tuple[int, int]]:
    """Position-ordered fuzzy occurrences as (start, end) indices into flat.

    Overlapping qualifying windows describe the same spoken occurrence, so
    they are clustered; each cluster contributes its best window (earliest on
    ties).
    """
    target = _compact(" ".join(phrase_words))
    if not target:
        return []
    k = len(phrase_words)
    n = len(flat)
    qualifying = []
    for start in range(n):
        for size in range(max(1, k - slack), k + slack + 1):
            end = start + size - 1
            if end >= n:
                break
            window = _compact("".join(w for w, _i in flat[start : end + 1]))
            if not window:
                continue
            sim = 1.0 - levenshtein(target, window) / max(len(target), len(window))
            if sim > threshold:
                qualifying.append((start, end, sim))
    occurrences = []
    cluster_best = None
    cluster_end = -1
    for start, end, sim in qualifying:  # already in (start, end) order
        if cluster_best is not None and start > cluster_end:
            occurrences.append(cluster_best[:2])
            cluster_best = None
        if cluster_best is None or sim > cluster_best[2]:
            cluster_best = (start, end, sim)
        cluster_end = max(cluster_end, end)
    if cluster_best is not None:
        occurrences.append(cluster_best[:2])
    return occurrences


def lookup_time(
    marker: HighlightMarker,
    timestamps: list[WordTimestamp] | tuple[WordTimestamp, ...],
    fallback: str = "off",
) -> tuple[int, int]:
    """Audio interval (start_ms, end_ms) of the marker's phrase occurrence.

    Finds the occurrence_index-th contiguous run of timestamp words whose
    normalized forms equal the marker's normalized phrase words. With
    fallback="fuzzy", a windowed compacted-similarity search (> 0.8) runs
    when no exact run exists. Raises OccurrenceNotFound otherwise.
    """
    if fallback not in FALLBACK_MODES:
        raise ValueError(f"unknown fallback mode: {fallback!r}")
    _validate(timestamps)
    phrase_words = normalize_words(marker.phrase)
    if not phrase_words:
        raise OccurrenceNotFound(f"phrase {marker.phrase!r} has no words to locate")
    flat = _flatten(timestamps)
    k = len(phrase_words)

    starts = [
        s
        for s in range(len(flat) - k + 1)
        if all(flat[s + j][0] == phrase_words[j] for j in range(k))
    ]
    if len(starts) >= marker.occurrence_index:
        s = starts[marker.occurrence_index - 1]
        first = timestamps[flat[s][1]]
        last = timestamps[flat[s + k - 1][1]]
        return (first.start_ms, last.end_ms)

    if fallback == "fuzzy":
        occurrences = _fuzzy_occurrences(phrase_words, flat, FALLBACK_SLACK, FALLBACK_THRESHOLD)
        if len(occurrences) >= marker.occurrence_index:
            s, e = occurrences[marker.occurrence_index - 1]
            logger.info(
                "fuzzy timing fallback located %r (occurrence %d)",
                marker.phrase,
                marker.occurrence_index,
            )
            return (timestamps[flat[s][1]].start_ms, timestamps[flat[e][1]].end_ms)

    raise OccurrenceNotFound(
        f"occurrence {marker.occurrence_index} of phrase {marker.phrase!r} "
        f"not present in {len(timestamps)} timestamps"
    )


def locate_markers(
    transcript: Transcript,
    timestamps: list[WordTimestamp] | tuple[WordTimestamp, ...],
    fallback: str = "off",
) -> list[tuple[HighlightMarker, tuple[int, int] | None]]:
    """Intervals for every marker; None where the occurrence was not found.

    Missing occurrences never abort the slide; callers count them in
    diagnostics and drop the marker from rendering.
    """
    out = []
    for marker in transcript.markers:
        try:
            out.append((marker, lookup_time(marker, timestamps, fallback=fallback)))
        except OccurrenceNotFound as exc:
            logger.warning("dropping marker: %s", exc)
            out.append((marker, None))
    return out
