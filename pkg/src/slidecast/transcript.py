"""Parsing of marker-annotated narration transcripts.

Narration text wraps key phrases in ``highlight(...)`` markers, e.g.::

    It uses highlight(gradient descent) to find minima.

Markers are non-nested; their body may contain balanced parentheses
("highlight(f(x))" is one marker with phrase "f(x)"). Parsing produces the
stripped text actually sent to speech synthesis plus one HighlightMarker per
marker, positioned in the normalized word sequence of the stripped text.
"""

from __future__ import annotations

import re

from .errors import SlidecastError
from .model import HighlightMarker, Transcript, normalize_token, normalize_words

MARKER_OPEN = "highlight("

_TOKEN_RE = re.compile(r"\S+")


class MarkerSyntaxError(SlidecastError):
    """Base for marker parse failures; carries the raw-text character offset."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} at character offset {offset}")
        self.offset = offset


class UnbalancedMarker(MarkerSyntaxError):
    def __init__(self, offset: int):
        super().__init__("unbalanced highlight marker", offset)


class NestedMarker(MarkerSyntaxError):
    def __init__(self, offset: int):
        super().__init__("nested highlight marker", offset)


class EmptyMarker(MarkerSyntaxError):
    """Marker whose phrase normalizes to zero words, e.g. highlight(***)."""

    def __init__(self, offset: int):
        super().__init__("marker phrase has no words", offset)


def _scan(raw: str) -> tuple[str, list[tuple[str, int, int, int]]]:
    """Split raw text into stripped text plus marker spans.

    Returns (stripped_text, spans) where each span is
    (phrase, start_in_stripped, end_in_stripped, opener_offset_in_raw).
    """
    parts: list[str] = []
    spans: list[tuple[str, int, int, int]] = []
    out_len = 0
    i = 0
    n = len(raw)
    while True:
        j = raw.find(MARKER_OPEN, i)
        if j == -1:
            parts.append(raw[i:])
            break
        parts.append(raw[i:j])
        out_len += j - i
        k = j + len(MARKER_OPEN)
        depth = 1
        while k < n:
            if raw.startswith(MARKER_OPEN, k):
                raise NestedMarker(k)
            ch = raw[k]
            if ch == "(":
                depth += 1
            elif ch == ")":
                depth -= 1
                if depth == 0:
                    break
            k += 1
        if depth != 0:
            raise UnbalancedMarker(j)
        phrase = raw[j + len(MARKER_OPEN) : k]
        parts.append(phrase)
        spans.append((phrase, out_len, out_len + len(phrase), j))
        out_len += len(phrase)
        i = k + 1
    return "".join(parts), spans


def _token_spans(stripped: str) -> list[tuple[int, int, str]]:
    return [(m.start(), m.end(), m.group()) for m in _TOKEN_RE.finditer(stripped)]


def parse_transcript(raw_text: str) -> Transcript:
    """Parse raw narration into stripped text plus positioned markers.

    Raises UnbalancedMarker / NestedMarker / EmptyMarker with the character
    offset of the offending marker in the raw text.
    """
    stripped, spans = _scan(raw_text)
    tokens = _token_spans(stripped)

    # Flatten the normalized word sequence, remembering which normalized words
    # each whitespace token produced.
    norm_words: list[str] = []
    token_word_range: list[tuple[int, int]] = []
    for _ts, _te, tok in tokens:
        words = normalize_token(tok)
        token_word_range.append((len(norm_words), len(norm_words) + len(words)))
        norm_words.extend(words)

    markers = []
    for phrase, ps, pe, raw_offset in spans:
        phrase_words = normalize_words(phrase)
        if not phrase_words:
            raise EmptyMarker(raw_offset)
        # Tokens whose span overlaps the phrase span; a marker that starts or
        # ends mid-word snaps to the containing token.
        first_word = None
        last_word = None
        for (ts, te, _tok), (w0, w1) in zip(tokens, token_word_range):
            if te <= ps or ts >= pe:
                continue
            if w1 > w0:
                if first_word is None:
                    first_word = w0
                last_word = w1
        if first_word is None or last_word is None:
            raise EmptyMarker(raw_offset)
        word_offset = first_word
        word_count = last_word - first_word

        # 1-based rank of this occurrence among equal phrase-word runs in the
        # stripped transcript, counting runs that start at or before this one.
        k = len(phrase_words)
        occurrence = 0
        for s in range(0, word_offset + 1):
            if norm_words[s : s + k] == phrase_words:
                occurrence += 1
        markers.append(
            HighlightMarker(
                phrase=phrase,
                occurrence_index=max(1, occurrence),
                word_offset=word_offset,
                word_count=word_count,
            )
        )

    return Transcript(raw_text=raw_text, stripped_text=stripped, markers=tuple(markers))


def tts_input(transcript: Transcript) -> str:
    """Text to hand to speech synthesis: the stripped transcript verbatim."""
    return transcript.stripped_text


def context_for_marker(
    transcript: Transcript, marker_index: int, max_words: int = 50
) -> tuple[str, str]:
    """Raw-text context around one marker, capped at max_words per side.

    Context is taken from the stripped transcript (what the audience hears),
    as whitespace tokens, not normalized words, so prompts read naturally.
    """
    if not (0 <= marker_index < len(transcript.markers)):
        raise IndexError(f"marker index {marker_index} out of range")
    _stripped, spans = _scan(transcript.raw_text)
    _phrase, ps, pe, _raw_offset = spans[marker_index]
    tokens = _token_spans(transcript.stripped_text)
    first = None
    last = None
    for ti, (ts, te, _tok) in enumerate(tokens):
        if te <= ps or ts >= pe:
            continue
        if first is None:
            first = ti
        last = ti
    if first is None or last is None:
        return "", ""
    before = " ".join(t[2] for t in tokens[max(0, first - max_words) : first])
    after = " ".join(t[2] for t in tokens[last + 1 : last + 1 + max_words])
    return before, after
