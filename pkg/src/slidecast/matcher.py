"""Locating a spoken phrase among the OCR elements of a slide.

Three methods, each at word or line granularity:

* simple — exact matching on normalized text. Word granularity finds every
  contiguous run of word elements whose concatenated normalized words equal
  the normalized phrase; line granularity finds every line whose normalized
  text contains the normalized phrase as a substring.
* fuzzy — Levenshtein similarity on normalized text,
  sim(a, b) = 1 - distance / max(len(a), len(b)). Word granularity slides
  windows of k +/- slack consecutive words (k = phrase word count) and keeps
  the single best window scoring above the threshold, earliest window on
  ties; line granularity scores each line as the max of whole-line similarity
  and the best phrase-length character window inside the line, and keeps all
  lines above the threshold.
* llm — delegates the choice to a language model given the phrase, its
  spoken context, and the candidate elements enumerated in reading order.
"""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass

from .errors import SlidecastError
from .model import (
    MatchConfig,
    MatchResult,
    OcrLayout,
    normalize_text,
    normalize_words,
)

logger = logging.getLogger(__name__)


class MalformedReply(SlidecastError):
    """Model reply could not be parsed as an index array, even after retry."""


def levenshtein(a: str, b: str) -> int:
    """Edit distance (insert/delete/substitute, unit costs) between two strings."""
    if a == b:
        return 0
    # trim common prefix and suffix; they never affect the distance
    la, lb = len(a), len(b)
    lo = 0
    m = min(la, lb)
    while lo < m and a[lo] == b[lo]:
        lo += 1
    hi = 0
    while hi < m - lo and a[la - 1 - hi] == b[lb - 1 - hi]:
        hi += 1
    a = a[lo : la - hi]
    b = b[lo : lb - hi]
    if not a:
        return len(b)
    if not b:
        return len(a)
    if len(a) < len(b):
        a, b = b, a
    prev = list(range(len(b) + 1))
    for ia, ca in enumerate(a, 1):
        cur = [ia]
        append = cur.append
        c = ia
        pj = prev[0]
        row = prev
        for jb, cb in enumerate(b, 1):
            pjj = row[jb]
            v = pj if ca == cb else pj + 1
            if pjj + 1 < v:
                v = pjj + 1
            if c + 1 < v:
                v = c + 1
            append(v)
            c = v
            pj = pjj
        prev = cur
    return prev[-1]


def _sim_norm(na: str, nb: str) -> float:
    """Similarity of two already-normalized strings."""
    if not na and not nb:
        return 1.0
    return 1.0 - levenshtein(na, nb) / max(len(na), len(nb))


def similarity(a: str, b: str) -> float:
    """Levenshtein similarity in [0, 1] of two strings after normalization."""
    return _sim_norm(normalize_text(a), normalize_text(b))


def _element_words(layout: OcrLayout) -> list[list[str]]:
    return [normalize_words(w.text) for w in layout.words]


def find_word_runs(phrase: str, layout: OcrLayout) -> list[tuple[int, int]]:
    """All contiguous word-element runs exactly matching the phrase.

    Returns (start_id, end_id) inclusive pairs in reading order. A run matches
    when the concatenated normalized words of its elements equal the
    normalized phrase words; both edge elements must contribute at least one
    word (elements normalizing to nothing cannot dangle off a run).
    """
    target = normalize_words(phrase)
    if not target:
        return []
    words = _element_words(layout)
    n = len(words)
    k = len(target)
    runs = []
    for start in range(n):
        if not words[start]:
            continue
        seen = 0
        j = start
        while j < n:
            ws = words[j]
            if seen + len(ws) > k or ws != target[seen : seen + len(ws)]:
                break
            seen += len(ws)
            if seen == k and ws:
                runs.append((start, j))
                break
            j += 1
    return runs


def match_simple(phrase: str, layout: OcrLayout, granularity: str) -> MatchResult:
    """Exact matching; returns all matching elements in reading order."""
    target = normalize_text(phrase)
    if not target:
        return MatchResult(matched_ids=(), granularity=granularity, status="no_match")
    if granularity == "word":
        ids = sorted({i for s, e in find_word_runs(phrase, layout) for i in range(s, e + 1)})
    elif granularity == "line":
        ids = [ln.id for ln in layout.lines if target in normalize_text(ln.text)]
    else:
        raise ValueError(f"unknown granularity: {granularity!r}")
    if not ids:
        return MatchResult(matched_ids=(), granularity=granularity, status="no_match")
    return MatchResult(matched_ids=tuple(ids), granularity=granularity, status="matched")


def _best_word_window(
    phrase: str, layout: OcrLayout, threshold: float, slack: int
) -> tuple[float, int, int] | None:
    target_words = normalize_words(phrase)
    if not target_words:
        return None
    target = " ".join(target_words)
    lt = len(target)
    k = len(target_words)
    words = _element_words(layout)
    n = len(words)
    sizes = range(max(1, k - slack), k + slack + 1)
    best: tuple[float, int, int] | None = None
    # windows visited in (start, end) order so strict improvement keeps the
    # earliest window on score ties
    for start in range(n):
        for size in sizes:
            end = start + size - 1
            if end >= n:
                break
            window = " ".join(w for ws in words[start : end + 1] for w in ws)
            if not window:
                continue
            lw = len(window)
            # cheap upper bound on similarity from the length gap alone
            bound = 1.0 - abs(lt - lw) / max(lt, lw)
            if bound <= threshold or (best is not None and bound <= best[0]):
                continue
            score = _sim_norm(target, window)
            if score > threshold and (best is None or score > best[0]):
                best = (score, start, end)
    return best


def match_fuzzy(
    phrase: str,
    layout: OcrLayout,
    granularity: str,
    threshold: float = 0.8,
    slack: int = 2,
) -> MatchResult:
    """Levenshtein-similarity matching above a threshold."""
    target = normalize_text(phrase)
    if not target:
        return MatchResult(matched_ids=(), granularity=granularity, status="no_match")
    if granularity == "word":
        best = _best_word_window(phrase, layout, threshold, slack)
        if best is None:
            return MatchResult(matched_ids=(), granularity="word", status="no_match")
        score, start, end = best
        return MatchResult(
            matched_ids=tuple(range(start, end + 1)),
            granularity="word",
            status="matched",
            score=score,
        )
    if granularity != "line":
        raise ValueError(f"unknown granularity: {granularity!r}")
    lt = len(target)
    matched: list[int] = []
    best_score = 0.0
    for ln in layout.lines:
        norm_line = normalize_text(ln.text)
        score = _sim_norm(target, norm_line)
        # also try every phrase-length character window inside the line, so a
        # short phrase buried in a long line can still clear the threshold
        if len(norm_line) > lt:
            for off in range(len(norm_line) - lt + 1):
                s = _sim_norm(target, norm_line[off : off + lt])
                if s > score:
                    score = s
                    if score == 1.0:
                        break
        if score > threshold:
            matched.append(ln.id)
            best_score = max(best_score, score)
    if not matched:
        return MatchResult(matched_ids=(), granularity="line", status="no_match")
    return MatchResult(
        matched_ids=tuple(matched), granularity="line", status="matched", score=best_score
    )


@dataclass(frozen=True)
class LlmMatchRequest:
    """Everything the model needs to pick matching elements for one phrase."""

    phrase: str
    context_before: str
    context_after: str
    candidates: tuple[tuple[int, str], ...]  # (element id, verbatim text)

    def __post_init__(self):
        object.__setattr__(self, "candidates", tuple((i, t) for i, t in self.candidates))
        if not self.phrase:
            raise ValueError("phrase must be non-empty")


def _cap_words(text: str, max_words: int) -> list[str]:
    return text.split()[:max_words] if max_words else []


def build_match_request(
    phrase: str,
    layout: OcrLayout,
    granularity: str,
    context_before: str = "",
    context_after: str = "",
    max_context_words: int = 50,
) -> LlmMatchRequest:
    """Assemble the model request: candidates in reading order, context capped."""
    before = " ".join(context_before.split()[-max_context_words:])
    after = " ".join(_cap_words(context_after, max_context_words))
    candidates = tuple((e.id, e.text) for e in layout.elements(granularity))
    return LlmMatchRequest(
        phrase=phrase, context_before=before, context_after=after, candidates=candidates
    )


def render_match_prompt(request: LlmMatchRequest) -> str:
    """Prompt shown to the model; candidates enumerated 1-based, verbatim."""
    lines = [
        "Text preceding highlight phrase:",
        f"...{request.context_before}...",
        "",
        "Target Highlight Phrase:",
        f"`{request.phrase}`",
        "",
        "Text succeeding highlight phrase:",
        f"...{request.context_after}...",
        "",
        "Candidate OCR Text Elements from Slide:",
    ]
    for pos, (_el_id, text) in enumerate(request.candidates, 1):
        lines.append(f"{pos}. {text}")
    lines += [
        "",
        "Task:",
        "Considering the target phrase and its surrounding spoken context, pick the",
        "candidate element(s) above that correspond to what the narration refers to",
        "on the slide. Reply with a JSON array of 1-based candidate indices, e.g.",
        "[2] or [1, 3]. Reply [] if no candidate corresponds.",
    ]
    return "\n".join(lines)


_FENCE_RE = re.compile(r"^```[a-zA-Z]*\n(.*)\n```$", re.DOTALL)

RETRY_SUFFIX = "Reply with only a JSON array of integers."


def _parse_index_reply(reply: str) -> list[int] | None:
    text = reply.strip()
    fence = _FENCE_RE.match(text)
    if fence:
        text = fence.group(1).strip()
    try:
        data = json.loads(text)
    except json.JSONDecodeError:
        return None
    if not isinstance(data, list):
        return None
    out = []
    for item in data:
        if isinstance(item, bool) or not isinstance(item, int):
            return None
        out.append(item)
    return out


def match_llm(request: LlmMatchRequest, llm) -> MatchResult:
    """Ask the model to pick candidates; one reformat retry, then MalformedReply."""
    prompt = render_match_prompt(request)
    reply = llm.complete(prompt)
    indices = _parse_index_reply(reply)
    if indices is None:
        logger.warning("unparseable model reply %r; retrying with format reminder", reply[:80])
        reply = llm.complete(prompt + "\n" + RETRY_SUFFIX)
        indices = _parse_index_reply(reply)
        if indices is None:
            raise MalformedReply(f"model reply is not a JSON integer array: {reply[:200]!r}")
    n = len(request.candidates)
    kept = []
    for idx in indices:
        if 1 <= idx <= n:
            kept.append(idx)
        else:
            logger.warning("model returned out-of-range candidate index %d (n=%d)", idx, n)
    ids = sorted({request.candidates[idx - 1][0] for idx in kept})
    granularity = "word"  # overwritten by match_location; requests are granularity-free
    if not ids:
        return MatchResult(matched_ids=(), granularity=granularity, status="no_match")
    return MatchResult(matched_ids=tuple(ids), granularity=granularity, status="matched")


def match_location(
    phrase: str,
    layout: OcrLayout,
    cfg: MatchConfig,
    llm=None,
    context_before: str = "",
    context_after: str = "",
) -> MatchResult:
    """Dispatch one phrase lookup according to the configuration."""
    if cfg.method == "llm":
        if llm is None:
            raise ValueError("llm client required for method 'llm'")
    elif llm is not None:
        raise ValueError(f"llm client must not be passed for method {cfg.method!r}")

    if cfg.method == "simple":
        result = match_simple(phrase, layout, cfg.granularity)
    elif cfg.method == "fuzzy":
        result = match_fuzzy(
            phrase, layout, cfg.granularity, threshold=cfg.fuzzy_threshold, slack=cfg.fuzzy_window_slack
        )
    else:
        request = build_match_request(
            phrase, layout, cfg.granularity, context_before, context_after
        )
        raw = match_llm(request, llm)
        result = MatchResult(
            matched_ids=raw.matched_ids,
            granularity=cfg.granularity,
            status=raw.status,
            score=raw.score,
        )

    valid = {e.id for e in layout.elements(cfg.granularity)}
    for el_id in result.matched_ids:
        if el_id not in valid:
            raise SlidecastError(
                f"matcher returned id {el_id} not present at granularity {cfg.granularity!r}"
            )
    return result
