"""Locating marker phrases on the synthesized word-timestamp track."""

import random

import pytest

from slidecast.model import HighlightMarker, WordTimestamp, normalize_words
from slidecast.timing import OccurrenceNotFound, locate_markers, lookup_time
from slidecast.transcript import parse_transcript


def track(words, ms_per_word=100):
    return [
        WordTimestamp(word=w, start_ms=i * ms_per_word, end_ms=(i + 1) * ms_per_word)
        for i, w in enumerate(words)
    ]


def marker(phrase, occurrence=1):
    return HighlightMarker(
        phrase=phrase, occurrence_index=occurrence, word_offset=0, word_count=max(1, len(phrase.split()))
    )


def kth_run_oracle(phrase, timestamps, k):
    """Brute force: k-th exact run of normalized phrase words over the track."""
    target = normalize_words(phrase)
    flat = []
    for i, ts in enumerate(timestamps):
        for w in normalize_words(ts.word):
            flat.append((w, i))
    found = 0
    for s in range(len(flat) - len(target) + 1):
        if [w for w, _ in flat[s : s + len(target)]] == target:
            found += 1
            if found == k:
                first = timestamps[flat[s][1]]
                last = timestamps[flat[s + len(target) - 1][1]]
                return (first.start_ms, last.end_ms)
    return None


class TestExact:
    def test_interval_spans_phrase(self):
        ts = track(["we", "minimize", "the", "cross-entropy", "loss", "here"])
        # phrase covers words 3..4 at 100ms each: 300ms through 500ms
        assert lookup_time(marker("cross-entropy loss"), ts) == (300, 500)

    def test_frozen_300_800(self):
        ts = [
            WordTimestamp(word="intro", start_ms=0, end_ms=300),
            WordTimestamp(word="gradient", start_ms=300, end_ms=550),
            WordTimestamp(word="descent", start_ms=550, end_ms=800),
            WordTimestamp(word="works", start_ms=800, end_ms=1000),
        ]
        assert lookup_time(marker("gradient descent"), ts) == (300, 800)

    def test_second_occurrence(self):
        ts = track(["loss", "guides", "training", "the", "loss", "again"])
        assert lookup_time(marker("loss", occurrence=1), ts) == (0, 100)
        assert lookup_time(marker("loss", occurrence=2), ts) == (400, 500)

    def test_occurrence_past_end_raises(self):
        ts = track(["loss", "once"])
        with pytest.raises(OccurrenceNotFound):
            lookup_time(marker("loss", occurrence=2), ts)

    def test_case_and_punctuation_insensitive(self):
        ts = track(["The", "LOSS,", "matters"])
        assert lookup_time(marker("loss"), ts) == (100, 200)

    def test_multiword_token_in_track(self):
        # one timestamp token normalizing to two words still forms a run
        ts = track(["we", "use", "gradient descent", "now"])
        assert lookup_time(marker("gradient descent"), ts) == (200, 300)

    def test_abbreviation_tokens_match_exactly(self):
        ts = track(["differentiate", "w.r.t.", "x", "today"])
        assert lookup_time(marker("w.r.t. x"), ts) == (100, 300)

    def test_validation(self):
        with pytest.raises(ValueError):
            lookup_time(marker("x"), [])
        bad = [
            WordTimestamp(word="b", start_ms=500, end_ms=600),
            WordTimestamp(word="a", start_ms=0, end_ms=100),
        ]
        with pytest.raises(ValueError):
            lookup_time(marker("a"), bad)
        with pytest.raises(ValueError):
            lookup_time(marker("a"), track(["a"]), fallback="nope")


class TestFuzzyFallback:
    def test_off_by_default(self):
        # TTS split "w.r.t." into separate letter tokens; exact match fails
        ts = track(["differentiate", "w", "r", "t", "x", "today"])
        with pytest.raises(OccurrenceNotFound):
            lookup_time(marker("w.r.t. x"), ts)

    def test_fuzzy_rescues_tokenization_drift(self):
        ts = track(["differentiate", "w", "r", "t", "x", "today"])
        start, end = lookup_time(marker("w.r.t. x"), ts, fallback="fuzzy")
        assert (start, end) == (100, 500)

    def test_fuzzy_requires_close_compacted_text(self):
        ts = track(["completely", "different", "words"])
        with pytest.raises(OccurrenceNotFound):
            lookup_time(marker("w.r.t. x"), ts, fallback="fuzzy")

    def test_fuzzy_counts_occurrences_by_cluster(self):
        ts = track(["w", "r", "t", "x", "pad", "pad", "w", "r", "t", "x"])
        first = lookup_time(marker("w.r.t. x", occurrence=1), ts, fallback="fuzzy")
        second = lookup_time(marker("w.r.t. x", occurrence=2), ts, fallback="fuzzy")
        assert first == (0, 400)
        assert second == (600, 1000)

    def test_exact_wins_over_fuzzy(self):
        # both an exact and a fuzzy occurrence exist; exact route is used
        ts = track(["w.r.t.", "x", "pad", "w", "r", "t", "x"])
        assert lookup_time(marker("w.r.t. x"), ts, fallback="fuzzy") == (0, 200)


class TestLocateMarkers:
    def test_missing_markers_become_none(self, caplog):
        t = parse_transcript("say highlight(alpha) and highlight(missing) now")
        ts = track(["say", "alpha", "and", "nothing", "now"])
        with caplog.at_level("WARNING"):
            located = locate_markers(t, ts)
        assert located[0][1] == (100, 200)
        assert located[1][1] is None
        assert "dropping marker" in caplog.text

    def test_all_found(self):
        t = parse_transcript("first highlight(alpha) then highlight(beta) ends")
        ts = track(["first", "alpha", "then", "beta", "ends"])
        located = locate_markers(t, ts)
        assert [iv for _m, iv in located] == [(100, 200), (300, 400)]


class TestOracle:
    WORDS = ["loss", "the", "gradient", "descent", "x", "rate", "w.r.t.", "sum"]

    def test_exact_against_oracle(self):
        rng = random.Random(41)
        for _ in range(200):
            seq = [rng.choice(self.WORDS) for _ in range(rng.randint(1, 25))]
            ts = track(seq)
            phrase = " ".join(rng.choice(self.WORDS) for _ in range(rng.randint(1, 3)))
            for occ in (1, 2, 3):
                expected = kth_run_oracle(phrase, ts, occ)
                if expected is None:
                    with pytest.raises(OccurrenceNotFound):
                        lookup_time(marker(phrase, occ), ts)
                else:
                    assert lookup_time(marker(phrase, occ), ts) == expected
