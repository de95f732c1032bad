"""Phrase matching: distance metric, exact/fuzzy search, model protocol."""

import random

import pytest

from slidecast.matcher import (
    RETRY_SUFFIX,
    MalformedReply,
    build_match_request,
    find_word_runs,
    levenshtein,
    match_fuzzy,
    match_llm,
    match_location,
    match_simple,
    render_match_prompt,
    similarity,
)
from slidecast.model import MatchConfig, normalize_text, normalize_words
from slidecast.providers import ScriptedLlm

from conftest import make_layout


# --- independent oracles ------------------------------------------------------


def lev_oracle(a: str, b: str) -> int:
    """Classic full-matrix edit distance."""
    la, lb = len(a), len(b)
    dp = [[0] * (lb + 1) for _ in range(la + 1)]
    for i in range(la + 1):
        dp[i][0] = i
    for j in range(lb + 1):
        dp[0][j] = j
    for i in range(1, la + 1):
        for j in range(1, lb + 1):
            cost = 0 if a[i - 1] == b[j - 1] else 1
            dp[i][j] = min(dp[i - 1][j] + 1, dp[i][j - 1] + 1, dp[i - 1][j - 1] + cost)
    return dp[la][lb]


def runs_oracle(phrase, layout):
    """Brute force every (start, end) pair of word elements."""
    target = normalize_words(phrase)
    if not target:
        return []
    words = [normalize_words(w.text) for w in layout.words]
    runs = []
    for s in range(len(words)):
        for e in range(s, len(words)):
            concat = [w for ws in words[s : e + 1] for w in ws]
            if concat == target and words[s] and words[e]:
                runs.append((s, e))
    return runs


def best_window_oracle(phrase, layout, threshold, slack):
    """Brute force the fuzzy word search: max score, earliest (start, end)."""
    target = " ".join(normalize_words(phrase))
    if not target:
        return None
    words = [normalize_words(w.text) for w in layout.words]
    k = len(normalize_words(phrase))
    best = None
    for s in range(len(words)):
        for e in range(s, len(words)):
            size = e - s + 1
            if not (max(1, k - slack) <= size <= k + slack):
                continue
            window = " ".join(w for ws in words[s : e + 1] for w in ws)
            if not window:
                continue
            score = 1.0 - lev_oracle(target, window) / max(len(target), len(window))
            if score > threshold and (best is None or score > best[0]):
                best = (score, s, e)
    return best


WORD_POOL = ["gradient", "descent", "loss", "the", "rate", "x", "cross-entropy",
             "theta", "eta", "sum", "convex", "=", "function"]


def random_layout(rng, max_lines=4, max_words=5):
    lines = [
        [rng.choice(WORD_POOL) for _ in range(rng.randint(1, max_words))]
        for _ in range(rng.randint(1, max_lines))
    ]
    # make_layout drops nothing; "=" elements exercise empty normalization
    return make_layout(lines)


def random_phrase(rng, layout):
    if rng.random() < 0.5 and layout.words:
        # sample a real window of slide words, sometimes perturbed
        i = rng.randrange(len(layout.words))
        j = min(len(layout.words), i + rng.randint(1, 3))
        phrase = " ".join(w.text for w in layout.words[i:j])
        if rng.random() < 0.3 and len(phrase) > 3:
            pos = rng.randrange(len(phrase))
            phrase = phrase[:pos] + rng.choice("abcxyz") + phrase[pos + 1 :]
        return phrase
    return " ".join(rng.choice(WORD_POOL) for _ in range(rng.randint(1, 3)))


# --- distance metric ----------------------------------------------------------


class TestLevenshtein:
    FROZEN = [
        ("kitten", "sitting", 3),
        ("flaw", "lawn", 2),
        ("", "abc", 3),
        ("abc", "", 3),
        ("same", "same", 0),
        ("gradient descent", "gradiant descent", 1),
    ]

    @pytest.mark.parametrize("a,b,d", FROZEN)
    def test_frozen_distances(self, a, b, d):
        assert levenshtein(a, b) == d

    def test_frozen_similarities(self):
        assert similarity("kitten", "sitting") == pytest.approx(1 - 3 / 7)
        assert similarity("gradient descent", "gradiant descent") == 0.9375

    def test_similarity_normalizes_first(self):
        assert similarity("Gradient Descent!", "gradient descent") == 1.0
        assert similarity("", "") == 1.0

    def test_against_full_matrix_oracle(self):
        rng = random.Random(7)
        alphabet = "abcde"
        for _ in range(300):
            a = "".join(rng.choice(alphabet) for _ in range(rng.randint(0, 12)))
            b = "".join(rng.choice(alphabet) for _ in range(rng.randint(0, 12)))
            assert levenshtein(a, b) == lev_oracle(a, b), (a, b)


# --- exact matching -----------------------------------------------------------


class TestSimple:
    def test_word_run_found(self):
        layout = make_layout([["Optimization"], ["uses", "gradient", "descent", "here"]])
        result = match_simple("gradient descent", layout, "word")
        assert result.status == "matched"
        assert result.matched_ids == (2, 3)

    def test_word_union_of_repeats(self):
        layout = make_layout([["loss", "and", "loss"]])
        result = match_simple("loss", layout, "word")
        assert result.matched_ids == (0, 2)

    def test_empty_element_inside_run(self):
        # "=" normalizes to nothing; a run may pass through it but not end on it
        layout = make_layout([["theta", "=", "eta"]])
        assert find_word_runs("theta eta", layout) == [(0, 2)]
        assert find_word_runs("theta", layout) == [(0, 0)]
        assert find_word_runs("theta =", layout) == [(0, 0)]  # "=" adds no words

    def test_phrase_cannot_start_mid_element(self):
        layout = make_layout([["gradient descent", "works"]])
        assert find_word_runs("descent works", layout) == []
        assert find_word_runs("gradient descent works", layout) == [(0, 1)]

    def test_no_match(self):
        layout = make_layout([["alpha", "beta"]])
        result = match_simple("gamma", layout, "word")
        assert result.status == "no_match"
        assert result.matched_ids == ()

    def test_line_substring(self):
        layout = make_layout([["the", "Cross-Entropy", "loss"], ["other", "text"]])
        result = match_simple("cross-entropy loss", layout, "line")
        assert result.matched_ids == (0,)

    def test_line_multiple(self):
        layout = make_layout([["loss", "one"], ["two", "loss"], ["none"]])
        result = match_simple("loss", layout, "line")
        assert result.matched_ids == (0, 1)

    def test_empty_phrase_no_match(self):
        layout = make_layout([["a"]])
        assert match_simple("***", layout, "word").status == "no_match"

    def test_runs_against_oracle(self):
        rng = random.Random(13)
        for _ in range(150):
            layout = random_layout(rng)
            phrase = random_phrase(rng, layout)
            assert find_word_runs(phrase, layout) == runs_oracle(phrase, layout), phrase


# --- fuzzy matching -----------------------------------------------------------


class TestFuzzy:
    def test_word_tolerates_ocr_typo(self):
        layout = make_layout([["uses", "gradiant", "descent", "here"]])
        result = match_fuzzy("gradient descent", layout, "word")
        assert result.status == "matched"
        assert result.matched_ids == (1, 2)
        assert result.score == 0.9375

    def test_below_threshold_no_match(self):
        layout = make_layout([["completely", "unrelated", "words"]])
        assert match_fuzzy("gradient descent", layout, "word").status == "no_match"

    def test_tie_keeps_earliest_window(self):
        layout = make_layout([["loss", "pad", "loss"]])
        result = match_fuzzy("loss", layout, "word", threshold=0.5, slack=0)
        assert result.matched_ids == (0,)

    def test_window_against_oracle(self):
        rng = random.Random(29)
        for _ in range(150):
            layout = random_layout(rng)
            phrase = random_phrase(rng, layout)
            got = match_fuzzy(phrase, layout, "word")
            want = best_window_oracle(phrase, layout, 0.8, 2)
            if want is None:
                assert got.status == "no_match", phrase
            else:
                score, s, e = want
                assert got.status == "matched"
                assert got.matched_ids == tuple(range(s, e + 1)), phrase
                assert got.score == pytest.approx(score)

    def test_line_whole_and_window(self):
        layout = make_layout(
            [["gradiant", "descent"], ["a", "very", "long", "line", "mentioning", "gradient", "descent", "plus", "more"]]
        )
        result = match_fuzzy("gradient descent", layout, "line")
        # line 0 via whole-line similarity, line 1 via the char window
        assert result.matched_ids == (0, 1)

    def test_line_none_above_threshold(self):
        layout = make_layout([["unrelated"], ["content"]])
        assert match_fuzzy("gradient descent", layout, "line").status == "no_match"


# --- model protocol -----------------------------------------------------------


def req(layout, phrase="gradient descent", granularity="word"):
    return build_match_request(
        phrase, layout, granularity, context_before="uses", context_after="to optimize"
    )


class TestPrompt:
    def test_prompt_structure(self):
        layout = make_layout([["gradient", "descent"]])
        prompt = render_match_prompt(req(layout))
        lines = prompt.splitlines()
        assert "Text preceding highlight phrase:" in lines
        assert "Target Highlight Phrase:" in lines
        assert "`gradient descent`" in lines
        assert "Text succeeding highlight phrase:" in lines
        assert "Candidate OCR Text Elements from Slide:" in lines
        assert "1. gradient" in lines
        assert "2. descent" in lines
        assert prompt.index("Text preceding") < prompt.index("Target Highlight Phrase")
        assert prompt.index("Target Highlight") < prompt.index("Text succeeding")
        assert prompt.index("Text succeeding") < prompt.index("Candidate OCR")
        assert "Task:" in lines
        assert prompt.rstrip().endswith("[2] or [1, 3]. Reply [] if no candidate corresponds.")

    def test_candidates_verbatim_and_ordered(self):
        layout = make_layout([["Cross-Entropy", "LOSS!"]])
        prompt = render_match_prompt(req(layout, phrase="cross-entropy loss"))
        assert "1. Cross-Entropy" in prompt
        assert "2. LOSS!" in prompt

    def test_context_capped_at_fifty_words(self):
        layout = make_layout([["x"]])
        before = " ".join(f"b{i}" for i in range(80))
        request = build_match_request("x", layout, "word", context_before=before)
        assert request.context_before.split() == [f"b{i}" for i in range(30, 80)]


class TestLlmProtocol:
    def test_reply_maps_to_element_ids(self):
        layout = make_layout([["alpha", "beta", "gamma"]])
        llm = ScriptedLlm(replies=["[2, 3]"])
        result = match_llm(req(layout), llm)
        assert result.status == "matched"
        assert result.matched_ids == (1, 2)

    def test_markdown_fence_tolerated(self):
        layout = make_layout([["alpha", "beta"]])
        llm = ScriptedLlm(replies=["```json\n[1]\n```"])
        assert match_llm(req(layout), llm).matched_ids == (0,)

    def test_out_of_range_filtered_with_warning(self, caplog):
        layout = make_layout([["alpha", "beta"]])
        llm = ScriptedLlm(replies=["[1, 99]"])
        with caplog.at_level("WARNING"):
            result = match_llm(req(layout), llm)
        assert result.matched_ids == (0,)
        assert "out-of-range" in caplog.text

    def test_duplicates_deduped_sorted(self):
        layout = make_layout([["alpha", "beta", "gamma"]])
        llm = ScriptedLlm(replies=["[3, 1, 3]"])
        assert match_llm(req(layout), llm).matched_ids == (0, 2)

    def test_empty_array_is_no_match(self):
        layout = make_layout([["alpha"]])
        result = match_llm(req(layout), ScriptedLlm(replies=["[]"]))
        assert result.status == "no_match"

    def test_retry_appends_format_reminder(self):
        layout = make_layout([["alpha", "beta"]])
        llm = ScriptedLlm(replies=["Sure! The answer is 1.", "[1]"])
        result = match_llm(req(layout), llm)
        assert result.matched_ids == (0,)
        assert len(llm.prompts) == 2
        assert llm.prompts[1] == llm.prompts[0] + "\n" + RETRY_SUFFIX

    def test_two_bad_replies_raise(self):
        layout = make_layout([["alpha"]])
        llm = ScriptedLlm(replies=["nope", "still nope"])
        with pytest.raises(MalformedReply):
            match_llm(req(layout), llm)

    def test_booleans_rejected(self):
        layout = make_layout([["alpha"]])
        llm = ScriptedLlm(replies=["[true]", "[1]"])
        assert match_llm(req(layout), llm).matched_ids == (0,)

    def test_non_array_json_rejected(self):
        layout = make_layout([["alpha"]])
        llm = ScriptedLlm(replies=['{"ids": [1]}', "[1]"])
        assert match_llm(req(layout), llm).matched_ids == (0,)


class TestDispatch:
    def test_llm_requires_client(self):
        layout = make_layout([["a"]])
        with pytest.raises(ValueError, match="llm client required"):
            match_location("a", layout, MatchConfig(granularity="word", method="llm"))

    def test_non_llm_rejects_client(self):
        layout = make_layout([["a"]])
        with pytest.raises(ValueError, match="must not"):
            match_location(
                "a", layout, MatchConfig(granularity="word", method="simple"), llm=ScriptedLlm([])
            )

    def test_llm_line_granularity_uses_line_candidates(self):
        layout = make_layout([["two", "words"], ["second", "line"]])
        llm = ScriptedLlm(replies=["[2]"])
        result = match_location(
            "second line", layout, MatchConfig(granularity="line", method="llm"), llm=llm
        )
        assert result.granularity == "line"
        assert result.matched_ids == (1,)
        assert "1. two words" in llm.prompts[0]

    def test_dispatch_simple_and_fuzzy(self):
        layout = make_layout([["gradient", "descent"]])
        simple = match_location("gradient", layout, MatchConfig(granularity="word", method="simple"))
        fuzzy = match_location("gradiant", layout, MatchConfig(granularity="word", method="fuzzy"))
        assert simple.matched_ids == (0,)
        assert fuzzy.matched_ids == (0,)
