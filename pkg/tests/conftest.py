"""Shared builders for the test suite.

Layouts built here use synthetic geometry: line i sits at y = 50 + 60*i,
words are laid out left to right with a fixed 10px gap and 12px per
character, so tests can reason about boxes without drawing anything.
"""

from __future__ import annotations

import os

import pytest

from slidecast.model import OcrElement, OcrLayout, Polygon

FIXTURES = os.path.join(os.path.dirname(__file__), "fixtures")
DECK_SLIDES = os.path.join(FIXTURES, "deck3", "slides")
DECK_PROVIDERS = os.path.join(FIXTURES, "deck3", "providers")
EVALSET = os.path.join(FIXTURES, "evalset")

CHAR_W = 12
GAP = 10
LINE_H = 40


def rect(x0: int, y0: int, x1: int, y1: int) -> Polygon:
    return Polygon(points=((x0, y0), (x1, y0), (x1, y1), (x0, y1)))


def make_layout(
    line_texts: list[list[str]],
    slide_index: int = 0,
    page: tuple[int, int] = (1280, 720),
) -> OcrLayout:
    """Layout from word texts; one inner list per line, reading order given."""
    lines = []
    words = []
    for li, texts in enumerate(line_texts):
        y0 = 50 + 60 * li
        y1 = y0 + LINE_H
        x = 40
        x_start = x
        for text in texts:
            w = max(1, len(text)) * CHAR_W
            words.append(
                OcrElement(
                    id=len(words),
                    level="word",
                    polygon=rect(x, y0, x + w, y1),
                    text=text,
                    line_id=li,
                )
            )
            x += w + GAP
        lines.append(
            OcrElement(
                id=li,
                level="line",
                polygon=rect(x_start, y0, x - GAP, y1),
                text=" ".join(texts),
                line_id=None,
            )
        )
    return OcrLayout(
        slide_index=slide_index,
        page_width=page[0],
        page_height=page[1],
        lines=tuple(lines),
        words=tuple(words),
    )


@pytest.fixture
def deck_slides() -> str:
    return DECK_SLIDES


@pytest.fixture
def deck_providers() -> str:
    return DECK_PROVIDERS


@pytest.fixture
def evalset_dir() -> str:
    return EVALSET
