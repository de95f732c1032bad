"""Regenerate the committed test fixtures.

Builds a three-slide deck with known text geometry, the offline provider
fixtures keyed to those exact slide bytes, and a 20-instance annotated
dataset over the same layouts. Run from the repository root:

    python3 tools/make_fixtures.py

The script ends with an offline end-to-end run into a temporary directory and
fails loudly if any slide drops a marker, so a committed fixture set is known
to drive the whole pipeline.
"""

from __future__ import annotations

import os
import sys
import tempfile

from PIL import Image, ImageDraw, ImageFont

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from slidecast.jsonio import canonical_dumps  # noqa: E402
from slidecast.model import MatchConfig, normalize_words  # noqa: E402
from slidecast.ocr_ingest import OcrBackendDoc, ingest  # noqa: E402
from slidecast.pipeline import PipelineConfig, generate_lecture  # noqa: E402
from slidecast.providers.mock import digest  # noqa: E402
from slidecast.transcript import parse_transcript  # noqa: E402

ROOT = os.path.abspath(os.path.join(os.path.dirname(__file__), ".."))
DECK_DIR = os.path.join(ROOT, "tests", "fixtures", "deck3")
EVAL_DIR = os.path.join(ROOT, "tests", "fixtures", "evalset")

PAGE = (1280, 720)

# (filename, [(text, x, y, font_size)], narration)
SLIDES = [
    (
        "slide_1.png",
        [
            ("Objective Function", 80, 70, 46),
            ("Minimize the cross-entropy loss", 80, 210, 32),
            ("L(y, p) = - sum y log(p)", 80, 290, 32),
        ],
        "This lecture begins with the highlight(Objective Function) for our"
        " classifier. To fit the model we minimize the highlight(cross-entropy"
        " loss) over the training set.",
    ),
    (
        "slide_2.png",
        [
            ("Optimization", 80, 70, 46),
            ("Update rule: gradient descent", 80, 210, 32),
            ("theta = theta - eta * grad L", 80, 290, 32),
        ],
        "Training uses gradient descent to walk downhill on the loss. When"
        " plain highlight(gradient descent) stalls, each iteration still"
        " applies highlight(theta = theta - eta * grad L) with a smaller step.",
    ),
    (
        "slide_3.png",
        [
            ("Derivatives", 80, 70, 46),
            ("differentiate the loss w.r.t. x", 80, 210, 32),
            ("the loss surface is convex in x", 80, 290, 32),
        ],
        "Finally we differentiate the loss highlight(w.r.t. x) for every"
        " sample. The loss guides training, and the highlight(loss surface) it"
        " defines is convex.",
    ),
]


def draw_slide(lines):
    """Render the slide and return (image, read_v4 payload lines)."""
    img = Image.new("RGB", PAGE, "white")
    draw = ImageDraw.Draw(img)
    payload_lines = []
    for text, x, y, size in lines:
        font = ImageFont.load_default(size=size)
        x0, y0, x1, y1 = draw.textbbox((x, y), text, font=font)
        draw.text((x, y), text, fill="black", font=font)
        words = []
        offset = 0
        for word in text.split(" "):
            prefix = text[:offset]
            wx0 = x + draw.textlength(prefix, font=font)
            wx1 = x + draw.textlength(prefix + word, font=font)
            words.append(
                {
                    "text": word,
                    "boundingPolygon": _rect(wx0, y0, wx1, y1),
                }
            )
            offset += len(word) + 1
        payload_lines.append(
            {
                "text": text,
                "boundingPolygon": _rect(x0, y0, x1, y1),
                "words": words,
            }
        )
    return img, payload_lines


def _rect(x0, y0, x1, y1):
    return [
        {"x": round(x0), "y": round(y0)},
        {"x": round(x1), "y": round(y0)},
        {"x": round(x1), "y": round(y1)},
        {"x": round(x0), "y": round(y1)},
    ]


def write(path: str, data) -> None:
    os.makedirs(os.path.dirname(path), exist_ok=True)
    if isinstance(data, bytes):
        with open(path, "wb") as fh:
            fh.write(data)
    else:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(data)


def build_deck() -> list[dict]:
    """Write slides + provider fixtures; returns per-slide payloads."""
    payloads = []
    for i, (filename, lines, narration) in enumerate(SLIDES):
        parse_transcript(narration)  # fail here, not at pipeline time
        img, payload_lines = draw_slide(lines)
        slide_path = os.path.join(DECK_DIR, "slides", filename)
        os.makedirs(os.path.dirname(slide_path), exist_ok=True)
        img.save(slide_path)
        with open(slide_path, "rb") as fh:
            slide_bytes = fh.read()
        key = digest(slide_bytes)
        payload = {"readResult": {"blocks": [{"lines": payload_lines}]}}
        if i == 0:
            # exercise the unit-rescale path on one slide (scale 1.0 here)
            payload["metadata"] = {"width": PAGE[0], "height": PAGE[1]}
        write(os.path.join(DECK_DIR, "providers", "narration", f"{key}.txt"), narration)
        write(os.path.join(DECK_DIR, "providers", "ocr", f"{key}.json"), canonical_dumps(payload))
        payloads.append(payload)
    return payloads


def _looks_mathy(text: str) -> bool:
    return any(ch in text for ch in "()=*") or (len(text) <= 2 and text.isalpha())


def build_evalset(payloads: list[dict]) -> None:
    instances = []
    for i, payload in enumerate(payloads):
        layout = ingest(OcrBackendDoc("read_v4_json", payload, i), *PAGE)
        layout_rel = os.path.join("layouts", f"slide_{i}.json")
        write(os.path.join(EVAL_DIR, layout_rel), canonical_dumps(layout.to_dict()))
        words = layout.words
        for a in range(len(words) - 1):
            w1, w2 = words[a], words[a + 1]
            if not normalize_words(w1.text) or not normalize_words(w2.text):
                continue
            phrase = f"{w1.text} {w2.text}"
            instances.append(
                {
                    "dataset_id": f"s{i}_p{w1.id:02d}",
                    "slide_ref": layout_rel,
                    "phrase": phrase,
                    "context_before": "the narration mentions",
                    "context_after": "on this slide",
                    "true_word_ids": [w1.id, w2.id],
                    "subset": "math_heavy" if (_looks_mathy(w1.text) or _looks_mathy(w2.text)) else "text_heavy",
                }
            )
    instances = instances[:20]
    if len(instances) != 20:
        raise SystemExit(f"expected 20 instances, built {len(instances)}")
    counts = {"math_heavy": 0, "text_heavy": 0}
    for inst in instances:
        counts[inst["subset"]] += 1
    manifest = {"schema_version": 1, "instances": instances}
    write(os.path.join(EVAL_DIR, "manifest.json"), canonical_dumps(manifest))
    print(f"evalset: 20 instances ({counts})")


def selfcheck() -> None:
    with tempfile.TemporaryDirectory() as tmp:
        cfg = PipelineConfig(
            input_path=os.path.join(DECK_DIR, "slides"),
            workdir=tmp,
            match=MatchConfig(granularity="word", method="llm"),
            offline_dir=os.path.join(DECK_DIR, "providers"),
            events_only=True,
        )
        result = generate_lecture(cfg)
        if result.failures:
            raise SystemExit(f"selfcheck failed: {result.failures}")
        import json

        total_events = 0
        for n in range(result.slide_count):
            with open(os.path.join(tmp, "events", f"{n}.json"), encoding="utf-8") as fh:
                doc = json.load(fh)
            if not doc["events"]:
                raise SystemExit(f"selfcheck: slide {n} produced no events")
            total_events += len(doc["events"])
        print(f"selfcheck: {result.slide_count} slides, {total_events} events, "
              f"{result.provider_calls} provider calls")


def main() -> None:
    payloads = build_deck()
    build_evalset(payloads)
    selfcheck()
    print(f"fixtures written under {os.path.join(ROOT, 'tests', 'fixtures')}")


if __name__ == "__main__":
    main()
