"""OCR backend payload ingestion.

Converts backend-native OCR output into the package's OcrLayout form:
integer pixel coordinates in slide-image space (top-left origin), elements
sorted into reading order with dense ids, words assigned to lines.

Supported backends:

* ``read_v4_json`` — cloud-vision style JSON::

      {"metadata": {"width": W, "height": H},          # optional, payload units
       "readResult": {"blocks": [{"lines": [
           {"text": "...", "boundingPolygon": [{"x": .., "y": ..}, ...],
            "words": [{"text": "...", "boundingPolygon": [...],
                       "confidence": 0.98}, ...]}]}]}}

  When metadata dimensions are present, coordinates are rescaled from payload
  units to the target page size (this also converts inch- or normalized-unit
  payloads); otherwise coordinates are taken as pixels.

* ``tesseract_tsv`` — the standard 12-column TSV (level page_num block_num
  par_num line_num word_num left top width height conf text). Word rows are
  level 5; rows with conf = -1 are non-text structure and are dropped. Line
  geometry comes from level-4 rows, line text from the joined word texts.
"""

from __future__ import annotations

import json
import logging
import statistics
from dataclasses import dataclass

from .errors import SlidecastError
from .model import OcrElement, OcrLayout, Polygon, bounding_box, normalize_text

logger = logging.getLogger(__name__)

BACKENDS = ("read_v4_json", "tesseract_tsv")


class ParseError(SlidecastError):
    """Backend payload does not match the documented grammar."""


class GeometryError(SlidecastError):
    """Element geometry falls outside the page after unit conversion."""


@dataclass(frozen=True)
class OcrBackendDoc:
    """One slide's backend-native OCR payload, tagged with its grammar."""

    backend: str
    payload: object  # dict for JSON backends, str for TSV
    slide_index: int

    def __post_init__(self):
        if self.backend not in BACKENDS:
            raise ParseError(f"unknown OCR backend: {self.backend!r}")
        if self.slide_index < 0:
            raise ValueError("slide_index must be >= 0")


@dataclass
class _RawElement:
    text: str
    points: list[tuple[float, float]]


def _require(cond: bool, message: str):
    if not cond:
        raise ParseError(message)


def _parse_read_v4(payload: object) -> tuple[list[_RawElement], list[_RawElement], tuple]:
    if isinstance(payload, str):
        try:
            payload = json.loads(payload)
        except json.JSONDecodeError as exc:
            raise ParseError(f"payload is not valid JSON: {exc}") from exc
    _require(isinstance(payload, dict), "read_v4_json payload must be a JSON object")
    read = payload.get("readResult")
    _require(isinstance(read, dict), "missing readResult object")
    blocks = read.get("blocks")
    _require(isinstance(blocks, list), "readResult.blocks must be a list")

    def poly(node, what) -> list[tuple[float, float]]:
        _require(isinstance(node, list) and len(node) >= 3, f"{what} boundingPolygon needs >= 3 points")
        pts = []
        for p in node:
            _require(isinstance(p, dict) and "x" in p and "y" in p, f"{what} polygon point needs x and y")
            pts.append((float(p["x"]), float(p["y"])))
        return pts

    lines: list[_RawElement] = []
    words: list[_RawElement] = []
    for block in blocks:
        _require(isinstance(block, dict), "block must be an object")
        for ln in block.get("lines", []):
            _require(isinstance(ln, dict) and "text" in ln, "line needs a text field")
            lines.append(_RawElement(str(ln["text"]), poly(ln.get("boundingPolygon"), "line")))
            for wd in ln.get("words", []):
                _require(isinstance(wd, dict) and "text" in wd, "word needs a text field")
                words.append(_RawElement(str(wd["text"]), poly(wd.get("boundingPolygon"), "word")))

    meta = payload.get("metadata") or {}
    src_size = None
    if "width" in meta and "height" in meta:
        w, h = float(meta["width"]), float(meta["height"])
        _require(w > 0 and h > 0, "metadata dimensions must be positive")
        src_size = (w, h)
    return lines, words, (src_size,)


_TSV_COLUMNS = [
    "level", "page_num", "block_num", "par_num", "line_num", "word_num",
    "left", "top", "width", "height", "conf", "text",
]


def _parse_tesseract_tsv(payload: object) -> tuple[list[_RawElement], list[_RawElement], tuple]:
    _require(isinstance(payload, str), "tesseract_tsv payload must be TSV text")
    rows = [r for r in payload.splitlines() if r.strip()]
    _require(bool(rows), "empty TSV payload")
    header = rows[0].split("\t")
    _require(header == _TSV_COLUMNS, f"unexpected TSV header: {header}")

    def box(rec) -> list[tuple[float, float]]:
        left, top, w, h = (float(rec[c]) for c in ("left", "top", "width", "height"))
        return [(left, top), (left + w, top), (left + w, top + h), (left, top + h)]

    line_geom: dict[tuple, list[tuple[float, float]]] = {}
    line_words: dict[tuple, list[tuple[int, str, list[tuple[float, float]]]]] = {}
    for i, row in enumerate(rows[1:], 2):
        cols = row.split("\t")
        # tesseract emits empty text cells on structural rows; pad to 12
        if len(cols) == len(_TSV_COLUMNS) - 1:
            cols.append("")
        _require(len(cols) == len(_TSV_COLUMNS), f"TSV row {i} has {len(cols)} columns")
        rec = dict(zip(_TSV_COLUMNS, cols))
        try:
            level = int(rec["level"])
            conf = float(rec["conf"])
            key = (int(rec["page_num"]), int(rec["block_num"]), int(rec["par_num"]), int(rec["line_num"]))
            if level == 4:
                line_geom[key] = box(rec)
            elif level == 5 and conf >= 0:  # conf = -1 marks non-text structure
                line_words.setdefault(key, []).append((int(rec["word_num"]), rec["text"], box(rec)))
        except ValueError as exc:
            raise ParseError(f"TSV row {i}: {exc}") from exc

    lines: list[_RawElement] = []
    words: list[_RawElement] = []
    for key in sorted(line_words):
        entries = sorted(line_words[key])
        texts = [t for _n, t, _b in entries]
        geom = line_geom.get(key)
        if geom is None:
            xs = [x for _n, _t, b in entries for x, _y in b]
            ys = [y for _n, _t, b in entries for _x, y in b]
            geom = [(min(xs), min(ys)), (max(xs), min(ys)), (max(xs), max(ys)), (min(xs), max(ys))]
        lines.append(_RawElement(" ".join(texts), geom))
        for _n, text, b in entries:
            words.append(_RawElement(text, b))
    return lines, words, (None,)


def _convert(
    raw: _RawElement, sx: float, sy: float, page_width: int, page_height: int
) -> Polygon | None:
    pts = []
    for x, y in raw.points:
        px, py = int(round(x * sx)), int(round(y * sy))
        if not (0 <= px <= page_width and 0 <= py <= page_height):
            raise GeometryError(
                f"element {raw.text!r} outside page bounds: point ({px}, {py}) "
                f"vs page {page_width}x{page_height}"
            )
        pts.append((px, py))
    poly = Polygon(points=tuple(pts))
    x0, y0, x1, y1 = bounding_box(poly)
    if x1 <= x0 or y1 <= y0:
        logger.warning("dropping degenerate element %r (zero-extent box)", raw.text)
        return None
    return poly


def _reading_order(items: list[tuple[str, Polygon]], tol: float) -> list[int]:
    """Indices of items in reading order: rows by top (within tol), then left."""
    keyed = []
    for idx, (text, poly) in enumerate(items):
        x0, y0, x1, y1 = bounding_box(poly)
        keyed.append((y0, x0, y1, x1, text, idx))
    keyed.sort()
    rows: list[list[tuple]] = []
    row_top = None
    for entry in keyed:
        if row_top is not None and entry[0] <= row_top + tol:
            rows[-1].append(entry)
        else:
            rows.append([entry])
            row_top = entry[0]
    order = []
    for row in rows:
        row.sort(key=lambda e: (e[1], e[0], e[3], e[4]))
        order.extend(e[5] for e in row)
    return order


def ingest(doc: OcrBackendDoc, page_width: int, page_height: int) -> OcrLayout:
    """Convert one backend payload into an OcrLayout for the given page size."""
    if page_width <= 0 or page_height <= 0:
        raise ValueError("page dimensions must be positive")
    if doc.backend == "read_v4_json":
        raw_lines, raw_words, (src_size,) = _parse_read_v4(doc.payload)
    else:
        raw_lines, raw_words, (src_size,) = _parse_tesseract_tsv(doc.payload)

    sx = sy = 1.0
    if src_size is not None:
        sx = page_width / src_size[0]
        sy = page_height / src_size[1]

    def prepare(raws: list[_RawElement]) -> list[tuple[str, Polygon]]:
        out = []
        for raw in raws:
            if not normalize_text(raw.text):
                continue  # nothing matchable in this element
            poly = _convert(raw, sx, sy, page_width, page_height)
            if poly is not None:
                out.append((raw.text, poly))
        return out

    line_items = prepare(raw_lines)
    word_items = prepare(raw_words)

    heights = [bounding_box(p)[3] - bounding_box(p)[1] for _t, p in line_items]
    tol = (statistics.median(heights) / 2.0) if heights else 0.0

    lines = []
    for new_id, idx in enumerate(_reading_order(line_items, tol)):
        text, poly = line_items[idx]
        lines.append(OcrElement(id=new_id, level="line", polygon=poly, text=text))

    line_boxes = [bounding_box(ln.polygon) for ln in lines]

    def assign_line(poly: Polygon, text: str) -> int:
        x0, y0, x1, y1 = bounding_box(poly)
        cx, cy = (x0 + x1) / 2.0, (y0 + y1) / 2.0
        containing = []
        for ln_id, (lx0, ly0, lx1, ly1) in enumerate(line_boxes):
            if lx0 <= cx <= lx1 and ly0 <= cy <= ly1:
                lcx, lcy = (lx0 + lx1) / 2.0, (ly0 + ly1) / 2.0
                containing.append(((cx - lcx) ** 2 + (cy - lcy) ** 2, ln_id))
        if containing:
            return min(containing)[1]
        # no line box contains the word center; fall back to the nearest line
        best = min(
            (((cx - (b[0] + b[2]) / 2.0) ** 2 + (cy - (b[1] + b[3]) / 2.0) ** 2, ln_id)
             for ln_id, b in enumerate(line_boxes))
        )
        logger.warning("word %r center not inside any line box; using nearest line %d", text, best[1])
        return best[1]

    if word_items and not lines:
        raise ParseError("payload has words but no usable lines")

    words = []
    for new_id, idx in enumerate(_reading_order(word_items, tol)):
        text, poly = word_items[idx]
        words.append(
            OcrElement(id=new_id, level="word", polygon=poly, text=text, line_id=assign_line(poly, text))
        )

    return OcrLayout(
        slide_index=doc.slide_index,
        page_width=page_width,
        page_height=page_height,
        lines=tuple(lines),
        words=tuple(words),
    )


def load_backend_doc(path: str, slide_index: int, backend: str | None = None) -> OcrBackendDoc:
    """Build an OcrBackendDoc from a payload file (.json or .tsv)."""
    if backend is None:
        if path.endswith(".json"):
            backend = "read_v4_json"
        elif path.endswith(".tsv"):
            backend = "tesseract_tsv"
        else:
            raise ParseError(f"cannot infer OCR backend from path: {path}")
    with open(path, "r", encoding="utf-8") as fh:
        text = fh.read()
    payload: object = text
    if backend == "read_v4_json":
        try:
            payload = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ParseError(f"{path}: {exc}") from exc
    return OcrBackendDoc(backend=backend, payload=payload, slide_index=slide_index)
