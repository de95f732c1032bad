"""Pipeline cost accounting.

All money math is decimal, never binary float: prices and usage quantities
are parsed through str into Decimal, and every divisor is a power of ten, so
component costs are exact. Rounding happens only at the display edge
(ROUND_HALF_UP to the shown precision).

Default prices and per-slide usage reflect a representative production run:
one OCR page, a 600-character spoken script, 2000/500 narration tokens, and
5 highlight alignments at 400/50 tokens each, which lands at $0.0155 per
slide (narration 48.4%, alignment 32.3%, OCR and TTS 9.7% each).
"""

from __future__ import annotations

from dataclasses import dataclass, fields
from decimal import ROUND_HALF_UP, Decimal

from .errors import SlidecastError
from .providers.base import UsageRecord, load_usage

MICRO_USD = Decimal("0.000001")


class ZeroTotal(SlidecastError):
    """A share breakdown of a zero total is undefined."""


def _dec(value) -> Decimal:
    if isinstance(value, Decimal):
        return value
    if isinstance(value, float):
        # floats round-trip through str so 1.5 means exactly 1.5
        return Decimal(str(value))
    return Decimal(value)


def _coerce_decimal_fields(obj) -> None:
    for f in fields(obj):
        object.__setattr__(obj, f.name, _dec(getattr(obj, f.name)))
        if getattr(obj, f.name) < 0:
            raise ValueError(f"{f.name} must be >= 0")


@dataclass(frozen=True)
class PriceSheet:
    """Unit prices in USD."""

    ocr_per_1000_pages: Decimal = Decimal("1.50")
    tts_per_1m_chars: Decimal = Decimal("2.50")
    llm_input_per_1m_tokens: Decimal = Decimal("1.25")
    llm_output_per_1m_tokens: Decimal = Decimal("10.00")

    def __post_init__(self):
        _coerce_decimal_fields(self)

    def to_dict(self) -> dict:
        return {f.name: str(getattr(self, f.name)) for f in fields(self)}

    @classmethod
    def from_dict(cls, d: dict) -> "PriceSheet":
        return cls(**{k: _dec(v) for k, v in d.items()})


@dataclass(frozen=True)
class SlideUsage:
    """Average billable quantities consumed per slide."""

    ocr_pages: Decimal = Decimal("1.0")
    tts_characters: Decimal = Decimal("600")
    narration_input_tokens: Decimal = Decimal("2000")
    narration_output_tokens: Decimal = Decimal("500")
    highlights: Decimal = Decimal("5.0")
    alignment_input_tokens_per_highlight: Decimal = Decimal("400")
    alignment_output_tokens_per_highlight: Decimal = Decimal("50")

    def __post_init__(self):
        _coerce_decimal_fields(self)

    def to_dict(self) -> dict:
        return {f.name: str(getattr(self, f.name)) for f in fields(self)}

    @classmethod
    def from_dict(cls, d: dict) -> "SlideUsage":
        return cls(**{k: _dec(v) for k, v in d.items()})


@dataclass(frozen=True)
class CostBreakdown:
    """Exact per-component USD costs."""

    ocr: Decimal
    tts: Decimal
    narration: Decimal
    alignment: Decimal

    @property
    def total(self) -> Decimal:
        return self.ocr + self.tts + self.narration + self.alignment

    def components(self) -> list[tuple[str, Decimal]]:
        return [
            ("ocr", self.ocr),
            ("tts", self.tts),
            ("narration", self.narration),
            ("alignment", self.alignment),
        ]

    def to_dict(self) -> dict:
        return {
            "ocr": str(self.ocr),
            "tts": str(self.tts),
            "narration": str(self.narration),
            "alignment": str(self.alignment),
            "total": str(self.total),
        }


def slide_cost(usage: SlideUsage | None = None, prices: PriceSheet | None = None) -> CostBreakdown:
    """Exact cost of one slide under the given usage and prices."""
    u = usage or SlideUsage()
    p = prices or PriceSheet()
    million = Decimal(1_000_000)
    ocr = u.ocr_pages * p.ocr_per_1000_pages / Decimal(1000)
    tts = u.tts_characters * p.tts_per_1m_chars / million
    narration = (
        u.narration_input_tokens * p.llm_input_per_1m_tokens
        + u.narration_output_tokens * p.llm_output_per_1m_tokens
    ) / million
    alignment = (
        u.highlights
        * (
            u.alignment_input_tokens_per_highlight * p.llm_input_per_1m_tokens
            + u.alignment_output_tokens_per_highlight * p.llm_output_per_1m_tokens
        )
        / million
    )
    return CostBreakdown(ocr=ocr, tts=tts, narration=narration, alignment=alignment)


def lecture_cost(
    n_slides: int, usage: SlideUsage | None = None, prices: PriceSheet | None = None
) -> Decimal:
    """Exact cost of a lecture of n_slides uniform slides."""
    if n_slides < 0:
        raise ValueError("n_slides must be >= 0")
    return Decimal(n_slides) * slide_cost(usage, prices).total


def usage_from_records(records: list[UsageRecord]) -> SlideUsage:
    """Aggregate logged usage records into SlideUsage totals.

    The result describes the whole run (highlights=1 with the full alignment
    token totals), suitable for pricing with slide_cost.
    """
    ocr_pages = sum(r.pages for r in records if r.kind == "ocr")
    tts_chars = sum(r.characters for r in records if r.kind == "tts")
    narr_in = sum(r.input_tokens for r in records if r.kind == "narration")
    narr_out = sum(r.output_tokens for r in records if r.kind == "narration")
    align_in = sum(r.input_tokens for r in records if r.kind == "alignment")
    align_out = sum(r.output_tokens for r in records if r.kind == "alignment")
    return SlideUsage(
        ocr_pages=Decimal(ocr_pages),
        tts_characters=Decimal(tts_chars),
        narration_input_tokens=Decimal(narr_in),
        narration_output_tokens=Decimal(narr_out),
        highlights=Decimal(1),
        alignment_input_tokens_per_highlight=Decimal(align_in),
        alignment_output_tokens_per_highlight=Decimal(align_out),
    )


def cost_from_records(records: list[UsageRecord], prices: PriceSheet | None = None) -> CostBreakdown:
    return slide_cost(usage_from_records(records), prices)


def cost_from_usage_file(path: str, prices: PriceSheet | None = None) -> CostBreakdown:
    return cost_from_records(load_usage(path), prices)


def format_usd(amount: Decimal, places: int = 2) -> str:
    """Display form with ROUND_HALF_UP at the requested precision."""
    q = Decimal(1).scaleb(-places)
    return f"${amount.quantize(q, rounding=ROUND_HALF_UP)}"


def share_percent(part: Decimal, total: Decimal) -> Decimal:
    """part/total as a percentage with one decimal place (half-up)."""
    if total == 0:
        raise ZeroTotal("cannot compute shares of a zero total")
    return (part * 100 / total).quantize(Decimal("0.1"), rounding=ROUND_HALF_UP)


def breakdown_report(breakdown: CostBreakdown, title: str = "Per-slide cost breakdown") -> str:
    """Text table of component costs and their shares of the total."""
    total = breakdown.total
    if total == 0:
        raise ZeroTotal("cannot report shares for a zero-cost breakdown")
    lines = [title, f"  {'component':<12} {'cost (USD)':>12} {'share':>8}"]
    for name, value in breakdown.components():
        lines.append(f"  {name:<12} {format_usd(value, 4):>12} {share_percent(value, total):>7}%")
    lines.append(f"  {'total':<12} {format_usd(total, 4):>12} {'100.0':>7}%")
    return "\n".join(lines)
