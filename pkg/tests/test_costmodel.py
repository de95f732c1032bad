"""Cost accounting: exact decimal math, frozen defaults, aggregation."""

from decimal import Decimal

import pytest

from slidecast.costmodel import (
    CostBreakdown,
    PriceSheet,
    SlideUsage,
    ZeroTotal,
    breakdown_report,
    cost_from_records,
    format_usd,
    lecture_cost,
    share_percent,
    slide_cost,
)
from slidecast.providers import UsageRecord


class TestSlideCostFrozen:
    """Default prices and usage land at exactly $0.0155 per slide."""

    def test_components_exact(self):
        b = slide_cost()
        assert b.ocr == Decimal("0.0015")
        assert b.tts == Decimal("0.0015")
        assert b.narration == Decimal("0.0075")
        assert b.alignment == Decimal("0.0050")

    def test_total_exact(self):
        assert slide_cost().total == Decimal("0.0155")

    def test_shares_one_decimal(self):
        b = slide_cost()
        shares = {name: share_percent(v, b.total) for name, v in b.components()}
        assert shares == {
            "ocr": Decimal("9.7"),
            "tts": Decimal("9.7"),
            "narration": Decimal("48.4"),
            "alignment": Decimal("32.3"),
        }

    def test_no_alignment_scenario(self):
        b = slide_cost(SlideUsage(highlights=0))
        assert b.alignment == Decimal("0")
        assert b.total == Decimal("0.0105")


class TestLectureCost:
    def test_frozen_lecture_sizes(self):
        assert lecture_cost(60) == Decimal("0.9300")
        assert lecture_cost(100) == Decimal("1.5500")
        assert lecture_cost(30) == Decimal("0.4650")

    def test_half_up_display(self):
        assert format_usd(lecture_cost(30)) == "$0.47"
        assert format_usd(lecture_cost(60)) == "$0.93"
        assert format_usd(lecture_cost(60), places=4) == "$0.9300"

    def test_linearity(self):
        one = lecture_cost(1)
        for n in (0, 2, 7, 500):
            assert lecture_cost(n) == n * one

    def test_negative_rejected(self):
        with pytest.raises(ValueError):
            lecture_cost(-1)


class TestDecimalHygiene:
    def test_float_inputs_go_through_str(self):
        # 0.1 as a float would poison binary-float math; via str it is exact
        u = SlideUsage(tts_characters=0.1)
        assert u.tts_characters == Decimal("0.1")

    def test_negative_fields_rejected(self):
        with pytest.raises(ValueError):
            SlideUsage(ocr_pages=-1)
        with pytest.raises(ValueError):
            PriceSheet(tts_per_1m_chars="-2")

    def test_price_sheet_round_trip(self):
        p = PriceSheet(llm_output_per_1m_tokens="12.50")
        assert PriceSheet.from_dict(p.to_dict()) == p

    def test_custom_prices_flow_through(self):
        p = PriceSheet(ocr_per_1000_pages="3.00")
        assert slide_cost(prices=p).ocr == Decimal("0.0030")


class TestUsageAggregation:
    def records(self):
        return [
            UsageRecord(kind="ocr", pages=1, timestamp=0),
            UsageRecord(kind="ocr", pages=2, timestamp=1),
            UsageRecord(kind="tts", characters=300, timestamp=0),
            UsageRecord(kind="tts", characters=300, timestamp=1),
            UsageRecord(kind="narration", input_tokens=1000, output_tokens=200, timestamp=0),
            UsageRecord(kind="narration", input_tokens=1000, output_tokens=300, timestamp=1),
            UsageRecord(kind="alignment", input_tokens=400, output_tokens=50, timestamp=0),
            UsageRecord(kind="alignment", input_tokens=600, output_tokens=50, timestamp=1),
        ]

    def test_cost_from_records(self):
        b = cost_from_records(self.records())
        assert b.ocr == Decimal("3") * Decimal("1.50") / 1000
        assert b.tts == Decimal("600") * Decimal("2.50") / 1_000_000
        assert b.narration == (Decimal(2000) * Decimal("1.25") + Decimal(500) * 10) / 1_000_000
        assert b.alignment == (Decimal(1000) * Decimal("1.25") + Decimal(100) * 10) / 1_000_000

    def test_empty_records_cost_zero(self):
        assert cost_from_records([]).total == 0


class TestReporting:
    def test_zero_total_refused(self):
        zero = CostBreakdown(Decimal(0), Decimal(0), Decimal(0), Decimal(0))
        with pytest.raises(ZeroTotal):
            share_percent(Decimal(0), zero.total)
        with pytest.raises(ZeroTotal):
            breakdown_report(zero)

    def test_report_layout(self):
        report = breakdown_report(slide_cost())
        lines = report.splitlines()
        assert lines[0] == "Per-slide cost breakdown"
        assert "$0.0155" in lines[-1] and "100.0" in lines[-1]
        assert any("narration" in ln and "48.4%" in ln for ln in lines)
        assert any("ocr" in ln and "$0.0015" in ln and "9.7%" in ln for ln in lines)

    def test_format_usd_half_up(self):
        assert format_usd(Decimal("0.005")) == "$0.01"
        assert format_usd(Decimal("1.2349"), 3) == "$1.235"
        assert format_usd(Decimal("0")) == "$0.00"
