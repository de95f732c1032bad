"""Evaluation harness: dataset loading, scoring math, comparison tables."""

import json

import pytest
from conftest import EVALSET, make_layout

from slidecast.evalkit import (
    DanglingId,
    SchemaError,
    compare_llms,
    evaluate,
    load_dataset,
    render_metrics_table,
    sample_instances,
)
from slidecast.jsonio import canonical_dumps
from slidecast.model import MatchConfig, MatchResult
from slidecast.providers import ProviderConfig, ScriptedLlm

WORD_CFG = MatchConfig(granularity="word", method="simple")


def layout_of(*line_strings):
    return make_layout([s.split() for s in line_strings])


def write_dataset(root, instances, layout=None, schema_version=1):
    layout = layout or layout_of("alpha beta gamma", "delta epsilon")
    (root / "layouts").mkdir(exist_ok=True)
    (root / "layouts" / "0.json").write_text(canonical_dumps(layout.to_dict()))
    manifest = {"schema_version": schema_version, "instances": instances}
    (root / "manifest.json").write_text(json.dumps(manifest))
    return str(root)


def instance(dataset_id="i-0", phrase="beta gamma", true_word_ids=(1, 2), subset="text_heavy", **extra):
    d = {
        "dataset_id": dataset_id,
        "slide_ref": "layouts/0.json",
        "phrase": phrase,
        "true_word_ids": list(true_word_ids),
        "subset": subset,
    }
    d.update(extra)
    return d


def scripted_match(predictions):
    """match_fn returning fixed id sets keyed by dataset_id; None means no match."""

    def fn(inst, _layout):
        ids = predictions[inst.dataset_id]
        if ids is None:
            return MatchResult(matched_ids=(), granularity="word", status="no_match")
        return MatchResult(matched_ids=tuple(ids), granularity="word", status="matched")

    return fn


class TestLoadDataset:
    def test_committed_evalset_shape(self, evalset_dir):
        instances = load_dataset(evalset_dir)
        assert len(instances) == 20
        subsets = [i.subset for i in instances]
        assert subsets.count("text_heavy") == 14
        assert subsets.count("math_heavy") == 6
        assert all(len(i.true_word_ids) == 2 for i in instances)
        assert len({i.dataset_id for i in instances}) == 20

    def test_line_truth_derived_from_words(self, tmp_path):
        root = write_dataset(tmp_path, [instance()])
        inst = load_dataset(root)[0]
        # words 1 and 2 both sit on line 0 of the two-line layout
        assert inst.true_line_ids == (0,)

    def test_missing_manifest(self, tmp_path):
        with pytest.raises(SchemaError, match="no manifest.json"):
            load_dataset(str(tmp_path))

    def test_bad_schema_version(self, tmp_path):
        root = write_dataset(tmp_path, [instance()], schema_version=2)
        with pytest.raises(SchemaError, match="schema_version"):
            load_dataset(root)

    def test_duplicate_dataset_id(self, tmp_path):
        root = write_dataset(tmp_path, [instance("dup"), instance("dup")])
        with pytest.raises(SchemaError, match="duplicate"):
            load_dataset(root)

    def test_empty_truth_rejected(self, tmp_path):
        root = write_dataset(tmp_path, [instance(true_word_ids=())])
        with pytest.raises(SchemaError, match="non-empty"):
            load_dataset(root)

    def test_boolean_truth_rejected(self, tmp_path):
        root = write_dataset(tmp_path, [instance(true_word_ids=(True,))])
        with pytest.raises(SchemaError, match="integers"):
            load_dataset(root)

    def test_dangling_word_id(self, tmp_path):
        root = write_dataset(tmp_path, [instance(true_word_ids=(99,))])
        with pytest.raises(DanglingId, match="99"):
            load_dataset(root)

    def test_dangling_line_id(self, tmp_path):
        root = write_dataset(tmp_path, [instance(true_line_ids=[7])])
        with pytest.raises(DanglingId, match="line id 7"):
            load_dataset(root)

    def test_missing_slide_ref(self, tmp_path):
        root = write_dataset(tmp_path, [instance(slide_ref="layouts/ghost.json")])
        with pytest.raises(SchemaError, match="ghost"):
            load_dataset(root)

    def test_unknown_subset(self, tmp_path):
        root = write_dataset(tmp_path, [instance(subset="code_heavy")])
        with pytest.raises(SchemaError, match="subset"):
            load_dataset(root)


class TestSampling:
    def test_deterministic_for_seed(self, evalset_dir):
        instances = load_dataset(evalset_dir)
        a = sample_instances(instances, 5, seed=11)
        b = sample_instances(instances, 5, seed=11)
        assert [i.dataset_id for i in a] == [i.dataset_id for i in b]
        assert len(a) == 5

    def test_different_seeds_differ(self, evalset_dir):
        instances = load_dataset(evalset_dir)
        a = sample_instances(instances, 10, seed=1)
        b = sample_instances(instances, 10, seed=2)
        assert [i.dataset_id for i in a] != [i.dataset_id for i in b]

    def test_oversample_returns_all(self, evalset_dir):
        instances = load_dataset(evalset_dir)
        assert sample_instances(instances, 500, seed=3) == instances


class TestScoringMath:
    def one_instance(self, tmp_path, truth=(2, 3, 4)):
        layout = layout_of("alpha beta gamma delta epsilon zeta")
        root = write_dataset(tmp_path, [instance(true_word_ids=truth, phrase="x")], layout)
        return load_dataset(root)

    def test_partial_overlap_prf(self, tmp_path):
        instances = self.one_instance(tmp_path, truth=(2, 3, 4))
        report = evaluate(instances, WORD_CFG, match_fn=scripted_match({"i-0": (2, 3)}))
        assert report.overall.msr == 100.0
        assert report.overall.precision == 100.0
        assert report.overall.recall == pytest.approx(200 / 3)
        assert report.overall.f1 == pytest.approx(80.0)

    def test_no_match_counts_against_msr_only(self, tmp_path):
        layout = layout_of("alpha beta gamma delta")
        root = write_dataset(
            tmp_path,
            [instance("a", true_word_ids=(0, 1)), instance("b", true_word_ids=(2, 3))],
            layout,
        )
        instances = load_dataset(root)
        fn = scripted_match({"a": (0, 1), "b": None})
        report = evaluate(instances, WORD_CFG, match_fn=fn)
        assert report.overall.msr == 50.0
        # the unmatched instance is excluded from P/R by default
        assert report.overall.precision == 100.0
        assert report.overall.recall == 100.0

        counted = evaluate(instances, WORD_CFG, match_fn=fn, count_no_match=True)
        assert counted.overall.msr == 50.0
        assert counted.overall.precision == 100.0
        assert counted.overall.recall == pytest.approx(50.0)  # 2 tp, 2 fn

    def test_micro_vs_macro(self, tmp_path):
        layout = layout_of("a b c d e f g h i j")
        root = write_dataset(
            tmp_path,
            [
                instance("big", true_word_ids=(0, 1, 2, 3)),
                instance("small", true_word_ids=(4,)),
            ],
            layout,
        )
        instances = load_dataset(root)
        # big: pred {0,1} → tp=2 fn=2; small: pred {4} → tp=1 fn=0
        fn = scripted_match({"big": (0, 1), "small": (4,)})
        micro = evaluate(instances, WORD_CFG, match_fn=fn, averaging="micro")
        macro = evaluate(instances, WORD_CFG, match_fn=fn, averaging="macro")
        assert micro.overall.recall == pytest.approx(100 * 3 / 5)
        assert macro.overall.recall == pytest.approx(100 * (0.5 + 1.0) / 2)
        assert micro.overall.precision == macro.overall.precision == 100.0

    def test_unknown_averaging(self, tmp_path):
        instances = self.one_instance(tmp_path)
        with pytest.raises(ValueError, match="averaging"):
            evaluate(instances, WORD_CFG, match_fn=scripted_match({"i-0": (2,)}), averaging="median")

    def test_subset_blocks(self, evalset_dir):
        instances = load_dataset(evalset_dir)
        fn = scripted_match({i.dataset_id: i.true_word_ids for i in instances})
        report = evaluate(instances, WORD_CFG, match_fn=fn)
        assert report.overall.f1 == 100.0
        assert report.by_subset["text_heavy"].n == 14
        assert report.by_subset["math_heavy"].n == 6
        assert all(b.f1 == 100.0 for b in report.by_subset.values())

    def test_per_instance_outcomes(self, tmp_path):
        instances = self.one_instance(tmp_path, truth=(2, 3))
        report = evaluate(instances, WORD_CFG, match_fn=scripted_match({"i-0": (3, 5)}))
        (outcome,) = report.per_instance
        assert (outcome.tp, outcome.fp, outcome.fn) == (1, 1, 1)
        assert outcome.predicted_ids == (3, 5)


class TestRealMatcherIntegration:
    def test_simple_matcher_end_to_end(self, tmp_path):
        layout = layout_of("the gradient descent rule", "other words here")
        root = write_dataset(
            tmp_path, [instance(phrase="gradient descent", true_word_ids=(1, 2))], layout
        )
        report = evaluate(load_dataset(root), WORD_CFG)
        assert report.overall.f1 == 100.0

    def test_llm_matcher_with_scripted_replies(self, tmp_path):
        layout = layout_of("the gradient descent rule")
        root = write_dataset(
            tmp_path, [instance(phrase="gradient descent", true_word_ids=(1, 2))], layout
        )
        cfg = MatchConfig(granularity="word", method="llm")
        report = evaluate(load_dataset(root), cfg, llm=ScriptedLlm(replies=["[2, 3]"]))
        assert report.overall.f1 == 100.0


class TestCompareLlms:
    def fixture_dataset(self, tmp_path):
        layout = layout_of("the gradient descent rule")
        root = write_dataset(
            tmp_path, [instance(phrase="gradient descent", true_word_ids=(1, 2))], layout
        )
        return load_dataset(root)

    def cfg(self, name):
        return ProviderConfig(kind="llm", endpoint="https://x", credential="k", model_name=name)

    def test_failures_stay_isolated(self, tmp_path):
        instances = self.fixture_dataset(tmp_path)

        def factory(provider_cfg):
            if provider_cfg.model_name == "broken":
                raise RuntimeError("auth expired")
            return ScriptedLlm(replies=["[2, 3]"])

        results = compare_llms(instances, [self.cfg("good"), self.cfg("broken")], client_factory=factory)
        assert results[0].model_name == "good"
        assert results[0].report.overall.f1 == 100.0
        assert results[1].model_name == "broken"
        assert results[1].report is None
        assert "auth expired" in results[1].error

    def test_requires_llm_config(self, tmp_path):
        with pytest.raises(ValueError, match="llm"):
            compare_llms(self.fixture_dataset(tmp_path), [self.cfg("m")], cfg=WORD_CFG)


class TestMetricsTable:
    def report(self, evalset_dir):
        instances = load_dataset(evalset_dir)
        fn = scripted_match({i.dataset_id: i.true_word_ids for i in instances})
        return evaluate(instances, WORD_CFG, match_fn=fn)

    def test_layout_golden(self, evalset_dir):
        table = render_metrics_table([("WS", self.report(evalset_dir))])
        expected = "\n".join(
            [
                "               | Overall (N=20)                  | Text-Heavy Subset               | Math-Heavy Subset",
                "Configuration  |  MSR(%)   Prec.    Rec.      F1 |  MSR(%)   Prec.    Rec.      F1 |  MSR(%)   Prec.    Rec.      F1",
                "-" * 117,
                "WS             |   100.0   100.0   100.0   100.0 |   100.0   100.0   100.0   100.0 |   100.0   100.0   100.0   100.0",
            ]
        )
        assert table == expected

    def test_failed_model_row(self, evalset_dir):
        table = render_metrics_table([("ok", self.report(evalset_dir)), ("down", None)])
        lines = table.splitlines()
        assert lines[-1].startswith("down")
        assert "(failed)" in lines[-1]

    def test_custom_label_header(self, evalset_dir):
        table = render_metrics_table([("model-a", self.report(evalset_dir))], label_header="Model")
        assert table.splitlines()[1].startswith("Model")
