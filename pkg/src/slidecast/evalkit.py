"""Evaluation harness for matching configurations.

Datasets are a directory with a manifest.json::

    {"schema_version": 1,
     "name": "...",
     "instances": [
       {"dataset_id": "inst-0001",
        "slide_ref": "layouts/0.json",        # relative to the dataset root
        "phrase": "Cross-entropy loss",
        "context_before": "... words spoken before ...",
        "context_after": "... words spoken after ...",
        "true_word_ids": [4, 5],
        "true_line_ids": [2],                  # optional; derived when absent
        "subset": "math_heavy"}]}

true_line_ids, when absent, are derived as the set of lines containing any
true word. Scoring: an instance is matched when the matcher returns anything;
the match success rate (MSR) is matched/total*100. Precision/recall/F1 are
computed over matched instances only (no-match cases are already captured by
MSR) with micro-averaging by default; macro averaging and counting no-match
instances as all-false-negative sit behind flags.
"""

from __future__ import annotations

import logging
import os
import random
from dataclasses import dataclass, field

from .errors import SlidecastError
from .jsonio import read_json
from .matcher import match_location
from .model import MatchConfig, OcrLayout
from .providers.base import ProviderConfig

logger = logging.getLogger(__name__)

SUBSETS = ("math_heavy", "text_heavy")
AVERAGING_MODES = ("micro", "macro")


class SchemaError(SlidecastError):
    """Dataset manifest violates the documented schema."""


class DanglingId(SlidecastError):
    """A truth annotation references an element id absent from its layout."""


@dataclass(frozen=True)
class AnnotatedInstance:
    """One ground-truth highlight annotation."""

    dataset_id: str
    slide_ref: str  # absolute layout path after loading
    phrase: str
    context_before: str
    context_after: str
    true_word_ids: tuple[int, ...]
    true_line_ids: tuple[int, ...]
    subset: str

    def __post_init__(self):
        object.__setattr__(self, "true_word_ids", tuple(self.true_word_ids))
        object.__setattr__(self, "true_line_ids", tuple(self.true_line_ids))
        if self.subset not in SUBSETS:
            raise SchemaError(f"unknown subset {self.subset!r} in {self.dataset_id}")
        if not self.phrase:
            raise SchemaError(f"empty phrase in {self.dataset_id}")

    def truth(self, granularity: str) -> set[int]:
        return set(self.true_word_ids if granularity == "word" else self.true_line_ids)


class _LayoutCache:
    def __init__(self):
        self._cache: dict[str, OcrLayout] = {}

    def get(self, path: str) -> OcrLayout:
        if path not in self._cache:
            doc = read_json(path)
            if isinstance(doc, dict) and "layout" in doc:
                doc = doc["layout"]  # accept pipeline-written envelopes too
            self._cache[path] = OcrLayout.from_dict(doc)
        return self._cache[path]


_layouts = _LayoutCache()


def load_dataset(root: str) -> list[AnnotatedInstance]:
    """Load and validate a dataset directory; raises SchemaError/DanglingId."""
    manifest_path = os.path.join(root, "manifest.json")
    if not os.path.exists(manifest_path):
        raise SchemaError(f"no manifest.json under {root}")
    manifest = read_json(manifest_path)
    if not isinstance(manifest, dict) or manifest.get("schema_version") != 1:
        raise SchemaError("manifest must be an object with schema_version 1")
    raw_instances = manifest.get("instances")
    if not isinstance(raw_instances, list):
        raise SchemaError("manifest.instances must be a list")

    instances = []
    seen_ids = set()
    for pos, raw in enumerate(raw_instances):
        if not isinstance(raw, dict):
            raise SchemaError(f"instance #{pos} is not an object")
        try:
            dataset_id = raw["dataset_id"]
            slide_ref = raw["slide_ref"]
            phrase = raw["phrase"]
            true_word_ids = raw["true_word_ids"]
            subset = raw["subset"]
        except KeyError as exc:
            raise SchemaError(f"instance #{pos} missing field {exc}") from exc
        if dataset_id in seen_ids:
            raise SchemaError(f"duplicate dataset_id {dataset_id!r}")
        seen_ids.add(dataset_id)
        if not isinstance(true_word_ids, list) or not true_word_ids:
            raise SchemaError(f"{dataset_id}: true_word_ids must be a non-empty list")
        if not all(isinstance(i, int) and not isinstance(i, bool) for i in true_word_ids):
            raise SchemaError(f"{dataset_id}: true_word_ids must be integers")

        layout_path = os.path.abspath(os.path.join(root, slide_ref))
        if not os.path.exists(layout_path):
            raise SchemaError(f"{dataset_id}: slide_ref {slide_ref!r} not found")
        layout = _layouts.get(layout_path)

        word_ids = {w.id for w in layout.words}
        for wid in true_word_ids:
            if wid not in word_ids:
                raise DanglingId(f"{dataset_id}: true word id {wid} not in layout {slide_ref}")

        true_line_ids = raw.get("true_line_ids")
        if true_line_ids is None:
            # line truth derived: every line containing a true word
            true_line_ids = sorted({layout.words[wid].line_id for wid in true_word_ids})
        else:
            if not isinstance(true_line_ids, list) or not all(
                isinstance(i, int) and not isinstance(i, bool) for i in true_line_ids
            ):
                raise SchemaError(f"{dataset_id}: true_line_ids must be a list of integers")
            line_ids = {ln.id for ln in layout.lines}
            for lid in true_line_ids:
                if lid not in line_ids:
                    raise DanglingId(f"{dataset_id}: true line id {lid} not in layout {slide_ref}")

        instances.append(
            AnnotatedInstance(
                dataset_id=str(dataset_id),
                slide_ref=layout_path,
                phrase=str(phrase),
                context_before=str(raw.get("context_before", "")),
                context_after=str(raw.get("context_after", "")),
                true_word_ids=tuple(true_word_ids),
                true_line_ids=tuple(true_line_ids),
                subset=str(subset),
            )
        )
    return instances


def sample_instances(instances: list[AnnotatedInstance], n: int, seed: int) -> list[AnnotatedInstance]:
    """Deterministic subsample: Mersenne Twister seeded with `seed`.

    random.Random(seed).sample is stable across runs and platforms for a
    given Python major line, which is what reproducibility here relies on.
    """
    if n >= len(instances):
        return list(instances)
    return random.Random(seed).sample(instances, n)


@dataclass(frozen=True)
class MetricBlock:
    """Scores over one group of instances, percent-scaled like the reports."""

    n: int
    n_matched: int
    msr: float
    precision: float
    recall: float
    f1: float

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "n_matched": self.n_matched,
            "msr": self.msr,
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
        }


@dataclass(frozen=True)
class InstanceOutcome:
    dataset_id: str
    subset: str
    matched: bool
    predicted_ids: tuple[int, ...]
    tp: int
    fp: int
    fn: int

    def to_dict(self) -> dict:
        return {
            "dataset_id": self.dataset_id,
            "subset": self.subset,
            "matched": self.matched,
            "predicted_ids": list(self.predicted_ids),
            "tp": self.tp,
            "fp": self.fp,
            "fn": self.fn,
        }


@dataclass(frozen=True)
class EvalReport:
    config: MatchConfig
    averaging: str
    count_no_match: bool
    overall: MetricBlock
    by_subset: dict = field(default_factory=dict)
    per_instance: tuple = ()

    def to_dict(self) -> dict:
        return {
            "config": self.config.to_dict(),
            "averaging": self.averaging,
            "count_no_match": self.count_no_match,
            "overall": self.overall.to_dict(),
            "by_subset": {k: v.to_dict() for k, v in self.by_subset.items()},
            "per_instance": [o.to_dict() for o in self.per_instance],
        }


def _aggregate(outcomes: list[InstanceOutcome], averaging: str, count_no_match: bool) -> MetricBlock:
    n = len(outcomes)
    matched = [o for o in outcomes if o.matched]
    msr = 100.0 * len(matched) / n if n else 0.0
    counted = list(matched)
    if count_no_match:
        counted = list(outcomes)
    if not counted:
        return MetricBlock(n=n, n_matched=len(matched), msr=msr, precision=0.0, recall=0.0, f1=0.0)
    if averaging == "micro":
        tp = sum(o.tp for o in counted)
        fp = sum(o.fp for o in counted)
        fn = sum(o.fn for o in counted)
        precision = tp / (tp + fp) if tp + fp else 0.0
        recall = tp / (tp + fn) if tp + fn else 0.0
    else:
        precisions = [o.tp / (o.tp + o.fp) if o.tp + o.fp else 0.0 for o in counted]
        recalls = [o.tp / (o.tp + o.fn) if o.tp + o.fn else 0.0 for o in counted]
        precision = sum(precisions) / len(counted)
        recall = sum(recalls) / len(counted)
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return MetricBlock(
        n=n,
        n_matched=len(matched),
        msr=msr,
        precision=100.0 * precision,
        recall=100.0 * recall,
        f1=100.0 * f1,
    )


def evaluate(
    instances: list[AnnotatedInstance],
    cfg: MatchConfig,
    llm=None,
    *,
    match_fn=None,
    averaging: str = "micro",
    count_no_match: bool = False,
) -> EvalReport:
    """Score one matching configuration against annotated instances.

    match_fn(instance, layout) -> MatchResult overrides the real matcher;
    the harness's own behavior is tested by injecting scripted matchers.
    """
    if averaging not in AVERAGING_MODES:
        raise ValueError(f"unknown averaging mode: {averaging!r}")
    outcomes = []
    for inst in instances:
        layout = _layouts.get(inst.slide_ref)
        if match_fn is not None:
            result = match_fn(inst, layout)
        elif cfg.method == "llm":
            result = match_location(
                inst.phrase,
                layout,
                cfg,
                llm=llm,
                context_before=inst.context_before,
                context_after=inst.context_after,
            )
        else:
            result = match_location(inst.phrase, layout, cfg)
        truth = inst.truth(cfg.granularity)
        pred = set(result.matched_ids)
        matched = result.status == "matched"
        if matched:
            tp = len(pred & truth)
            fp = len(pred - truth)
            fn = len(truth - pred)
        else:
            tp, fp, fn = 0, 0, len(truth)
        outcomes.append(
            InstanceOutcome(
                dataset_id=inst.dataset_id,
                subset=inst.subset,
                matched=matched,
                predicted_ids=tuple(sorted(pred)),
                tp=tp,
                fp=fp,
                fn=fn,
            )
        )

    by_subset = {}
    for subset in SUBSETS:
        group = [o for o in outcomes if o.subset == subset]
        if group:
            by_subset[subset] = _aggregate(group, averaging, count_no_match)
    return EvalReport(
        config=cfg,
        averaging=averaging,
        count_no_match=count_no_match,
        overall=_aggregate(outcomes, averaging, count_no_match),
        by_subset=by_subset,
        per_instance=tuple(outcomes),
    )


@dataclass(frozen=True)
class ModelComparison:
    model_name: str
    report: EvalReport | None
    error: str | None = None

    def to_dict(self) -> dict:
        return {
            "model_name": self.model_name,
            "report": self.report.to_dict() if self.report else None,
            "error": self.error,
        }


def _default_client_factory(cfg: ProviderConfig):
    from .providers import HttpLlm

    return HttpLlm(cfg)


def compare_llms(
    instances: list[AnnotatedInstance],
    llm_configs: list[ProviderConfig],
    cfg: MatchConfig | None = None,
    client_factory=None,
    **eval_kwargs,
) -> list[ModelComparison]:
    """Evaluate several models on the same instances; failures stay isolated.

    A model that errors out (auth, quota, persistent malformed replies) is
    reported with its error string; the remaining models still run.
    """
    cfg = cfg or MatchConfig(granularity="word", method="llm")
    if cfg.method != "llm":
        raise ValueError("compare_llms requires an llm matching configuration")
    factory = client_factory or _default_client_factory
    results = []
    for provider_cfg in llm_configs:
        name = provider_cfg.model_name or provider_cfg.endpoint
        try:
            client = factory(provider_cfg)
            report = evaluate(instances, cfg, llm=client, **eval_kwargs)
            results.append(ModelComparison(model_name=name, report=report))
        except Exception as exc:  # noqa: BLE001 - isolation is the contract
            logger.error("model %s failed: %s", name, exc)
            results.append(ModelComparison(model_name=name, report=None, error=str(exc)))
    return results


_GROUPS = (
    ("Overall", None),
    ("Text-Heavy Subset", "text_heavy"),
    ("Math-Heavy Subset", "math_heavy"),
)


def render_metrics_table(rows: list[tuple[str, EvalReport | None]], label_header: str = "Configuration") -> str:
    """Fixed-width table: one row per configuration/model, three column
    groups (Overall, Text-Heavy Subset, Math-Heavy Subset), each with
    MSR(%)/Prec./Rec./F1 columns."""
    label_width = max([len(label_header)] + [len(label) for label, _r in rows]) + 2
    sub_header = f"{'MSR(%)':>7} {'Prec.':>7} {'Rec.':>7} {'F1':>7}"
    group_width = len(sub_header)

    def block_cells(block: MetricBlock | None) -> str:
        if block is None:
            return " " * group_width
        return (
            f"{block.msr:>7.1f} {block.precision:>7.1f} {block.recall:>7.1f} {block.f1:>7.1f}"
        )

    first_n = next((r.overall.n for _l, r in rows if r is not None), 0)
    head1 = f"{'':<{label_width}}"
    head2 = f"{label_header:<{label_width}}"
    for title, _key in _GROUPS:
        shown = f"{title} (N={first_n})" if _key is None else title
        head1 += f"| {shown:<{group_width}} "
        head2 += f"| {sub_header} "
    out = [head1.rstrip(), head2.rstrip(), "-" * len(head2)]
    for label, report in rows:
        line = f"{label:<{label_width}}"
        if report is None:
            line += "| (failed)"
            out.append(line)
            continue
        for _title, key in _GROUPS:
            block = report.overall if key is None else report.by_subset.get(key)
            line += f"| {block_cells(block)} "
        out.append(line.rstrip())
    return "\n".join(out)
