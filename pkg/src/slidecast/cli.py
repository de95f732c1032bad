"""Command-line entry point.

Subcommands cover the whole pipeline and its pieces:

    generate      full run: slides in, artifacts (and optionally video) out
    ocr-ingest    normalize one backend OCR payload into a layout file
    align         match highlight phrases from a transcript against a layout
    time          locate highlight phrases on the word-timestamp track
    render        render events/video from a previously written plan
    eval          score a matching configuration on an annotated dataset
    compare-llms  score several models on the same dataset
    cost          price a lecture from a usage log or the per-slide model

Exit codes: 0 success, 1 partial failure (some slides or instances failed),
2 configuration error (bad arguments, missing files, unusable providers).
Logs are JSON lines on stderr; stdout carries only the command's output.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys

from .costmodel import (
    CostBreakdown,
    PriceSheet,
    SlideUsage,
    breakdown_report,
    cost_from_usage_file,
    format_usd,
    slide_cost,
)
from .errors import ConfigError, SlidecastError
from .evalkit import compare_llms, evaluate, load_dataset, render_metrics_table, sample_instances
from .jsonio import SCHEMA_VERSION, canonical_dumps, dumps_compact, read_json, write_text
from .matcher import match_location
from .model import MatchConfig, OcrLayout, WordTimestamp
from .ocr_ingest import ingest, load_backend_doc
from .pipeline import PipelineConfig, generate_lecture, load_provider_configs
from .providers import FixtureLlm, HttpLlm, UsageLog
from .renderer import EncoderMissing, HighlightStyle, RenderPlan, render_video
from .timing import FALLBACK_MODES, locate_markers
from .transcript import context_for_marker, parse_transcript

logger = logging.getLogger(__name__)


class _JsonLineFormatter(logging.Formatter):
    """One JSON object per log line; pre-encoded dict messages pass through."""

    def format(self, record: logging.LogRecord) -> str:
        message = record.getMessage()
        try:
            payload = json.loads(message)
            if not isinstance(payload, dict):
                payload = {"msg": message}
        except ValueError:
            payload = {"msg": message}
        payload.setdefault("level", record.levelname.lower())
        payload.setdefault("logger", record.name)
        return dumps_compact(payload)


def _configure_logging(verbose: bool) -> None:
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(_JsonLineFormatter())
    root = logging.getLogger()
    root.handlers[:] = [handler]
    root.setLevel(logging.DEBUG if verbose else logging.INFO)


def _add_match_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--granularity", choices=("word", "line"), default="word")
    parser.add_argument("--method", choices=("simple", "fuzzy", "llm"), default="llm")
    parser.add_argument("--tau", type=float, default=0.8, help="fuzzy similarity threshold")
    parser.add_argument("--window-slack", type=int, default=2, help="fuzzy window size slack in words")


def _match_config(args) -> MatchConfig:
    return MatchConfig(
        granularity=args.granularity,
        method=args.method,
        fuzzy_threshold=args.tau,
        fuzzy_window_slack=args.window_slack,
    )


def _add_provider_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--providers", help="JSON file of provider configurations")
    parser.add_argument("--offline", metavar="DIR", help="fixture directory; no network calls")


def _llm_client(args, usage_log: UsageLog):
    """An LLM client for commands that need only that one provider."""
    if args.offline:
        return FixtureLlm(args.offline, usage_log=usage_log)
    if not args.providers:
        raise ConfigError("llm matching needs --offline fixtures or a --providers file")
    configs = load_provider_configs(args.providers)
    if "llm" not in configs:
        raise ConfigError("providers file has no llm entry")
    cfg = configs["llm"]
    if not cfg.endpoint:
        raise ConfigError("llm provider has no endpoint configured")
    if not cfg.resolve_credential():
        raise ConfigError("llm provider has no credential (set credential or credential_env)")
    return HttpLlm(cfg, usage_log=usage_log)


def _emit(doc, out_path: str | None) -> None:
    text = canonical_dumps(doc)
    if out_path:
        write_text(out_path, text)
    else:
        sys.stdout.write(text)


def _load_layout(path: str) -> OcrLayout:
    doc = read_json(path)
    return OcrLayout.from_dict(doc["layout"] if "layout" in doc else doc)


# --- subcommands -------------------------------------------------------------


def cmd_generate(args) -> int:
    providers = load_provider_configs(args.providers) if args.providers else {}
    if args.offline is None and not providers:
        raise ConfigError("generate needs --offline fixtures or a --providers file")
    cfg = PipelineConfig(
        input_path=args.input,
        workdir=args.workdir,
        match=_match_config(args),
        timing_fallback=args.timing_fallback,
        fps=args.fps,
        providers=providers,
        offline_dir=args.offline,
        jobs=args.jobs,
        dpi=args.dpi,
        events_only=args.events_only,
        encoder=args.encoder,
        use_prior_context=not args.no_prior_context,
    )
    result = generate_lecture(cfg)
    summary = {
        "workdir": result.workdir,
        "slides": result.slide_count,
        "failed_slides": [f.to_dict() for f in result.failures],
        "video": result.video_path,
        "provider_calls": result.provider_calls,
    }
    sys.stdout.write(canonical_dumps(summary))
    return 0 if result.ok else 1


def cmd_ocr_ingest(args) -> int:
    doc = load_backend_doc(args.payload, args.slide)
    layout = ingest(doc, args.width, args.height)
    _emit({"schema_version": SCHEMA_VERSION, "layout": layout.to_dict()}, args.out)
    return 0


def cmd_align(args) -> int:
    with open(args.transcript, encoding="utf-8") as fh:
        transcript = parse_transcript(fh.read())
    layout = _load_layout(args.layout)
    cfg = _match_config(args)
    usage_log = UsageLog()
    llm = _llm_client(args, usage_log) if cfg.method == "llm" else None
    results = []
    for idx, marker in enumerate(transcript.markers):
        if cfg.method == "llm":
            before, after = context_for_marker(transcript, idx)
            result = match_location(
                marker.phrase, layout, cfg, llm=llm, context_before=before, context_after=after
            )
        else:
            result = match_location(marker.phrase, layout, cfg)
        results.append({"phrase": marker.phrase, "result": result.to_dict()})
    _emit({"schema_version": SCHEMA_VERSION, "results": results}, args.out)
    return 0


def cmd_time(args) -> int:
    with open(args.transcript, encoding="utf-8") as fh:
        transcript = parse_transcript(fh.read())
    timestamps = [WordTimestamp.from_dict(t) for t in read_json(args.timestamps)]
    located = locate_markers(transcript, timestamps, fallback=args.timing_fallback)
    rows = []
    missing = 0
    for marker, interval in located:
        if interval is None:
            missing += 1
            rows.append({"phrase": marker.phrase, "start_ms": None, "end_ms": None})
        else:
            rows.append({"phrase": marker.phrase, "start_ms": interval[0], "end_ms": interval[1]})
    _emit({"schema_version": SCHEMA_VERSION, "markers": rows}, args.out)
    return 1 if missing else 0


def cmd_render(args) -> int:
    doc = read_json(args.plan)
    plan = RenderPlan.from_dict(doc["plan"] if "plan" in doc else doc)
    video = render_video(
        plan,
        args.out_dir,
        encoder=args.encoder,
        events_only=args.events_only,
        config_hash=doc.get("config_hash", ""),
    )
    sys.stdout.write(canonical_dumps({"video": video, "out_dir": args.out_dir}))
    return 0


def cmd_eval(args) -> int:
    instances = load_dataset(args.dataset)
    if args.sample is not None:
        instances = sample_instances(instances, args.sample, args.seed)
    cfg = _match_config(args)
    usage_log = UsageLog()
    llm = _llm_client(args, usage_log) if cfg.method == "llm" else None
    report = evaluate(
        instances,
        cfg,
        llm=llm,
        averaging=args.averaging,
        count_no_match=args.count_no_match,
    )
    sys.stdout.write(render_metrics_table([(cfg.code, report)]) + "\n")
    if args.out:
        write_text(args.out, canonical_dumps(report.to_dict()))
    return 0


def cmd_compare_llms(args) -> int:
    instances = load_dataset(args.dataset)
    if args.sample is not None:
        instances = sample_instances(instances, args.sample, args.seed)
    if args.offline:
        usage_log = UsageLog()
        # fixture client ignores the endpoint; model_name just labels the row
        configs = [_fixture_llm_config(name) for name in args.models]
        factory = lambda cfg: FixtureLlm(args.offline, usage_log=usage_log)  # noqa: E731
    else:
        if not args.providers:
            raise ConfigError("compare-llms needs --offline fixtures or a --providers file")
        provider_map = load_provider_configs(args.providers)
        if "llm" not in provider_map:
            raise ConfigError("providers file has no llm entry")
        base = provider_map["llm"]
        configs = [dataclasses.replace(base, model_name=name) for name in args.models]
        factory = None
    cfg = _match_config(args)
    if cfg.method != "llm":
        raise ConfigError("compare-llms only makes sense with --method llm")
    comparisons = compare_llms(
        instances,
        configs,
        cfg,
        client_factory=factory,
        averaging=args.averaging,
        count_no_match=args.count_no_match,
    )
    rows = [(c.model_name, c.report) for c in comparisons]
    sys.stdout.write(render_metrics_table(rows, label_header="Model") + "\n")
    if args.out:
        write_text(args.out, canonical_dumps([c.to_dict() for c in comparisons]))
    failed = sum(1 for c in comparisons if c.report is None)
    return 1 if failed == len(comparisons) and comparisons else 0


def _fixture_llm_config(model_name: str):
    from .providers import ProviderConfig

    return ProviderConfig(kind="llm", endpoint="fixture://local", model_name=model_name, credential="offline")


def cmd_cost(args) -> int:
    prices = PriceSheet(**read_json(args.prices)) if args.prices else PriceSheet()
    if args.usage:
        breakdown = cost_from_usage_file(args.usage, prices)
        title = "Cost from usage log"
    elif args.slides is not None:
        if args.slides < 0:
            raise ConfigError("--slides must be >= 0")
        per_slide = slide_cost(SlideUsage(), prices)
        breakdown = CostBreakdown(
            ocr=per_slide.ocr * args.slides,
            tts=per_slide.tts * args.slides,
            narration=per_slide.narration * args.slides,
            alignment=per_slide.alignment * args.slides,
        )
        title = f"Projected cost for {args.slides} slides"
    else:
        breakdown = slide_cost(SlideUsage(), prices)
        title = "Per-slide cost breakdown"
    sys.stdout.write(breakdown_report(breakdown, title=title) + "\n")
    sys.stdout.write(f"total: {format_usd(breakdown.total, places=4)}\n")
    return 0


# --- parser ------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="slidecast",
        description="Narrated lecture videos from slide decks, with synchronized highlights.",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="debug-level logs")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="run the full pipeline on a deck")
    p.add_argument("input", help="slide-image directory or PDF file")
    p.add_argument("--workdir", required=True, help="artifact directory")
    _add_match_args(p)
    _add_provider_args(p)
    p.add_argument("--timing-fallback", choices=FALLBACK_MODES, default="off")
    p.add_argument("--jobs", type=int, default=1, help="parallel slide workers")
    p.add_argument("--dpi", type=int, default=150, help="PDF rasterization resolution")
    p.add_argument("--fps", type=int, default=30)
    p.add_argument("--events-only", action="store_true", help="skip video encoding")
    p.add_argument("--encoder", default="ffmpeg")
    p.add_argument("--no-prior-context", action="store_true", help="narrate each slide in isolation")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("ocr-ingest", help="normalize a backend OCR payload")
    p.add_argument("payload", help="backend payload file (.json or .tsv)")
    p.add_argument("--width", type=int, required=True, help="target page width in pixels")
    p.add_argument("--height", type=int, required=True, help="target page height in pixels")
    p.add_argument("--slide", type=int, default=0, help="slide index recorded in the layout")
    p.add_argument("--out", help="output file (default: stdout)")
    p.set_defaults(func=cmd_ocr_ingest)

    p = sub.add_parser("align", help="match transcript highlights against a layout")
    p.add_argument("--transcript", required=True, help="raw narration text with markers")
    p.add_argument("--layout", required=True, help="layout JSON file")
    _add_match_args(p)
    _add_provider_args(p)
    p.add_argument("--out", help="output file (default: stdout)")
    p.set_defaults(func=cmd_align)

    p = sub.add_parser("time", help="locate highlight phrases on the timestamp track")
    p.add_argument("--transcript", required=True, help="raw narration text with markers")
    p.add_argument("--timestamps", required=True, help="word-timestamp JSON file")
    p.add_argument("--timing-fallback", choices=FALLBACK_MODES, default="off")
    p.add_argument("--out", help="output file (default: stdout)")
    p.set_defaults(func=cmd_time)

    p = sub.add_parser("render", help="render a previously written plan")
    p.add_argument("plan", help="plan.json from a generate run")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--events-only", action="store_true")
    p.add_argument("--encoder", default="ffmpeg")
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("eval", help="score a matching configuration on a dataset")
    p.add_argument("--dataset", required=True, help="dataset directory with manifest.json")
    _add_match_args(p)
    _add_provider_args(p)
    p.add_argument("--sample", type=int, help="evaluate a deterministic sample of N instances")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--averaging", choices=("micro", "macro"), default="micro")
    p.add_argument("--count-no-match", action="store_true", help="score unmatched instances as zero-precision")
    p.add_argument("--out", help="write the full report JSON here")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("compare-llms", help="score several models on one dataset")
    p.add_argument("--dataset", required=True)
    p.add_argument("--models", nargs="+", required=True, metavar="NAME")
    _add_match_args(p)
    _add_provider_args(p)
    p.add_argument("--sample", type=int)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--averaging", choices=("micro", "macro"), default="micro")
    p.add_argument("--count-no-match", action="store_true")
    p.add_argument("--out", help="write comparison JSON here")
    p.set_defaults(func=cmd_compare_llms)

    p = sub.add_parser("cost", help="price a lecture")
    p.add_argument("--usage", help="usage.jsonl from a generate run")
    p.add_argument("--slides", type=int, help="project cost for N slides from the per-slide model")
    p.add_argument("--prices", help="JSON file overriding unit prices")
    p.set_defaults(func=cmd_cost)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    _configure_logging(args.verbose)
    try:
        return args.func(args)
    except EncoderMissing as exc:
        logger.error("%s", exc)
        return 2
    except ConfigError as exc:
        logger.error("%s", exc)
        return 2
    except SlidecastError as exc:
        logger.error("%s", exc)
        return 1


if __name__ == "__main__":
    sys.exit(main())
