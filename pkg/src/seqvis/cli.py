"""Command-line entry point.

Exit codes: 0 success, 2 configuration error, 3 data error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .metrics import EvalError, EvalReport
from .pipeline import DETECTORS, PROPAGATORS, RunConfig, evaluate_dataset, k_sweep, run_pipeline
from .reduction import ReductionConfig, reduce_sequences
from .report import format_csv, format_table
from .sequence import ResultsError, dump_results, load_results
from .synth import ConfigError, DatasetError, ScenarioConfig, generate_dataset, load_dataset, save_dataset

EXIT_CONFIG = 2
EXIT_DATA = 3

# flag -> RunConfig field
_RUN_FLAGS = {
    "dataset": "dataset",
    "out": "output",
    "report": "report",
    "key_frames": "key_frames",
    "theta": "theta",
    "max_instances": "max_instances",
    "score_threshold": "score_threshold",
    "memory_stride": "memory_stride",
    "detector": "detector",
    "propagator": "propagator",
    "category_aware": "category_aware",
    "max_output": "max_output",
    "seed": "seed",
    "workers": "workers",
    "search_radius": "search_radius",
    "match_threshold": "match_threshold",
    "morph_radius": "morph_radius",
    "score_noise": "score_noise",
}


def _int_list(text: str) -> list[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from exc


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="seqvis", description="Sequence proposals for video instance segmentation.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write a synthetic benchmark dataset")
    g.add_argument("--out", required=True, help="dataset JSON path; frames go next to it")
    g.add_argument("--videos", type=int, default=20)
    g.add_argument("--frames", type=int, default=24)
    g.add_argument("--width", type=int, default=64)
    g.add_argument("--height", type=int, default=64)
    g.add_argument("--min-instances", type=int, default=2)
    g.add_argument("--max-instances", type=int, default=4)
    g.add_argument("--occluder-probability", type=float, default=0.5)
    g.add_argument("--late-entry-probability", type=float, default=0.0)
    g.add_argument("--seed", type=int, default=0)

    r = sub.add_parser("run", help="propose, reduce and (if ground truth exists) evaluate")
    r.add_argument("--config", help="JSON file of RunConfig fields; flags given explicitly win")
    r.add_argument("--dataset")
    r.add_argument("--out", help="results JSON path")
    r.add_argument("--report", help="EvalReport JSON path")
    r.add_argument("--key-frames", type=int)
    r.add_argument("--theta", type=float)
    r.add_argument("--max-instances", type=int)
    r.add_argument("--score-threshold", type=float)
    r.add_argument("--memory-stride", type=int)
    r.add_argument("--detector", choices=DETECTORS)
    r.add_argument("--propagator", choices=PROPAGATORS)
    r.add_argument("--category-aware", action="store_true", default=None)
    r.add_argument("--max-output", type=int)
    r.add_argument("--seed", type=int)
    r.add_argument("--workers", type=int)
    r.add_argument("--search-radius", type=int)
    r.add_argument("--match-threshold", type=float)
    r.add_argument("--morph-radius", type=int)
    r.add_argument("--score-noise", type=float)
    r.add_argument("--sweep-k", type=_int_list, help="comma-separated key-frame counts; prints one row per K")
    r.add_argument("--csv", help="CSV path for --sweep-k output")

    red = sub.add_parser("reduce", help="sequence NMS over an existing results file")
    red.add_argument("results")
    red.add_argument("--theta", type=float, default=0.5)
    red.add_argument("--category-aware", action="store_true")
    red.add_argument("--max-output", type=int)
    red.add_argument("--out", help="output path (default: stdout)")

    e = sub.add_parser("eval", help="score a results file against a dataset")
    e.add_argument("--dataset", required=True)
    e.add_argument("--results", required=True)
    e.add_argument("--out", help="EvalReport JSON path")

    rep = sub.add_parser("report", help="tabulate one or more EvalReport files")
    rep.add_argument("reports", nargs="+")
    rep.add_argument("--csv", help="also write a CSV table here")
    return parser


def _run_config(args) -> RunConfig:
    values = {}
    if args.config:
        try:
            values.update(json.loads(Path(args.config).read_text()))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from exc
    for flag, name in _RUN_FLAGS.items():
        val = getattr(args, flag)
        if val is not None:
            values[name] = val
    try:
        return RunConfig.from_dict(values).validate()
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def cmd_generate(args) -> int:
    cfg = ScenarioConfig(
        video_count=args.videos,
        frames_per_video=args.frames,
        width=args.width,
        height=args.height,
        instances_per_video=(args.min_instances, args.max_instances),
        occluder_probability=args.occluder_probability,
        late_entry_probability=args.late_entry_probability,
        rng_seed=args.seed,
    )
    ds = generate_dataset(cfg)
    path = save_dataset(ds, args.out)
    print(f"wrote {len(ds.videos)} videos, {len(ds.annotations)} instances to {path}")
    return 0


def cmd_run(args) -> int:
    config = _run_config(args)
    if args.sweep_k:
        if not config.dataset:
            raise ConfigError("--dataset is required")
        ds = load_dataset(config.dataset)
        reports = k_sweep(ds, config, args.sweep_k)
        print(format_table(reports))
        if args.csv:
            Path(args.csv).write_text(format_csv(reports))
        return 0
    results, report = run_pipeline(config)
    print(f"{len(results)} sequences" + (f" -> {config.output}" if config.output else ""))
    if report is not None:
        print(format_table([report], ["run"]))
    return 0


def cmd_reduce(args) -> int:
    cfg = ReductionConfig(args.theta, args.category_aware, args.max_output)
    results = load_results(args.results)
    by_video = {}
    for r in results:
        by_video.setdefault(r.video_id, []).append(r)
    kept = [r for vid in by_video for r in reduce_sequences(by_video[vid], cfg)]
    if args.out:
        dump_results(kept, args.out)
        print(f"kept {len(kept)} of {len(results)} sequences -> {args.out}")
    else:
        json.dump([r.to_json() for r in kept], sys.stdout, separators=(",", ":"))
        sys.stdout.write("\n")
    return 0


def cmd_eval(args) -> int:
    ds = load_dataset(args.dataset)
    results = load_results(args.results, shape=(ds.height, ds.width))
    try:
        report = evaluate_dataset(ds, results)
    except EvalError as exc:
        raise ResultsError(str(exc)) from exc
    if args.out:
        report.dump(args.out)
    print(format_table([report], [Path(args.results).stem]))
    return 0


def cmd_report(args) -> int:
    reports = []
    for path in args.reports:
        try:
            reports.append(EvalReport.load(path))
        except OSError as exc:
            raise ConfigError(f"cannot read report {path}: {exc}") from exc
        except EvalError as exc:
            raise ConfigError(f"malformed report {path}: {exc}") from exc
    labels = [f"K={r.meta['key_frames']}" if "key_frames" in r.meta else Path(p).stem for r, p in zip(reports, args.reports)]
    print(format_table(reports, labels))
    if args.csv:
        Path(args.csv).write_text(format_csv(reports, labels))
    return 0


COMMANDS = {
    "generate": cmd_generate,
    "run": cmd_run,
    "reduce": cmd_reduce,
    "eval": cmd_eval,
    "report": cmd_report,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, ValueError) as exc:
        if isinstance(exc, (DatasetError, ResultsError)):
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_DATA
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
