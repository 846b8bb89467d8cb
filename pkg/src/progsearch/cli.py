"""Command-line harness: dataset generation, runs, baseline, and reports.

Subcommands::

    progsearch gen       write a generated dataset (JSONL)
    progsearch run       train the searcher over a dataset (metrics + curve CSVs)
    progsearch baseline  run the policy-gradient baseline (curve CSVs)
    progsearch report    summarize curve files across methods

Experiment settings come from a YAML/JSON config file; command-line flags
override file values, which override defaults.  The PROGSEARCH_OUT
environment variable prefixes relative output directories.  Exit codes:
0 success, 2 usage or input error, 3 generation failure.  All outputs are
byte-reproducible for a fixed config and seed.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path
from typing import Optional, Sequence

import yaml

from . import microworld, reporting
from .graph import dump_graph
from .microworld import GenerationExhaustedError
from .registry import RegistryError, load_registry
from .reinforce import run_baseline
from .reporting import SchemaError
from .search import DEFAULT_WEIGHTS, SearchConfig
from .training import LoopConfig, run_training

USAGE_ERROR = 2
GENERATION_ERROR = 3


class CliError(Exception):
    """Input or configuration problem; maps to exit code 2."""


def _out_root() -> Path:
    return Path(os.environ.get("PROGSEARCH_OUT", "."))


def _resolve_out(raw: str) -> Path:
    path = Path(raw)
    if not path.is_absolute():
        path = _out_root() / path
    path.mkdir(parents=True, exist_ok=True)
    return path


def _load_config(path: Optional[str]) -> dict:
    if path is None:
        return {}
    p = Path(path)
    if not p.exists():
        raise CliError(f"config file not found: {p}")
    try:
        if p.suffix == ".json":
            doc = json.loads(p.read_text())
        else:
            doc = yaml.safe_load(p.read_text())
    except (OSError, ValueError, yaml.YAMLError) as exc:
        raise CliError(f"cannot parse config {p}: {exc}") from exc
    if doc is None:
        return {}
    if not isinstance(doc, dict):
        raise CliError(f"config {p} must contain a mapping")
    return doc


def _parse_seeds(text: str) -> list[int]:
    try:
        seeds = [int(s) for s in text.split(",") if s.strip() != ""]
    except ValueError as exc:
        raise CliError(f"bad seed list {text!r}") from exc
    if not seeds:
        raise CliError("seed list is empty")
    return seeds


def _registry_from(config: dict, override: Optional[str]):
    name = override or config.get("registry")
    if not name:
        raise CliError("no registry given (flag --registry or config key 'registry')")
    try:
        return name, load_registry(name)
    except (RegistryError, OSError) as exc:
        raise CliError(f"cannot load registry {name!r}: {exc}") from exc


# -- gen ------------------------------------------------------------------------

def _cmd_gen(args) -> int:
    _, registry = _registry_from({}, args.registry)
    if args.count <= 0:
        raise CliError("--count must be positive")
    if args.scenes < 2:
        raise CliError("--scenes must be at least 2 (constant answers are rejected)")
    dataset = microworld.gen_dataset(
        registry,
        count=args.count,
        scenes_per_question=args.scenes,
        seed=args.seed,
        max_depth=args.max_depth,
        stop_prob=args.stop_prob,
    )
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    microworld.save_dataset(out, dataset)
    lengths = [len(t.gt_program.tokens) for t in dataset]
    print(f"wrote {len(dataset)} questions to {out}")
    print(f"mean program length: {sum(lengths) / len(lengths):.2f} tokens")
    return 0


# -- run ------------------------------------------------------------------------

def _search_config(config: dict, args) -> SearchConfig:
    section = dict(config.get("search", {}))
    if args.max_step is not None:
        section["max_step"] = args.max_step
    return SearchConfig(
        max_step=int(section.get("max_step", 1000)),
        weights=tuple(section.get("weights", DEFAULT_WEIGHTS)),
        alpha=float(section.get("alpha", 0.05)),
        tolerance=int(section.get("tolerance", 1)),
    )


def _loop_config(config: dict, args, csm: bool) -> LoopConfig:
    section = dict(config.get("loop", {}))
    if args.max_loop is not None:
        section["max_loop"] = args.max_loop
    return LoopConfig(
        max_loop=int(section.get("max_loop", 100)),
        acceptable_boundary=section.get("acceptable_boundary"),
        csm_enabled=csm,
        top_count=int(section.get("top_count", 15)),
        random_count=int(section.get("random_count", 5)),
    )


def _cmd_run(args) -> int:
    config = _load_config(args.config)
    _, registry = _registry_from(config, args.registry)
    dataset_path = args.dataset or config.get("dataset")
    if not dataset_path:
        raise CliError("no dataset given (flag --dataset or config key 'dataset')")
    if not Path(dataset_path).exists():
        raise CliError(f"dataset file not found: {dataset_path}")
    mode = args.mode or config.get("mode", "exact")
    if mode not in ("exact", "accuracy"):
        raise CliError(f"unknown mode {mode!r} (expected exact or accuracy)")
    try:
        dataset = microworld.load_dataset(dataset_path, registry)
    except (ValueError, KeyError) as exc:
        raise CliError(f"cannot parse dataset {dataset_path}: {exc}") from exc
    if mode == "exact" and any(t.gt_program is None for t in dataset):
        raise CliError("exact mode requires ground-truth programs in the dataset")

    if args.csm is not None:
        csm = args.csm == "on"
    else:
        csm = bool(config.get("loop", {}).get("csm", False))
    seeds = _parse_seeds(args.seeds) if args.seeds else [int(s) for s in config.get("seeds", [1])]
    label = args.label or ("gbhs_csm" if csm else "gbhs_nocsm")
    out_dir = _resolve_out(args.out or config.get("out", "runs"))
    search_config = _search_config(config, args)
    loop_config = _loop_config(config, args, csm)

    for seed in seeds:
        metrics_path = out_dir / f"metrics_{label}_seed{seed}.csv"
        curve_path = out_dir / f"curve_{label}_seed{seed}.csv"
        on_search = None
        if args.dump_graphs or args.dump_traces:
            dump_dir = out_dir / f"dumps_{label}_seed{seed}"
            dump_dir.mkdir(parents=True, exist_ok=True)

            def on_search(loop, qid, trace, graph, _dir=dump_dir):  # noqa: ANN001
                if args.dump_traces:
                    reporting.write_trace(_dir / f"trace_loop{loop:04d}_q{qid}.csv", trace)
                if args.dump_graphs:
                    dump_graph(graph, _dir / f"graph_loop{loop:04d}_q{qid}.jsonl")

        with open(metrics_path, "w", newline="") as handle:
            emit = reporting.metrics_writer(handle)
            result = run_training(
                dataset,
                registry,
                mode,
                loop_config,
                search_config,
                seed,
                on_record=emit,
                on_search=on_search,
            )
        reporting.write_curve(curve_path, result.curve)
        print(
            f"seed {seed}: solved {len(result.pools.solved)}/{len(dataset)} "
            f"in {len(result.records)} loops, {result.total_evaluations} evaluations"
        )
    return 0


# -- baseline ------------------------------------------------------------------------

def _cmd_baseline(args) -> int:
    config = _load_config(args.config)
    _, registry = _registry_from(config, args.registry)
    dataset_path = args.dataset or config.get("dataset")
    if not dataset_path:
        raise CliError("no dataset given (flag --dataset or config key 'dataset')")
    if not Path(dataset_path).exists():
        raise CliError(f"dataset file not found: {dataset_path}")
    try:
        dataset = microworld.load_dataset(dataset_path, registry)
    except (ValueError, KeyError) as exc:
        raise CliError(f"cannot parse dataset {dataset_path}: {exc}") from exc
    if any(t.gt_program is None for t in dataset):
        raise CliError("the baseline requires ground-truth programs in the dataset")

    section = dict(config.get("baseline", {}))
    budget = args.budget if args.budget is not None else int(section.get("budget", 100000))
    if budget < 0:
        raise CliError("--budget must be non-negative")
    if args.seeds:
        seeds = _parse_seeds(args.seeds)
    else:
        seeds = [int(s) for s in section.get("seeds", [1, 2, 3, 4, 5, 6, 7, 8])]
    lr = float(section.get("learning_rate", 0.05))
    decay = float(section.get("baseline_decay", 0.99))
    out_dir = _resolve_out(args.out or config.get("out", "runs"))

    for seed in seeds:
        result = run_baseline(dataset, registry, budget, seed, learning_rate=lr, baseline_decay=decay)
        reporting.write_curve(out_dir / f"curve_reinforce_seed{seed}.csv", result.curve)
        print(
            f"seed {seed}: solved {len(result.solved)}/{len(dataset)} "
            f"within {result.evaluations} evaluations"
        )
    return 0


# -- report ------------------------------------------------------------------------

def _cmd_report(args) -> int:
    import glob as globlib

    methods: dict[str, list[tuple[str, list]]] = {}
    for spec_arg in args.method:
        label, _, pattern = spec_arg.partition("=")
        if not label or not pattern:
            raise CliError(f"bad --method {spec_arg!r}; expected LABEL=GLOB")
        paths = sorted(globlib.glob(pattern))
        if not paths:
            raise CliError(f"no curve files match {pattern!r}")
        curves = []
        for path in paths:
            try:
                curves.append((Path(path).stem, reporting.read_curve(path)))
            except SchemaError as exc:
                raise CliError(str(exc)) from exc
        methods[label] = curves
    if args.k is not None:
        k = args.k
    else:
        total = args.total
        if total is None:
            raise CliError("either --k or --total (with --k-frac) is required")
        k = max(1, int(args.k_frac * total))

    summaries = [
        reporting.summarize_method(label, [c for _, c in curves], k)
        for label, curves in sorted(methods.items())
    ]
    by_label = {s.method: s for s in summaries}
    ratios = {}
    if args.ratio:
        num_label, _, den_label = args.ratio.partition("/")
        if num_label not in by_label or den_label not in by_label:
            raise CliError(f"--ratio labels {args.ratio!r} not among methods {sorted(by_label)}")
        ratios[args.ratio] = reporting.median_ratio(by_label[num_label], by_label[den_label])

    out_dir = _resolve_out(args.out or "report")
    reporting.write_summary(out_dir / "summary.csv", summaries, ratios)
    reporting.write_overlay(out_dir / "curves.csv", methods)
    if args.svg:
        try:
            reporting.render_svg(out_dir / "curves.svg", methods)
        except ImportError:
            print("matplotlib unavailable; skipped SVG (CSV written)", file=sys.stderr)
    print(reporting.format_summary_table(summaries, ratios))
    return 0


# -- entry ------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="progsearch", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen", help="generate a dataset")
    gen.add_argument("--registry", required=True, help="built-in name or YAML/JSON path")
    gen.add_argument("--count", type=int, required=True)
    gen.add_argument("--scenes", type=int, default=5)
    gen.add_argument("--seed", type=int, default=7)
    gen.add_argument("--max-depth", type=int, default=6)
    gen.add_argument("--stop-prob", type=float, default=0.45)
    gen.add_argument("--out", required=True)
    gen.set_defaults(func=_cmd_gen)

    run = sub.add_parser("run", help="train the searcher over a dataset")
    run.add_argument("--config", help="YAML/JSON experiment config")
    run.add_argument("--registry")
    run.add_argument("--dataset")
    run.add_argument("--mode", choices=["exact", "accuracy"])
    run.add_argument("--csm", choices=["on", "off"])
    run.add_argument("--seeds", help="comma-separated seed list")
    run.add_argument("--max-loop", type=int)
    run.add_argument("--max-step", type=int)
    run.add_argument("--label", help="method label used in output filenames")
    run.add_argument("--out")
    run.add_argument("--dump-graphs", action="store_true")
    run.add_argument("--dump-traces", action="store_true")
    run.set_defaults(func=_cmd_run)

    base = sub.add_parser("baseline", help="run the policy-gradient baseline")
    base.add_argument("--config")
    base.add_argument("--registry")
    base.add_argument("--dataset")
    base.add_argument("--budget", type=int)
    base.add_argument("--seeds", help="comma-separated seed list (default 1..8)")
    base.add_argument("--out")
    base.set_defaults(func=_cmd_baseline)

    report = sub.add_parser("report", help="summarize curve files")
    report.add_argument("--method", action="append", required=True, help="LABEL=GLOB, repeatable")
    report.add_argument("--k", type=int, help="absolute solve target")
    report.add_argument("--total", type=int, help="dataset size, for --k-frac")
    report.add_argument("--k-frac", type=float, default=0.5)
    report.add_argument("--ratio", help="NUMERATOR/DENOMINATOR method labels")
    report.add_argument("--out")
    report.add_argument("--svg", action="store_true")
    report.set_defaults(func=_cmd_report)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse uses 2 for usage errors already
        return int(exc.code or 0)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return USAGE_ERROR
    except GenerationExhaustedError as exc:
        print(f"generation failed: {exc}", file=sys.stderr)
        return GENERATION_ERROR


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
