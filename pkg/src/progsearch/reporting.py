"""Curve files, run metrics, and cross-method summary statistics.

The artifact of record for every method is a cumulative curve CSV with
columns (evaluations, correct_found): one row per solve event, preceded
by a (0, 0) origin row and closed by a final row at the end of the run.
The summary statistic is evaluations-to-k: the smallest cumulative
evaluation count at which a curve reaches k solved questions (infinity
when it never does).  Methods are compared by the across-seed median of
that statistic, and their spread by the across-seed max/min ratio.
"""

from __future__ import annotations

import csv
import math
import statistics
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

CURVE_HEADER = ["evaluations", "correct_found"]
METRICS_HEADER = [
    "loop",
    "question_id",
    "source_pool",
    "evaluations",
    "best_score",
    "solved_total",
    "csm_fallback_flag",
]
TRACE_HEADER = ["step", "selected_key", "new_nodes", "evaluations", "best_score"]


class SchemaError(ValueError):
    pass


def write_curve(path, curve: Sequence[tuple[int, int]]) -> None:
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(CURVE_HEADER)
        for evaluations, found in curve:
            writer.writerow([evaluations, found])


def read_curve(path) -> list[tuple[int, int]]:
    with open(path, newline="") as handle:
        reader = csv.reader(handle)
        header = next(reader, None)
        if header != CURVE_HEADER:
            raise SchemaError(f"{path}: expected columns {CURVE_HEADER}, got {header}")
        rows = []
        for row in reader:
            try:
                rows.append((int(row[0]), int(row[1])))
            except (ValueError, IndexError) as exc:
                raise SchemaError(f"{path}: malformed row {row!r}") from exc
    return rows


def write_metrics(path, records) -> None:
    """Run-metrics CSV from LoopRecord objects (streamed via a callback too)."""
    with open(path, "w", newline="") as handle:
        writer = metrics_writer(handle)
        for record in records:
            writer(record)


def metrics_writer(handle):
    """Incremental metrics writer: header now, one row per callback."""
    writer = csv.writer(handle, lineterminator="\n")
    writer.writerow(METRICS_HEADER)

    def emit(record) -> None:
        writer.writerow(
            [
                record.loop,
                record.question_id,
                record.source_pool,
                record.evaluations,
                repr(record.best_score),
                record.solved_total,
                record.csm_fallback,
            ]
        )
        handle.flush()

    return emit


def write_trace(path, trace) -> None:
    """Per-step search trace CSV."""
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(TRACE_HEADER)
        for step, key, new_nodes, evaluations, best in trace.records:
            writer.writerow([step, key, new_nodes, evaluations, repr(best)])


def evaluations_to_k(curve: Sequence[tuple[int, int]], k: int) -> float:
    """Smallest evaluation count at which the curve reaches k solves."""
    if k <= 0:
        return 0.0
    for evaluations, found in curve:
        if found >= k:
            return float(evaluations)
    return math.inf


@dataclass(frozen=True)
class MethodSummary:
    method: str
    seeds: int
    k: int
    mean: float
    median: float
    minimum: float
    maximum: float

    @property
    def spread_ratio(self) -> float:
        """Across-seed max/min ratio; infinity when any seed never reached k."""
        if math.isinf(self.maximum):
            return math.inf
        if self.minimum <= 0:
            return math.inf
        return self.maximum / self.minimum


def summarize_method(method: str, curves: Iterable[Sequence[tuple[int, int]]], k: int) -> MethodSummary:
    values = [evaluations_to_k(curve, k) for curve in curves]
    if not values:
        raise ValueError(f"method {method!r} has no curves")
    finite = [v for v in values if not math.isinf(v)]
    mean = sum(values) / len(values) if len(finite) == len(values) else math.inf
    return MethodSummary(
        method=method,
        seeds=len(values),
        k=k,
        mean=mean,
        median=statistics.median(values),
        minimum=min(values),
        maximum=max(values),
    )


def median_ratio(numerator: MethodSummary, denominator: MethodSummary) -> float:
    """Ratio of across-seed median evaluations-to-k (inf-aware)."""
    num, den = numerator.median, denominator.median
    if math.isinf(den):
        return 0.0 if not math.isinf(num) else math.nan
    if den == 0:
        return math.inf
    return num / den


def _fmt(value: float) -> str:
    if math.isinf(value):
        return "inf"
    if math.isnan(value):
        return "nan"
    return repr(round(value, 6))


def write_summary(path, summaries: Sequence[MethodSummary], ratios: dict[str, float]) -> None:
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(["method", "seeds", "k", "mean", "median", "min", "max", "spread_ratio"])
        for s in summaries:
            writer.writerow(
                [s.method, s.seeds, s.k, _fmt(s.mean), _fmt(s.median), _fmt(s.minimum), _fmt(s.maximum), _fmt(s.spread_ratio)]
            )
        for label, value in sorted(ratios.items()):
            writer.writerow([f"ratio:{label}", "", "", "", _fmt(value), "", "", ""])


def format_summary_table(summaries: Sequence[MethodSummary], ratios: dict[str, float]) -> str:
    lines = [f"{'method':<16} {'seeds':>5} {'k':>5} {'mean':>12} {'median':>12} {'min':>12} {'max':>12} {'spread':>8}"]
    for s in summaries:
        lines.append(
            f"{s.method:<16} {s.seeds:>5} {s.k:>5} {_fmt(s.mean):>12} {_fmt(s.median):>12} "
            f"{_fmt(s.minimum):>12} {_fmt(s.maximum):>12} {_fmt(s.spread_ratio):>8}"
        )
    for label, value in sorted(ratios.items()):
        lines.append(f"ratio {label}: {_fmt(value)}")
    return "\n".join(lines)


def write_overlay(path, curves_by_method: dict[str, list[tuple[str, list[tuple[int, int]]]]]) -> None:
    """Long-form overlay data: method, seed label, evaluations, correct_found."""
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(["method", "seed", "evaluations", "correct_found"])
        for method in sorted(curves_by_method):
            for seed_label, curve in curves_by_method[method]:
                for evaluations, found in curve:
                    writer.writerow([method, seed_label, evaluations, found])


def render_svg(path, curves_by_method: dict[str, list[tuple[str, list[tuple[int, int]]]]]) -> None:
    """Optional overlay rendering; the CSV stays the artifact of record."""
    import matplotlib

    matplotlib.use("svg")
    matplotlib.rcParams["svg.hashsalt"] = "progsearch"
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(7, 4.5))
    colors = {}
    palette = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#8c564b"]
    for i, method in enumerate(sorted(curves_by_method)):
        colors[method] = palette[i % len(palette)]
        for seed_label, curve in curves_by_method[method]:
            xs = [e for e, _ in curve]
            ys = [f for _, f in curve]
            ax.step(xs, ys, where="post", color=colors[method], alpha=0.35, linewidth=0.9)
    for method, color in colors.items():
        ax.plot([], [], color=color, label=method)
    ax.set_xlabel("evaluations")
    ax.set_ylabel("correct programs found")
    ax.legend(loc="lower right")
    fig.tight_layout()
    fig.savefig(path, metadata={"Date": None})
    plt.close(fig)
