"""Aggregation of characterized workloads into tables and plot data.

Summaries average metrics per group (application category, system
behavior, suite, or software stack); the stack-impact table compares the
same algorithm across software stacks and flags order-of-magnitude gaps;
`emit` writes everything as byte-stable CSV files plus a JSON bundle.
"""

from __future__ import annotations

import enum
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

from .cachesim import MissRatioCurve
from .errors import DataError
from .model import BehaviorLabels, Category, SystemBehavior

log = logging.getLogger("wcr.report")

# a max/min gap of at least 0.9 decades counts as an order-of-magnitude finding
GAP_FLAG_DECADES = 0.9
ORDER_OF_MAGNITUDE = "order_of_magnitude"
NEAR_ORDER_OF_MAGNITUDE = "near_order_of_magnitude"

FLOAT_FORMAT = "{:.4f}"


class Grouping(str, enum.Enum):
    APPLICATION_CATEGORY = "application_category"
    SYSTEM_BEHAVIOR = "system_behavior"
    SUITE = "suite"
    STACK = "stack"


@dataclass(frozen=True)
class WorkloadRecord:
    """One characterized workload: metric values plus grouping metadata."""

    workload_id: str
    metrics: dict[str, float]
    labels: BehaviorLabels | None = None
    suite: str | None = None
    stack: str | None = None


@dataclass(frozen=True)
class GroupRow:
    means: dict[str, float]
    count: int


@dataclass(frozen=True)
class GroupSummary:
    """Per-group unweighted metric means for one grouping dimension."""

    grouping: Grouping
    rows: dict[str, GroupRow]
    total_workloads: int
    omitted_groups: tuple[str, ...] = ()

    def to_dict(self) -> dict[str, Any]:
        return {
            "grouping": self.grouping.value,
            "rows": {
                name: {"means": dict(sorted(row.means.items())), "count": row.count}
                for name, row in sorted(self.rows.items())
            },
            "total_workloads": self.total_workloads,
            "omitted_groups": list(self.omitted_groups),
        }


def _group_key(record: WorkloadRecord, grouping: Grouping) -> str:
    if grouping is Grouping.APPLICATION_CATEGORY:
        if record.labels is None:
            raise DataError(f"workload '{record.workload_id}' is not labeled")
        return record.labels.category.value
    if grouping is Grouping.SYSTEM_BEHAVIOR:
        if record.labels is None:
            raise DataError(f"workload '{record.workload_id}' is not labeled")
        return record.labels.system.value
    if grouping is Grouping.SUITE:
        if record.suite is None:
            raise DataError(f"workload '{record.workload_id}' has no suite")
        return record.suite
    if record.stack is None:
        raise DataError(f"workload '{record.workload_id}' has no stack")
    return record.stack


def group_summary(
    records: Sequence[WorkloadRecord], grouping: Grouping, metrics: Sequence[str]
) -> GroupSummary:
    """Unweighted arithmetic mean of each metric within each group."""
    if not records:
        raise DataError("no workloads to summarize")
    buckets: dict[str, list[WorkloadRecord]] = {}
    for record in records:
        buckets.setdefault(_group_key(record, grouping), []).append(record)

    rows: dict[str, GroupRow] = {}
    for name, members in buckets.items():
        means: dict[str, float] = {}
        for metric in metrics:
            values = []
            for member in members:
                if metric not in member.metrics:
                    raise DataError(
                        f"workload '{member.workload_id}' has no metric '{metric}'"
                    )
                values.append(member.metrics[metric])
            mean = math.fsum(values) / len(values)  # exactly permutation-invariant
            if not math.isfinite(mean):
                raise DataError(f"group '{name}': mean of '{metric}' is not finite")
            means[metric] = mean
        rows[name] = GroupRow(means=means, count=len(members))

    omitted: tuple[str, ...] = ()
    if grouping is Grouping.APPLICATION_CATEGORY:
        omitted = tuple(sorted({c.value for c in Category} - set(rows)))
    elif grouping is Grouping.SYSTEM_BEHAVIOR:
        omitted = tuple(sorted({b.value for b in SystemBehavior} - set(rows)))
    if omitted:
        log.info("grouping %s: no members for %s", grouping.value, ", ".join(omitted))
    return GroupSummary(
        grouping=grouping, rows=rows, total_workloads=len(records), omitted_groups=omitted
    )


# --- data-movement share -----------------------------------------------------


@dataclass(frozen=True)
class InstructionMix:
    """Fractions of retired instructions by category; sums to at most 1."""

    branch: float
    integer: float
    fp: float
    load: float
    store: float
    other: float = 0.0

    def __post_init__(self) -> None:
        parts = (self.branch, self.integer, self.fp, self.load, self.store, self.other)
        if any(p < 0 for p in parts):
            raise DataError("instruction-mix fractions must be non-negative")
        if sum(parts) > 1.0 + 1e-9:
            raise DataError(f"instruction-mix fractions sum to {sum(parts)} > 1")


@dataclass(frozen=True)
class MovementShare:
    without_branch: float
    with_branch: float


def data_movement_share(mix: InstructionMix, int_breakdown) -> MovementShare:
    """Share of instructions that move data or compute where data lives.

    Loads and stores move data outright; the integer instructions doing
    address arithmetic (for integer or floating-point data) serve data
    movement too; branches join in the wider reading.
    """
    address_share = int_breakdown.int_addr + int_breakdown.fp_addr
    without = mix.load + mix.store + mix.integer * address_share
    return MovementShare(without_branch=without, with_branch=without + mix.branch)


# --- stack impact -------------------------------------------------------------


@dataclass(frozen=True)
class StackMetricRecord:
    """One (algorithm, stack) implementation with its metric values."""

    algorithm: str
    stack: str
    metrics: dict[str, float]


@dataclass(frozen=True)
class StackImpactRow:
    algorithm: str
    metric: str
    values: dict[str, float]
    max_min_ratio: float
    flag: str | None

    def to_dict(self) -> dict[str, Any]:
        return {
            "algorithm": self.algorithm,
            "metric": self.metric,
            "values": dict(sorted(self.values.items())),
            "max_min_ratio": self.max_min_ratio,
            "flag": self.flag,
        }


@dataclass(frozen=True)
class StackImpactTable:
    rows: tuple[StackImpactRow, ...]

    def to_dict(self) -> dict[str, Any]:
        return {"rows": [r.to_dict() for r in self.rows]}


def _gap_flag(ratio: float) -> str | None:
    if ratio <= 0 or not math.isfinite(ratio):
        return ORDER_OF_MAGNITUDE if ratio == math.inf else None
    decades = math.log10(ratio)
    if decades >= 1.0:
        return ORDER_OF_MAGNITUDE
    if decades >= GAP_FLAG_DECADES:
        return NEAR_ORDER_OF_MAGNITUDE
    return None


def stack_impact_table(records: Sequence[StackMetricRecord]) -> StackImpactTable:
    """Compare each algorithm's metrics across software stacks.

    Algorithms implemented on fewer than two stacks are omitted. Each row
    reports the per-stack values, the max/min ratio, and a flag when the
    gap reaches (or nearly reaches) an order of magnitude.
    """
    by_algorithm: dict[str, list[StackMetricRecord]] = {}
    for record in records:
        by_algorithm.setdefault(record.algorithm, []).append(record)

    rows: list[StackImpactRow] = []
    for algorithm in sorted(by_algorithm):
        implementations = by_algorithm[algorithm]
        stacks = {r.stack for r in implementations}
        if len(stacks) < 2:
            log.info("algorithm '%s' has a single stack; omitted", algorithm)
            continue
        metric_names = sorted({m for r in implementations for m in r.metrics})
        for metric in metric_names:
            values = {
                r.stack: r.metrics[metric] for r in implementations if metric in r.metrics
            }
            if len(values) < 2:
                continue
            low, high = min(values.values()), max(values.values())
            if low < 0:
                raise DataError(
                    f"algorithm '{algorithm}', metric '{metric}': negative value"
                )
            ratio = high / low if low > 0 else (math.inf if high > 0 else 1.0)
            rows.append(
                StackImpactRow(
                    algorithm=algorithm,
                    metric=metric,
                    values=values,
                    max_min_ratio=ratio,
                    flag=_gap_flag(ratio),
                )
            )
    return StackImpactTable(rows=tuple(rows))


# --- emission -------------------------------------------------------------------


@dataclass(frozen=True)
class ReportBundle:
    """Everything one report run produces, ready for `emit`."""

    summaries: tuple[GroupSummary, ...] = ()
    stack_impact: StackImpactTable | None = None
    curves: tuple[tuple[str, MissRatioCurve], ...] = ()
    notes: tuple[str, ...] = ()


def _fmt(value: float) -> str:
    return FLOAT_FORMAT.format(value)


def emit(bundle: ReportBundle, out_dir: str | Path) -> list[Path]:
    """Write the bundle as CSV tables, curve files, and a JSON index.

    Output is byte-stable for identical inputs: keys are sorted and floats
    are fixed at four decimals.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []

    if not bundle.summaries and bundle.stack_impact is None and not bundle.curves:
        log.warning("nothing to report; writing an empty bundle")

    for summary in bundle.summaries:
        path = out_dir / f"summary_{summary.grouping.value}.csv"
        metrics = sorted({m for row in summary.rows.values() for m in row.means})
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(",".join(["group", "count"] + metrics) + "\n")
            for name in sorted(summary.rows):
                row = summary.rows[name]
                cells = [name, str(row.count)] + [_fmt(row.means[m]) for m in metrics]
                fh.write(",".join(cells) + "\n")
        written.append(path)

    if bundle.stack_impact is not None:
        path = out_dir / "stack_impact.csv"
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write("algorithm,metric,stack,value,max_min_ratio,flag\n")
            for row in bundle.stack_impact.rows:
                ratio = "inf" if math.isinf(row.max_min_ratio) else _fmt(row.max_min_ratio)
                for stack in sorted(row.values):
                    fh.write(
                        f"{row.algorithm},{row.metric},{stack},"
                        f"{_fmt(row.values[stack])},{ratio},{row.flag or ''}\n"
                    )
        written.append(path)

    if bundle.curves:
        curves_dir = out_dir / "curves"
        curves_dir.mkdir(exist_ok=True)
        for workload, curve in bundle.curves:
            path = curves_dir / f"{workload}_{curve.kind.value}.csv"
            with open(path, "w", encoding="utf-8", newline="") as fh:
                fh.write("capacity_bytes,miss_ratio\n")
                for point in curve.points:
                    fh.write(f"{point.capacity_bytes},{_fmt(point.miss_ratio)}\n")
            written.append(path)

    bundle_dict: dict[str, Any] = {
        "summaries": [s.to_dict() for s in bundle.summaries],
        "stack_impact": bundle.stack_impact.to_dict() if bundle.stack_impact else None,
        "curves": {
            f"{workload}_{curve.kind.value}": curve.to_dict()
            for workload, curve in bundle.curves
        },
        "notes": list(bundle.notes),
    }
    bundle_path = out_dir / "bundle.json"
    bundle_path.write_text(
        json.dumps(_round_floats(bundle_dict), indent=2, sort_keys=True) + "\n",
        encoding="utf-8",
    )
    written.append(bundle_path)
    return written


def _round_floats(obj: Any) -> Any:
    if isinstance(obj, float):
        return round(obj, 4) if math.isfinite(obj) else repr(obj)
    if isinstance(obj, dict):
        return {k: _round_floats(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_round_floats(v) for v in obj]
    return obj
