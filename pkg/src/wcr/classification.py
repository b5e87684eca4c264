"""Rule-based workload classification.

System behavior is decided by three ordered rules over CPU utilization,
weighted disk I/O time ratio, and I/O wait; data-processing behavior bands
the output/input and intermediate/input byte ratios. All comparisons are
strict, so boundary values fall through to the weaker class.
"""

from __future__ import annotations

import csv
import io
import logging
from typing import TextIO

from .errors import DataError, ParseError
from .model import (
    BehaviorLabels,
    Category,
    DataSizeClass,
    DataVolumes,
    SystemBehavior,
    SystemBehaviorMetrics,
)

log = logging.getLogger("wcr.classification")

CPU_INTENSIVE_UTIL = 0.85
IO_INTENSIVE_WEIGHTED_IO = 10.0
IO_INTENSIVE_IO_WAIT = 0.20
IO_INTENSIVE_CPU_CEILING = 0.60

MUCH_LESS_BOUND = 0.01
EQUAL_LOWER = 0.9
EQUAL_UPPER = 1.1

BEHAVIOR_CSV_HEADER = (
    "workload", "cpu_util", "io_wait", "weighted_io_ratio",
    "input_bytes", "output_bytes", "intermediate_bytes", "category",
)


def classify_system_behavior(m: SystemBehaviorMetrics) -> SystemBehavior:
    """Apply the ordered system-behavior rules.

    1. cpu_util > 0.85               -> CPU-intensive
    2. (weighted_io_ratio > 10 or io_wait > 0.20) and cpu_util < 0.60
                                     -> I/O-intensive
    3. otherwise                     -> hybrid
    """
    if m.cpu_util > CPU_INTENSIVE_UTIL:
        return SystemBehavior.CPU_INTENSIVE
    heavy_io = m.weighted_io_ratio > IO_INTENSIVE_WEIGHTED_IO or m.io_wait > IO_INTENSIVE_IO_WAIT
    if heavy_io and m.cpu_util < IO_INTENSIVE_CPU_CEILING:
        return SystemBehavior.IO_INTENSIVE
    return SystemBehavior.HYBRID


def classify_ratio(ratio: float) -> DataSizeClass:
    """Band a non-negative size ratio: <0.01, [0.01, 0.9), [0.9, 1.1), >=1.1."""
    if ratio < 0:
        raise DataError(f"size ratio {ratio} is negative")
    if ratio < MUCH_LESS_BOUND:
        return DataSizeClass.MUCH_LESS
    if ratio < EQUAL_LOWER:
        return DataSizeClass.LESS
    if ratio < EQUAL_UPPER:
        return DataSizeClass.EQUAL
    return DataSizeClass.GREATER


def classify_data_behavior(v: DataVolumes) -> tuple[DataSizeClass, DataSizeClass]:
    """Classify output and intermediate volumes relative to the input.

    A workload with zero intermediate bytes gets the distinguished
    no-intermediate label rather than the much-less band.
    """
    if v.input_bytes == 0:
        raise DataError("input_bytes must be > 0 to classify data behavior")
    out_class = classify_ratio(v.output_bytes / v.input_bytes)
    if v.intermediate_bytes == 0:
        intermediate_class = DataSizeClass.NONE
    else:
        intermediate_class = classify_ratio(v.intermediate_bytes / v.input_bytes)
    return out_class, intermediate_class


def label_workload(
    m: SystemBehaviorMetrics, v: DataVolumes, category: Category
) -> BehaviorLabels:
    """Compose the two classifiers with the declared application category."""
    out_class, intermediate_class = classify_data_behavior(v)
    return BehaviorLabels(
        system=classify_system_behavior(m),
        data_out=out_class,
        data_intermediate=intermediate_class,
        category=category,
    )


def parse_category(token: str) -> Category:
    normalized = token.strip().lower().replace("-", "").replace("_", "").replace(" ", "")
    for category in Category:
        if category.value.replace("_", "") == normalized:
            return category
    raise DataError(f"unknown category {token!r}")


def label_csv(stream: TextIO | str, out: TextIO) -> int:
    """Label a behavior CSV, appending system/data columns to each row.

    Extra input columns are passed through untouched. Returns the number of
    labeled rows.
    """
    if isinstance(stream, str):
        stream = io.StringIO(stream)
    reader = csv.reader(stream)
    try:
        header = next(reader)
    except StopIteration:
        raise ParseError("missing header row")
    header = [h.strip() for h in header]
    missing = [col for col in BEHAVIOR_CSV_HEADER if col not in header]
    if missing:
        raise ParseError(f"missing columns: {', '.join(missing)}", line=1)
    index = {col: header.index(col) for col in header}

    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(header + ["system", "data_out", "data_intermediate"])
    rows = 0
    for lineno, row in enumerate(reader, start=2):
        if not row or (len(row) == 1 and not row[0].strip()):
            continue
        if len(row) != len(header):
            raise ParseError(f"expected {len(header)} fields, got {len(row)}", line=lineno)
        try:
            metrics = SystemBehaviorMetrics(
                cpu_util=float(row[index["cpu_util"]]),
                io_wait=float(row[index["io_wait"]]),
                weighted_io_ratio=float(row[index["weighted_io_ratio"]]),
            )
            volumes = DataVolumes(
                input_bytes=int(row[index["input_bytes"]]),
                output_bytes=int(row[index["output_bytes"]]),
                intermediate_bytes=int(row[index["intermediate_bytes"]]),
            )
            category = parse_category(row[index["category"]])
            labels = label_workload(metrics, volumes, category)
        except (DataError, ValueError) as exc:
            raise ParseError(str(exc), line=lineno)
        writer.writerow(
            row + [labels.system.value, labels.data_out.value, labels.data_intermediate.value]
        )
        rows += 1
    return rows
