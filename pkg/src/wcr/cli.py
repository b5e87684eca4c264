"""Command-line front end.

Subcommands cover the whole pipeline: `ingest` turns counter and telemetry
CSVs into profile/vector JSON, `reduce` clusters workloads and picks
representatives, `classify` labels behavior CSVs, `simulate` sweeps a
cache over a trace, `footprint` reads the knee off a curve, and `report`
aggregates everything into tables. Every run writes a manifest recording
the effective configuration, the seed, and digests of all inputs and
outputs, so identical inputs reproduce identical output trees.

Exit codes: 1 usage error, 2 data validation error, 3 I/O error.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import os
import sys
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Any, Mapping, Sequence

from . import __version__
from .errors import DataError
from .model import (
    BehaviorLabels,
    Category,
    DataSizeClass,
    MetricSchema,
    MetricVector,
    RawProfile,
    SystemBehavior,
    default_schema,
)
from . import cachesim, classification, ingest, reduction, report

log = logging.getLogger("wcr.cli")

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_IO = 3


@dataclass
class RunConfig:
    """Defaults shared by all subcommands; a JSON config file may override
    them and command-line flags override the file."""

    schema_path: str | None = None
    warmup_s: float = 30.0
    variance_target: float = 0.85
    k: int | str = "auto"
    k_min: int = 1
    k_max: int | None = None
    seed: int = 42
    restarts: int = 8
    sizes: tuple[int, ...] = cachesim.DEFAULT_SIZE_GRID
    knee_ratio: float = cachesim.DEFAULT_KNEE_RATIO
    line_bytes: int = 64
    associativity: int | None = 8

    @classmethod
    def load(cls, path: str | Path) -> "RunConfig":
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
        known = {f.name for f in fields(cls)}
        unknown = set(raw) - known
        if unknown:
            raise DataError(f"unknown config keys: {', '.join(sorted(unknown))}")
        config = cls(**{k: v for k, v in raw.items() if k in known})
        if isinstance(config.sizes, list):
            config.sizes = tuple(int(s) for s in config.sizes)
        if config.schema_path is not None and not Path(config.schema_path).exists():
            raise DataError(f"schema file {config.schema_path!r} does not exist")
        return config

    def to_dict(self) -> dict[str, Any]:
        return {
            "schema_path": self.schema_path,
            "warmup_s": self.warmup_s,
            "variance_target": self.variance_target,
            "k": self.k,
            "k_min": self.k_min,
            "k_max": self.k_max,
            "seed": self.seed,
            "restarts": self.restarts,
            "sizes": list(self.sizes),
            "knee_ratio": self.knee_ratio,
            "line_bytes": self.line_bytes,
            "associativity": self.associativity,
        }


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on usage errors; the CLI contract wants 1
    def error(self, message: str):
        self.print_usage(sys.stderr)
        raise _UsageError(message)


class _UsageError(Exception):
    pass


def _sha256(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            digest.update(chunk)
    return "sha256:" + digest.hexdigest()


def _write_manifest(
    out_dir: Path,
    command: str,
    config: RunConfig,
    inputs: Sequence[Path],
    outputs: Sequence[Path],
) -> Path:
    # inputs are recorded by name and digest (not absolute path) so that
    # identical runs into different directories stay byte-identical
    manifest = {
        "tool": "wcr",
        "version": __version__,
        "command": command,
        "config": config.to_dict(),
        "seed": config.seed,
        "inputs": sorted(
            ({"file": p.name, "sha256": _sha256(p)} for p in inputs),
            key=lambda entry: (entry["file"], entry["sha256"]),
        ),
        "outputs": {
            str(p.relative_to(out_dir)): _sha256(p) for p in sorted(outputs)
        },
    }
    path = out_dir / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def _load_schema(config: RunConfig) -> MetricSchema:
    if config.schema_path is None:
        return default_schema()
    return ingest.load_schema(config.schema_path)


def _write_json(path: Path, payload: Any) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")


# --- subcommands -----------------------------------------------------------


def _cmd_ingest(args: argparse.Namespace, config: RunConfig) -> int:
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    schema = _load_schema(config)
    inputs = [Path(args.counters)]

    with open(args.counters, "r", encoding="utf-8", newline="") as fh:
        profiles = ingest.parse_counter_csv(fh)
    vectors = [ingest.derive_microarch_metrics(p, schema) for p in profiles]

    outputs = []
    profiles_path = out_dir / "profiles.json"
    _write_json(profiles_path, {"profiles": [p.to_dict() for p in profiles]})
    outputs.append(profiles_path)

    vectors_path = out_dir / "vectors.json"
    _write_json(
        vectors_path,
        {"schema": schema.to_dict(), "vectors": [v.to_dict() for v in vectors]},
    )
    outputs.append(vectors_path)

    if args.telemetry:
        inputs.append(Path(args.telemetry))
        with open(args.telemetry, "r", encoding="utf-8", newline="") as fh:
            telemetry = ingest.parse_telemetry_csv(fh)
        wall_times = {p.workload_id: p.wall_time_s for p in profiles}
        system_metrics = {}
        for workload in sorted(telemetry):
            steady = ingest.trim_ramp_up(telemetry[workload], config.warmup_s)
            runtime = wall_times.get(workload, telemetry[workload].samples[-1].t_s)
            system_metrics[workload] = ingest.aggregate_telemetry(steady, runtime).to_dict()
        metrics_path = out_dir / "system_metrics.json"
        _write_json(metrics_path, {"system_metrics": system_metrics})
        outputs.append(metrics_path)

    _write_manifest(out_dir, "ingest", config, inputs, outputs)
    print(f"ingested {len(profiles)} workloads -> {out_dir}")
    return EXIT_OK


def _load_vectors(path: Path, config: RunConfig) -> tuple[MetricSchema, list[MetricVector]]:
    payload = json.loads(path.read_text(encoding="utf-8"))
    if "vectors" in payload:
        schema = MetricSchema.from_dict(payload["schema"])
        ingest.check_schema(schema)
        vectors = [MetricVector.from_dict(v, schema) for v in payload["vectors"]]
        return schema, vectors
    if "profiles" in payload:
        schema = _load_schema(config)
        profiles = [RawProfile.from_dict(p) for p in payload["profiles"]]
        return schema, [ingest.derive_microarch_metrics(p, schema) for p in profiles]
    raise DataError(f"{path} holds neither 'vectors' nor 'profiles'")


def _cmd_reduce(args: argparse.Namespace, config: RunConfig) -> int:
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    input_path = Path(args.input)
    schema, vectors = _load_vectors(input_path, config)

    k = config.k
    reduction_config = reduction.ReductionConfig(
        variance_target=config.variance_target,
        k=None if k == "auto" else int(k),
        k_min=config.k_min,
        k_max=config.k_max,
        seed=config.seed,
        restarts=config.restarts,
    )
    result = reduction.reduce_vectors(vectors, schema, reduction_config)

    reduction_path = out_dir / "reduction.json"
    _write_json(reduction_path, result.to_dict())
    normalized_path = out_dir / "normalized.csv"
    result.normalized.write_csv(normalized_path)

    _write_manifest(out_dir, "reduce", config, [input_path], [reduction_path, normalized_path])
    print(
        f"reduced {len(vectors)} workloads to {result.clustering.k} representatives "
        f"-> {out_dir}"
    )
    for workload in result.representatives:
        print(f"  {workload}")
    return EXIT_OK


def _cmd_classify(args: argparse.Namespace, config: RunConfig) -> int:
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    input_path = Path(args.input)
    labels_path = out_dir / "labels.csv"
    with open(input_path, "r", encoding="utf-8", newline="") as src, \
            open(labels_path, "w", encoding="utf-8", newline="") as dst:
        rows = classification.label_csv(src, dst)
    _write_manifest(out_dir, "classify", config, [input_path], [labels_path])
    print(f"labeled {rows} workloads -> {labels_path}")
    return EXIT_OK


_KIND_CHOICES = {
    "all": cachesim.ALL_KINDS,
    "ifetch": frozenset({cachesim.AccessKind.IFETCH}),
    "load": frozenset({cachesim.AccessKind.LOAD}),
    "store": frozenset({cachesim.AccessKind.STORE}),
    "data": frozenset({cachesim.AccessKind.LOAD, cachesim.AccessKind.STORE}),
}


def _parse_kinds(token: str) -> frozenset:
    parts = [p.strip().lower() for p in token.split(",") if p.strip()]
    kinds: frozenset = frozenset()
    for part in parts:
        if part not in _KIND_CHOICES:
            raise DataError(f"unknown access kind {part!r} (use ifetch/load/store/data/all)")
        kinds |= _KIND_CHOICES[part]
    return kinds or cachesim.ALL_KINDS


def _load_trace(args: argparse.Namespace) -> tuple[cachesim.AccessTrace, list[Path]]:
    trace_path = Path(args.trace)
    inputs = [trace_path]
    if trace_path.suffix == ".bin":
        sidecar = Path(args.segments) if args.segments else None
        if sidecar is not None:
            inputs.append(sidecar)
        trace = cachesim.read_binary_trace(trace_path, sidecar)
    else:
        trace = cachesim.read_text_trace(trace_path)
    if args.skip:
        trace = cachesim.skip_accesses(trace, args.skip)
    return trace, inputs


def _cmd_simulate(args: argparse.Namespace, config: RunConfig) -> int:
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    trace, inputs = _load_trace(args)
    kinds = _parse_kinds(args.kinds)
    template = cachesim.CacheConfig(
        capacity_bytes=config.sizes[0],
        line_bytes=config.line_bytes,
        associativity=config.associativity,
    )
    curve = cachesim.sweep_capacities(trace, config.sizes, template, kinds)

    name = f"{args.workload}_{curve.kind.value}.csv" if args.workload else "curve.csv"
    curve_path = out_dir / name
    cachesim.write_curve_csv(curve, curve_path)
    _write_manifest(out_dir, "simulate", config, inputs, [curve_path])
    print(f"swept {len(curve.points)} capacities -> {curve_path}")
    return EXIT_OK


def _cmd_footprint(args: argparse.Namespace, config: RunConfig) -> int:
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    curve_path = Path(args.curve)
    curve = cachesim.read_curve_csv(curve_path)
    capacity = cachesim.estimate_footprint(curve, config.knee_ratio)

    footprint_path = out_dir / "footprint.json"
    _write_json(
        footprint_path,
        {"capacity_bytes": capacity, "knee_ratio": config.knee_ratio, "curve": curve_path.name},
    )
    _write_manifest(out_dir, "footprint", config, [curve_path], [footprint_path])
    print("not_reached" if capacity is None else str(capacity))
    return EXIT_OK


def _read_labels_csv(path: Path) -> dict[str, dict[str, str]]:
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        required = {"workload", "category", "system", "data_out", "data_intermediate"}
        missing = required - set(reader.fieldnames or ())
        if missing:
            raise DataError(f"{path}: missing columns {', '.join(sorted(missing))}")
        return {row["workload"]: row for row in reader}


def _cmd_report(args: argparse.Namespace, config: RunConfig) -> int:
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    inputs: list[Path] = []
    notes: list[str] = []

    summaries: list[report.GroupSummary] = []
    if args.vectors and args.labels:
        vectors_path, labels_path = Path(args.vectors), Path(args.labels)
        inputs += [vectors_path, labels_path]
        schema, vectors = _load_vectors(vectors_path, config)
        label_rows = _read_labels_csv(labels_path)
        records = []
        for vector in vectors:
            row = label_rows.get(vector.workload_id)
            if row is None:
                raise DataError(f"workload '{vector.workload_id}' missing from {labels_path}")
            labels = BehaviorLabels(
                system=SystemBehavior(row["system"]),
                data_out=DataSizeClass(row["data_out"]),
                data_intermediate=DataSizeClass(row["data_intermediate"]),
                category=classification.parse_category(row["category"]),
            )
            records.append(
                report.WorkloadRecord(
                    workload_id=vector.workload_id,
                    metrics=dict(zip(schema.names, vector.values)),
                    labels=labels,
                    suite=row.get("suite") or None,
                    stack=row.get("stack") or None,
                )
            )
        metric_names = list(args.metrics.split(",")) if args.metrics else list(schema.names)
        groupings = [report.Grouping.APPLICATION_CATEGORY, report.Grouping.SYSTEM_BEHAVIOR]
        if all(r.suite is not None for r in records):
            groupings.append(report.Grouping.SUITE)
        if all(r.stack is not None for r in records):
            groupings.append(report.Grouping.STACK)
        for grouping in groupings:
            summaries.append(report.group_summary(records, grouping, metric_names))

    stack_table = None
    if args.stack_table:
        stack_path = Path(args.stack_table)
        inputs.append(stack_path)
        stack_table = report.stack_impact_table(_read_stack_table(stack_path))

    curves: list[tuple[str, cachesim.MissRatioCurve]] = []
    if args.curves:
        curves_dir = Path(args.curves)
        for path in sorted(curves_dir.glob("*.csv")):
            inputs.append(path)
            workload, _, kind_token = path.stem.rpartition("_")
            try:
                kind = cachesim.CurveKind(kind_token)
            except ValueError:
                workload, kind = path.stem, cachesim.CurveKind.UNIFIED
            if not workload:
                workload, kind = path.stem, cachesim.CurveKind.UNIFIED
            curves.append((workload, cachesim.read_curve_csv(path, kind)))

    if not summaries and stack_table is None and not curves:
        notes.append("no inputs supplied; empty report")

    bundle = report.ReportBundle(
        summaries=tuple(summaries),
        stack_impact=stack_table,
        curves=tuple(curves),
        notes=tuple(notes),
    )
    outputs = report.emit(bundle, out_dir)
    _write_manifest(out_dir, "report", config, inputs, outputs)
    print(f"wrote {len(outputs)} report files -> {out_dir}")
    return EXIT_OK


def _read_stack_table(path: Path) -> list[report.StackMetricRecord]:
    # long format: algorithm,stack,metric,value
    grouped: dict[tuple[str, str], dict[str, float]] = {}
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        required = {"algorithm", "stack", "metric", "value"}
        missing = required - set(reader.fieldnames or ())
        if missing:
            raise DataError(f"{path}: missing columns {', '.join(sorted(missing))}")
        for row in reader:
            key = (row["algorithm"], row["stack"])
            grouped.setdefault(key, {})[row["metric"]] = float(row["value"])
    return [
        report.StackMetricRecord(algorithm=a, stack=s, metrics=m)
        for (a, s), m in sorted(grouped.items())
    ]


# --- argument parsing ---------------------------------------------------------


def _add_common(p: argparse.ArgumentParser, top_level: bool) -> None:
    # registered on the top-level parser and again on every subparser with
    # SUPPRESS defaults, so the flags work on either side of the subcommand
    default = None if top_level else argparse.SUPPRESS
    p.add_argument("--config", default=default, help="JSON run-configuration file")
    p.add_argument("--seed", type=int, default=default, help="random seed (default 42)")
    p.add_argument(
        "--schema", default=default,
        help="metric schema JSON (default: built-in 45-metric schema)",
    )


def _build_parser() -> _Parser:
    parser = _Parser(prog="wcr", description="Workload characterization and reduction toolkit")
    _add_common(parser, top_level=True)
    sub = parser.add_subparsers(dest="command", metavar="command", parser_class=_Parser)

    p = sub.add_parser("ingest", help="counter/telemetry CSVs -> profile and vector JSON")
    _add_common(p, top_level=False)
    p.add_argument("counters", help="counter CSV (workload,node,event,count,wall_time_s)")
    p.add_argument("--telemetry", help="telemetry CSV")
    p.add_argument("--warmup", type=float, help="warm-up seconds to trim (default 30)")
    p.add_argument("--out", required=True)

    p = sub.add_parser("reduce", help="profiles/vectors JSON -> clustering and representatives")
    _add_common(p, top_level=False)
    p.add_argument("input", help="profiles.json or vectors.json")
    p.add_argument("--k", help="fixed cluster count, or 'auto'")
    p.add_argument("--k-range", help="k_min,k_max for auto selection")
    p.add_argument("--variance-target", type=float, help="PCA variance retention (default 0.85)")
    p.add_argument("--out", required=True)

    p = sub.add_parser("classify", help="behavior CSV -> labeled CSV")
    _add_common(p, top_level=False)
    p.add_argument("input", help="behavior CSV")
    p.add_argument("--out", required=True)

    p = sub.add_parser("simulate", help="access trace -> miss-ratio curve")
    _add_common(p, top_level=False)
    p.add_argument("trace", help="trace file (.bin packed records, otherwise text)")
    p.add_argument("--segments", help="JSON sidecar with segment boundaries and weights")
    p.add_argument("--kinds", default="all", help="access kinds: ifetch, load, store, data, all")
    p.add_argument("--sizes", help="comma-separated capacities in bytes (suffix K/M allowed)")
    p.add_argument("--line", type=int, help="line size in bytes (default 64)")
    p.add_argument("--assoc", help="associativity, or 'full'")
    p.add_argument("--skip", type=int, default=0, help="skip the first N accesses")
    p.add_argument("--workload", help="workload name used in the curve filename")
    p.add_argument("--out", required=True)

    p = sub.add_parser("footprint", help="miss-ratio curve CSV -> footprint estimate")
    _add_common(p, top_level=False)
    p.add_argument("curve", help="curve CSV from simulate")
    p.add_argument("--knee", type=float, help="knee miss-ratio threshold (default 0.01)")
    p.add_argument("--out", required=True)

    p = sub.add_parser("report", help="vectors + labels (+ curves, stack table) -> report files")
    _add_common(p, top_level=False)
    p.add_argument("--vectors", help="vectors.json or profiles.json")
    p.add_argument("--labels", help="labeled CSV from classify (may add suite/stack columns)")
    p.add_argument("--stack-table", help="CSV algorithm,stack,metric,value")
    p.add_argument("--curves", help="directory of curve CSVs")
    p.add_argument("--metrics", help="comma-separated metric names to summarize (default: all)")
    p.add_argument("--out", required=True)
    return parser


def _parse_size(token: str) -> int:
    token = token.strip().upper()
    factor = 1
    if token.endswith("K"):
        factor, token = 1024, token[:-1]
    elif token.endswith("M"):
        factor, token = 1024 * 1024, token[:-1]
    try:
        return int(token) * factor
    except ValueError:
        raise DataError(f"bad size {token!r}")


def _apply_overrides(args: argparse.Namespace, config: RunConfig) -> RunConfig:
    if args.seed is not None:
        config.seed = args.seed
    if args.schema is not None:
        if not Path(args.schema).exists():
            raise DataError(f"schema file {args.schema!r} does not exist")
        config.schema_path = args.schema
    if getattr(args, "warmup", None) is not None:
        config.warmup_s = args.warmup
    if getattr(args, "variance_target", None) is not None:
        config.variance_target = args.variance_target
    if getattr(args, "k", None) is not None:
        config.k = args.k if args.k == "auto" else int(args.k)
    if getattr(args, "k_range", None) is not None:
        try:
            k_min, k_max = (int(v) for v in args.k_range.split(","))
        except ValueError:
            raise DataError(f"bad --k-range {args.k_range!r}, expected 'min,max'")
        config.k, config.k_min, config.k_max = "auto", k_min, k_max
    if getattr(args, "sizes", None) is not None:
        config.sizes = tuple(_parse_size(t) for t in args.sizes.split(","))
    if getattr(args, "line", None) is not None:
        config.line_bytes = args.line
    if getattr(args, "assoc", None) is not None:
        config.associativity = None if args.assoc == "full" else int(args.assoc)
    if getattr(args, "knee", None) is not None:
        config.knee_ratio = args.knee
    return config


_HANDLERS = {
    "ingest": _cmd_ingest,
    "reduce": _cmd_reduce,
    "classify": _cmd_classify,
    "simulate": _cmd_simulate,
    "footprint": _cmd_footprint,
    "report": _cmd_report,
}


def main(argv: Sequence[str] | None = None) -> int:
    logging.basicConfig(
        level=os.environ.get("WCR_LOG", "WARNING").upper(),
        format="%(levelname)s %(name)s: %(message)s",
    )
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            parser.print_usage(sys.stderr)
            print("wcr: a subcommand is required", file=sys.stderr)
            return EXIT_USAGE
        config = RunConfig.load(args.config) if args.config else RunConfig()
        config = _apply_overrides(args, config)
        return _HANDLERS[args.command](args, config)
    except _UsageError as exc:
        print(f"wcr: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as exc:
        print(f"wcr: {exc}", file=sys.stderr)
        return EXIT_DATA
    except OSError as exc:
        print(f"wcr: {exc.filename or ''}: {exc.strerror or exc}", file=sys.stderr)
        return EXIT_IO


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
