"""Canonical data model shared by every stage of the toolkit.

Metric schemas describe an ordered vector of derived micro-architectural
metrics; raw profiles carry the counter totals those metrics are derived
from; telemetry carries the OS-level time series used for system-behavior
classification. All types are immutable after construction and JSON
round-trippable.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

from .errors import DataError


class MetricGroup(str, enum.Enum):
    """The eight families a derived metric can belong to."""

    INSTRUCTION_MIX = "instruction_mix"
    CACHE = "cache"
    TLB = "tlb"
    BRANCH = "branch"
    PIPELINE = "pipeline"
    OFFCORE_SNOOP = "offcore_snoop"
    PARALLELISM = "parallelism"
    OPERATION_INTENSITY = "operation_intensity"


class MetricUnit(str, enum.Enum):
    RATIO = "ratio"
    PER_KILO_INSTR = "per_kilo_instr"
    PER_CYCLE = "per_cycle"
    FLOPS_PER_BYTE = "flops_per_byte"
    COUNT = "count"


class SystemBehavior(str, enum.Enum):
    CPU_INTENSIVE = "cpu_intensive"
    IO_INTENSIVE = "io_intensive"
    HYBRID = "hybrid"


class DataSizeClass(str, enum.Enum):
    """Band of an output/input or intermediate/input byte ratio.

    NONE is the distinguished label for workloads that produce no
    intermediate data at all; it never applies to the output ratio.
    """

    MUCH_LESS = "much_less"
    LESS = "less"
    EQUAL = "equal"
    GREATER = "greater"
    NONE = "none"


class Category(str, enum.Enum):
    DATA_ANALYSIS = "data_analysis"
    SERVICE = "service"
    INTERACTIVE_ANALYSIS = "interactive_analysis"


@dataclass(frozen=True)
class MetricDescriptor:
    """One entry of a metric schema: a named, unit-typed derivation rule."""

    name: str
    group: MetricGroup
    unit: MetricUnit
    formula_id: str

    def __post_init__(self) -> None:
        if not self.name:
            raise DataError("metric name must be non-empty")
        if not self.formula_id:
            raise DataError(f"metric '{self.name}': formula_id must be non-empty")

    def to_dict(self) -> dict[str, Any]:
        return {
            "name": self.name,
            "group": self.group.value,
            "unit": self.unit.value,
            "formula_id": self.formula_id,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "MetricDescriptor":
        return cls(
            name=str(d["name"]),
            group=MetricGroup(d["group"]),
            unit=MetricUnit(d["unit"]),
            formula_id=str(d["formula_id"]),
        )


@dataclass(frozen=True)
class MetricSchema:
    """Ordered list of metric descriptors; vector indices follow this order."""

    metrics: tuple[MetricDescriptor, ...]
    version: str

    def __post_init__(self) -> None:
        object.__setattr__(self, "metrics", tuple(self.metrics))
        names = [m.name for m in self.metrics]
        if len(set(names)) != len(names):
            dupes = sorted({n for n in names if names.count(n) > 1})
            raise DataError(f"duplicate metric names in schema: {dupes}")
        if not self.version:
            raise DataError("schema version must be non-empty")

    def __len__(self) -> int:
        return len(self.metrics)

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(m.name for m in self.metrics)

    def index_of(self, name: str) -> int:
        for i, m in enumerate(self.metrics):
            if m.name == name:
                return i
        raise KeyError(name)

    def to_dict(self) -> dict[str, Any]:
        return {"version": self.version, "metrics": [m.to_dict() for m in self.metrics]}

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "MetricSchema":
        return cls(
            metrics=tuple(MetricDescriptor.from_dict(m) for m in d["metrics"]),
            version=str(d["version"]),
        )

    @classmethod
    def load(cls, path: str | Path) -> "MetricSchema":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(
            json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )


@dataclass(frozen=True)
class RawProfile:
    """Per-workload counter totals from one measured run.

    Construction is deliberately lenient so that broken inputs can be
    represented and reported; use `validate_profile` to check invariants.
    """

    workload_id: str
    counters: dict[str, float]
    wall_time_s: float
    node_count: int = 1
    stack: str = ""

    def to_dict(self) -> dict[str, Any]:
        return {
            "workload_id": self.workload_id,
            "stack": self.stack,
            "counters": dict(sorted(self.counters.items())),
            "wall_time_s": self.wall_time_s,
            "node_count": self.node_count,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "RawProfile":
        return cls(
            workload_id=str(d["workload_id"]),
            counters={str(k): float(v) for k, v in d["counters"].items()},
            wall_time_s=float(d["wall_time_s"]),
            node_count=int(d.get("node_count", 1)),
            stack=str(d.get("stack", "")),
        )


@dataclass(frozen=True)
class MetricVector:
    """Derived metric values aligned to a schema, one row of the analysis matrix."""

    workload_id: str
    values: tuple[float, ...]
    schema_version: str

    def __post_init__(self) -> None:
        object.__setattr__(self, "values", tuple(float(v) for v in self.values))
        for v in self.values:
            if not math.isfinite(v):
                raise DataError(f"workload '{self.workload_id}': non-finite metric value {v!r}")

    @classmethod
    def from_values(
        cls, workload_id: str, values: Sequence[float], schema: MetricSchema
    ) -> "MetricVector":
        """Build a vector checked against `schema`: length, finiteness, ratio bounds."""
        values = tuple(float(v) for v in values)
        if len(values) != len(schema):
            raise DataError(
                f"workload '{workload_id}': {len(values)} values for a "
                f"{len(schema)}-metric schema"
            )
        for desc, v in zip(schema.metrics, values):
            if not math.isfinite(v):
                raise DataError(f"metric '{desc.name}': non-finite value {v!r}")
            if desc.unit is MetricUnit.RATIO and not 0.0 <= v <= 1.0:
                raise DataError(f"metric '{desc.name}': ratio value {v} outside [0, 1]")
        return cls(workload_id=workload_id, values=values, schema_version=schema.version)

    def to_dict(self) -> dict[str, Any]:
        return {
            "workload_id": self.workload_id,
            "values": list(self.values),
            "schema_version": self.schema_version,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any], schema: MetricSchema | None = None) -> "MetricVector":
        if schema is not None:
            if str(d["schema_version"]) != schema.version:
                raise DataError(
                    f"vector schema_version {d['schema_version']!r} does not match "
                    f"schema {schema.version!r}"
                )
            return cls.from_values(str(d["workload_id"]), d["values"], schema)
        return cls(
            workload_id=str(d["workload_id"]),
            values=tuple(float(v) for v in d["values"]),
            schema_version=str(d["schema_version"]),
        )


@dataclass(frozen=True)
class TelemetrySample:
    """One OS-level sample: utilization fractions and I/O throughput at time t_s."""

    t_s: float
    cpu_util: float
    io_wait: float
    weighted_io_time_ms: float
    disk_bw_Bps: float
    net_bw_Bps: float

    def __post_init__(self) -> None:
        if not 0.0 <= self.cpu_util <= 1.0:
            raise DataError(f"cpu_util {self.cpu_util} outside [0, 1]")
        if not 0.0 <= self.io_wait <= 1.0:
            raise DataError(f"io_wait {self.io_wait} outside [0, 1]")
        if self.weighted_io_time_ms < 0:
            raise DataError(f"weighted_io_time_ms {self.weighted_io_time_ms} is negative")

    def to_dict(self) -> dict[str, Any]:
        return {
            "t_s": self.t_s,
            "cpu_util": self.cpu_util,
            "io_wait": self.io_wait,
            "weighted_io_time_ms": self.weighted_io_time_ms,
            "disk_bw_Bps": self.disk_bw_Bps,
            "net_bw_Bps": self.net_bw_Bps,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "TelemetrySample":
        return cls(**{k: float(d[k]) for k in (
            "t_s", "cpu_util", "io_wait", "weighted_io_time_ms", "disk_bw_Bps", "net_bw_Bps")})


@dataclass(frozen=True)
class SystemTelemetry:
    """Time-ordered OS telemetry for one workload run."""

    workload_id: str
    samples: tuple[TelemetrySample, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "samples", tuple(self.samples))
        if not self.samples:
            raise DataError(f"workload '{self.workload_id}': telemetry has no samples")
        for prev, cur in zip(self.samples, self.samples[1:]):
            if cur.t_s <= prev.t_s:
                raise DataError(
                    f"workload '{self.workload_id}': sample times not strictly "
                    f"increasing ({prev.t_s} then {cur.t_s})"
                )

    def to_dict(self) -> dict[str, Any]:
        return {
            "workload_id": self.workload_id,
            "samples": [s.to_dict() for s in self.samples],
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "SystemTelemetry":
        return cls(
            workload_id=str(d["workload_id"]),
            samples=tuple(TelemetrySample.from_dict(s) for s in d["samples"]),
        )


@dataclass(frozen=True)
class SystemBehaviorMetrics:
    """Aggregated system-level behavior of one workload over its steady state."""

    cpu_util: float
    io_wait: float
    weighted_io_ratio: float
    disk_bw_Bps: float = 0.0
    net_bw_Bps: float = 0.0

    def __post_init__(self) -> None:
        if not 0.0 <= self.cpu_util <= 1.0:
            raise DataError(f"cpu_util {self.cpu_util} outside [0, 1]")
        if not 0.0 <= self.io_wait <= 1.0:
            raise DataError(f"io_wait {self.io_wait} outside [0, 1]")
        if self.weighted_io_ratio < 0:
            raise DataError(f"weighted_io_ratio {self.weighted_io_ratio} is negative")

    def to_dict(self) -> dict[str, Any]:
        return {
            "cpu_util": self.cpu_util,
            "io_wait": self.io_wait,
            "weighted_io_ratio": self.weighted_io_ratio,
            "disk_bw_Bps": self.disk_bw_Bps,
            "net_bw_Bps": self.net_bw_Bps,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "SystemBehaviorMetrics":
        return cls(**{k: float(v) for k, v in d.items()})


@dataclass(frozen=True)
class DataVolumes:
    """Bytes moved by one workload: consumed, produced, and materialized in between."""

    input_bytes: int
    output_bytes: int
    intermediate_bytes: int

    def __post_init__(self) -> None:
        for name in ("input_bytes", "output_bytes", "intermediate_bytes"):
            if getattr(self, name) < 0:
                raise DataError(f"{name} is negative")

    def to_dict(self) -> dict[str, Any]:
        return {
            "input_bytes": self.input_bytes,
            "output_bytes": self.output_bytes,
            "intermediate_bytes": self.intermediate_bytes,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "DataVolumes":
        return cls(**{k: int(v) for k, v in d.items()})


@dataclass(frozen=True)
class BehaviorLabels:
    """Classification outcome for one workload."""

    system: SystemBehavior
    data_out: DataSizeClass
    data_intermediate: DataSizeClass
    category: Category

    def __post_init__(self) -> None:
        if self.data_out is DataSizeClass.NONE:
            raise DataError("data_out cannot be the no-intermediate label")

    def to_dict(self) -> dict[str, Any]:
        return {
            "system": self.system.value,
            "data_out": self.data_out.value,
            "data_intermediate": self.data_intermediate.value,
            "category": self.category.value,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "BehaviorLabels":
        return cls(
            system=SystemBehavior(d["system"]),
            data_out=DataSizeClass(d["data_out"]),
            data_intermediate=DataSizeClass(d["data_intermediate"]),
            category=Category(d["category"]),
        )


# --- default schema -----------------------------------------------------

DEFAULT_SCHEMA_VERSION = "wcr-default-1"

_MIX = MetricGroup.INSTRUCTION_MIX
_CACHE = MetricGroup.CACHE
_TLB = MetricGroup.TLB
_BR = MetricGroup.BRANCH
_PIPE = MetricGroup.PIPELINE
_OFF = MetricGroup.OFFCORE_SNOOP
_PAR = MetricGroup.PARALLELISM
_OPI = MetricGroup.OPERATION_INTENSITY

_RATIO = MetricUnit.RATIO
_PKI = MetricUnit.PER_KILO_INSTR
_PC = MetricUnit.PER_CYCLE
_FPB = MetricUnit.FLOPS_PER_BYTE

# 45 metrics over eight groups. Each formula_id resolves to a derivation
# rule registered in `ingest`; names here and in custom schemas may differ
# from the rule id, but the default keeps them 1:1.
_DEFAULT_METRICS: tuple[tuple[str, MetricGroup, MetricUnit], ...] = (
    # instruction mix: fractions of retired instructions (6)
    ("branch_ratio", _MIX, _RATIO),
    ("integer_ratio", _MIX, _RATIO),
    ("fp_ratio", _MIX, _RATIO),
    ("load_ratio", _MIX, _RATIO),
    ("store_ratio", _MIX, _RATIO),
    ("other_ratio", _MIX, _RATIO),
    # cache behavior (8)
    ("l1i_mpki", _CACHE, _PKI),
    ("l1d_mpki", _CACHE, _PKI),
    ("l2_mpki", _CACHE, _PKI),
    ("l3_mpki", _CACHE, _PKI),
    ("l1i_miss_ratio", _CACHE, _RATIO),
    ("l1d_miss_ratio", _CACHE, _RATIO),
    ("l2_miss_ratio", _CACHE, _RATIO),
    ("l3_miss_ratio", _CACHE, _RATIO),
    # TLB behavior (6)
    ("itlb_mpki", _TLB, _PKI),
    ("dtlb_mpki", _TLB, _PKI),
    ("itlb_miss_ratio", _TLB, _RATIO),
    ("dtlb_miss_ratio", _TLB, _RATIO),
    ("itlb_walk_cycle_ratio", _TLB, _RATIO),
    ("dtlb_walk_cycle_ratio", _TLB, _RATIO),
    # branch execution (4)
    ("branch_misprediction_ratio", _BR, _RATIO),
    ("branch_misprediction_mpki", _BR, _PKI),
    ("branch_taken_ratio", _BR, _RATIO),
    ("indirect_branch_ratio", _BR, _RATIO),
    # pipeline behavior (8)
    ("frontend_stall_ratio", _PIPE, _RATIO),
    ("backend_stall_ratio", _PIPE, _RATIO),
    ("resource_stall_ratio", _PIPE, _RATIO),
    ("store_buffer_stall_ratio", _PIPE, _RATIO),
    ("divider_busy_ratio", _PIPE, _RATIO),
    ("machine_clears_pki", _PIPE, _PKI),
    ("uops_issued_per_cycle", _PIPE, _PC),
    ("retired_uop_fraction", _PIPE, _RATIO),
    # off-core requests and snoop responses (7)
    ("offcore_requests_pki", _OFF, _PKI),
    ("offcore_data_read_pki", _OFF, _PKI),
    ("offcore_rfo_pki", _OFF, _PKI),
    ("offcore_writeback_pki", _OFF, _PKI),
    ("snoop_hit_ratio", _OFF, _RATIO),
    ("snoop_hitm_ratio", _OFF, _RATIO),
    ("snoop_miss_ratio", _OFF, _RATIO),
    # realized parallelism (4)
    ("ipc", _PAR, _PC),
    ("uops_retired_per_cycle", _PAR, _PC),
    ("offcore_read_mlp", _PAR, _PC),
    ("l1d_miss_mlp", _PAR, _PC),
    # operation intensity (2)
    ("operation_intensity", _OPI, _FPB),
    ("flops_per_cycle", _OPI, _PC),
)


def default_schema() -> MetricSchema:
    """The toolkit's 45-metric default schema.

    Covers all eight metric groups with derivations over the canonical
    counter vocabulary (see `ingest.FORMULAS`). Custom schemas of any
    dimension may be supplied instead, as long as every descriptor
    references a registered derivation rule.
    """
    return MetricSchema(
        metrics=tuple(
            MetricDescriptor(name=n, group=g, unit=u, formula_id=n)
            for n, g, u in _DEFAULT_METRICS
        ),
        version=DEFAULT_SCHEMA_VERSION,
    )


def validate_profile(profile: RawProfile, schema: MetricSchema) -> list[str]:
    """Check a raw profile against its own invariants and a schema's needs.

    Returns a list of human-readable violations; an empty list means the
    profile can be derived under `schema`. Violations are data, not faults.
    """
    from .ingest import FORMULAS  # late import: formula registry lives with the derivations

    violations: list[str] = []
    if not profile.workload_id:
        violations.append("workload_id is empty")
    if profile.wall_time_s <= 0:
        violations.append(f"wall_time_s {profile.wall_time_s} is not positive")
    if profile.node_count < 1:
        violations.append(f"node_count {profile.node_count} is not positive")
    for name, value in sorted(profile.counters.items()):
        if value < 0:
            violations.append(f"counter '{name}' is negative ({value})")
    for required in ("instructions_retired", "cycles"):
        value = profile.counters.get(required)
        if value is None:
            violations.append(f"counter '{required}' is absent")
        elif value <= 0:
            violations.append(f"counter '{required}' must be > 0 (got {value})")

    missing: set[str] = set()
    for desc in schema.metrics:
        formula = FORMULAS.get(desc.formula_id)
        if formula is None:
            violations.append(f"metric '{desc.name}': unknown formula '{desc.formula_id}'")
            continue
        if formula.unit is not desc.unit:
            violations.append(
                f"metric '{desc.name}': unit {desc.unit.value} does not match "
                f"formula '{desc.formula_id}' ({formula.unit.value})"
            )
        for counter in formula.required:
            if counter not in profile.counters:
                missing.add(counter)
    for counter in sorted(missing):
        violations.append(f"counter '{counter}' is absent")
    return violations
