"""Trace-driven set-associative LRU cache simulation.

A trace is a weighted list of access segments; sweeping one cache
configuration across a capacity grid yields a miss-ratio-versus-capacity
curve whose knee estimates the workload's instruction or data footprint.
A reuse-distance oracle provides an independent second implementation of
LRU miss counting for cross-checking the simulator.
"""

from __future__ import annotations

import enum
import json
import logging
from collections import OrderedDict
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

import numpy as np

from .errors import DataError, ParseError

log = logging.getLogger("wcr.cachesim")

KIB = 1024
# default sweep: 16 KB doubling up to 8192 KB
DEFAULT_SIZE_GRID: tuple[int, ...] = tuple(kb * KIB for kb in (
    16, 32, 64, 128, 256, 512, 1024, 2048, 4096, 8192))
DEFAULT_KNEE_RATIO = 0.01

_WEIGHT_SUM_TOL = 1e-9


class AccessKind(enum.IntEnum):
    IFETCH = 0
    LOAD = 1
    STORE = 2


ALL_KINDS = frozenset(AccessKind)

_KIND_TOKENS = {
    "i": AccessKind.IFETCH, "ifetch": AccessKind.IFETCH, "instr": AccessKind.IFETCH,
    "l": AccessKind.LOAD, "load": AccessKind.LOAD, "read": AccessKind.LOAD,
    "s": AccessKind.STORE, "store": AccessKind.STORE, "write": AccessKind.STORE,
}
_KIND_LETTER = {AccessKind.IFETCH: "I", AccessKind.LOAD: "L", AccessKind.STORE: "S"}


class CurveKind(str, enum.Enum):
    INSTRUCTION = "instruction"
    DATA = "data"
    UNIFIED = "unified"


def curve_kind_for(kinds: frozenset[AccessKind]) -> CurveKind:
    if kinds == frozenset({AccessKind.IFETCH}):
        return CurveKind.INSTRUCTION
    if kinds <= frozenset({AccessKind.LOAD, AccessKind.STORE}):
        return CurveKind.DATA
    return CurveKind.UNIFIED


@dataclass(frozen=True)
class CacheConfig:
    """Geometry of one simulated cache. `associativity=None` means fully associative.

    Stores allocate on miss by default; set `write_allocate=False` for a
    no-allocate store policy.
    """

    capacity_bytes: int
    line_bytes: int = 64
    associativity: int | None = 8
    write_allocate: bool = True

    def __post_init__(self) -> None:
        if self.capacity_bytes <= 0:
            raise DataError(f"capacity_bytes {self.capacity_bytes} is not positive")
        if self.line_bytes <= 0 or self.line_bytes & (self.line_bytes - 1):
            raise DataError(f"line_bytes {self.line_bytes} is not a positive power of two")
        if self.associativity is not None and self.associativity <= 0:
            raise DataError(f"associativity {self.associativity} is not positive")
        if self.capacity_bytes % self.line_bytes:
            raise DataError("capacity_bytes must be divisible by line_bytes")
        if self.associativity is not None and self.capacity_bytes % (
            self.line_bytes * self.associativity
        ):
            raise DataError(
                "capacity_bytes must be divisible by line_bytes * associativity"
            )

    @property
    def capacity_lines(self) -> int:
        return self.capacity_bytes // self.line_bytes

    @property
    def set_count(self) -> int:
        if self.associativity is None:
            return 1
        return self.capacity_bytes // (self.line_bytes * self.associativity)

    @property
    def ways(self) -> int:
        if self.associativity is None:
            return self.capacity_lines
        return self.associativity


@dataclass(frozen=True)
class TraceSegment:
    """A weighted slice of a memory-access trace."""

    weight: float
    addresses: np.ndarray
    kinds: np.ndarray

    def __post_init__(self) -> None:
        addresses = np.asarray(self.addresses, dtype=np.uint64)
        kinds = np.asarray(self.kinds, dtype=np.uint8)
        if addresses.size == 0:
            raise DataError("trace segment is empty")
        if addresses.shape != kinds.shape:
            raise DataError("addresses and kinds differ in length")
        if self.weight <= 0:
            raise DataError(f"segment weight {self.weight} is not positive")
        valid = {k.value for k in AccessKind}
        if not set(np.unique(kinds).tolist()) <= valid:
            raise DataError("kinds contain values outside the access-kind codes")
        addresses.setflags(write=False)
        kinds.setflags(write=False)
        object.__setattr__(self, "addresses", addresses)
        object.__setattr__(self, "kinds", kinds)

    def __len__(self) -> int:
        return int(self.addresses.size)


@dataclass(frozen=True)
class AccessTrace:
    """All segments of one workload's trace; weights sum to 1."""

    segments: tuple[TraceSegment, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "segments", tuple(self.segments))
        if not self.segments:
            raise DataError("trace has no segments")
        total = sum(s.weight for s in self.segments)
        if abs(total - 1.0) > _WEIGHT_SUM_TOL:
            raise DataError(f"segment weights sum to {total}, expected 1")

    @classmethod
    def single(cls, addresses, kinds) -> "AccessTrace":
        return cls(segments=(TraceSegment(1.0, addresses, kinds),))


@dataclass(frozen=True)
class SimResult:
    accesses: int
    misses: int
    miss_ratio: float


@dataclass(frozen=True)
class CurvePoint:
    capacity_bytes: int
    miss_ratio: float


@dataclass(frozen=True)
class MissRatioCurve:
    """Miss ratio as a function of cache capacity, for one access-kind filter."""

    points: tuple[CurvePoint, ...]
    kind: CurveKind

    def __post_init__(self) -> None:
        object.__setattr__(self, "points", tuple(self.points))
        if not self.points:
            raise DataError("curve has no points")
        for prev, cur in zip(self.points, self.points[1:]):
            if cur.capacity_bytes <= prev.capacity_bytes:
                raise DataError("curve capacities must be strictly increasing")
        for p in self.points:
            if not 0.0 <= p.miss_ratio <= 1.0:
                raise DataError(f"miss ratio {p.miss_ratio} outside [0, 1]")

    def to_dict(self) -> dict[str, Any]:
        return {
            "kind": self.kind.value,
            "points": [
                {"capacity_bytes": p.capacity_bytes, "miss_ratio": p.miss_ratio}
                for p in self.points
            ],
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "MissRatioCurve":
        return cls(
            points=tuple(
                CurvePoint(int(p["capacity_bytes"]), float(p["miss_ratio"]))
                for p in d["points"]
            ),
            kind=CurveKind(d["kind"]),
        )


# --- simulation ---------------------------------------------------------------


def _filtered(segment: TraceSegment, kinds: frozenset[AccessKind]):
    if kinds == ALL_KINDS:
        return segment.addresses, segment.kinds
    mask = np.isin(segment.kinds, [k.value for k in kinds])
    return segment.addresses[mask], segment.kinds[mask]


def simulate(
    segment: TraceSegment,
    config: CacheConfig,
    kinds: frozenset[AccessKind] = ALL_KINDS,
) -> SimResult:
    """Run one segment through a cold cache and count misses.

    Only accesses whose kind is in `kinds` reach the cache. Lines are
    `address // line_bytes`, mapped to set `line % set_count`, with LRU
    replacement inside each set.
    """
    addresses, kind_codes = _filtered(segment, kinds)
    if addresses.size == 0:
        raise DataError("no accesses of the requested kinds in this segment")
    lines = (addresses // np.uint64(config.line_bytes)).tolist()
    set_count = config.set_count
    ways = config.ways
    sets: dict[int, OrderedDict] = {}
    misses = 0

    if config.write_allocate:
        for line in lines:
            s = line % set_count
            lru = sets.get(s)
            if lru is None:
                lru = sets[s] = OrderedDict()
            if line in lru:
                lru.move_to_end(line)
            else:
                misses += 1
                lru[line] = None
                if len(lru) > ways:
                    lru.popitem(last=False)
    else:
        store = AccessKind.STORE.value
        for line, code in zip(lines, kind_codes.tolist()):
            s = line % set_count
            lru = sets.get(s)
            if lru is None:
                lru = sets[s] = OrderedDict()
            if line in lru:
                lru.move_to_end(line)
            else:
                misses += 1
                if code != store:
                    lru[line] = None
                    if len(lru) > ways:
                        lru.popitem(last=False)

    total = len(lines)
    return SimResult(accesses=total, misses=misses, miss_ratio=misses / total)


class _Fenwick:
    """Prefix-sum tree over 1-based positions."""

    __slots__ = ("tree",)

    def __init__(self, size: int):
        self.tree = [0] * (size + 1)

    def add(self, i: int, delta: int) -> None:
        tree = self.tree
        while i < len(tree):
            tree[i] += delta
            i += i & (-i)

    def prefix(self, i: int) -> int:
        tree = self.tree
        total = 0
        while i > 0:
            total += tree[i]
            i -= i & (-i)
        return total


def stack_distance_oracle(
    segment: TraceSegment,
    capacity_lines: int,
    set_count: int,
    line_bytes: int = 64,
    kinds: frozenset[AccessKind] = ALL_KINDS,
) -> int:
    """LRU miss count via per-set reuse distances; independent of `simulate`.

    An access misses when it is a first touch of its line, or when the
    number of distinct lines touched in its set since the previous access
    to the same line reaches the set's way count. Assumes every access
    allocates (the simulator's default store policy).
    """
    if capacity_lines <= 0 or set_count <= 0:
        raise DataError("capacity_lines and set_count must be positive")
    if capacity_lines % set_count:
        raise DataError("capacity_lines must be divisible by set_count")
    ways = capacity_lines // set_count

    addresses, _ = _filtered(segment, kinds)
    if addresses.size == 0:
        raise DataError("no accesses of the requested kinds in this segment")
    lines = (addresses // np.uint64(line_bytes)).tolist()

    streams: dict[int, list[int]] = {}
    for line in lines:
        streams.setdefault(line % set_count, []).append(line)

    misses = 0
    for stream in streams.values():
        fenwick = _Fenwick(len(stream))
        last_pos: dict[int, int] = {}
        for pos, line in enumerate(stream, start=1):
            prev = last_pos.get(line)
            if prev is None:
                misses += 1
            else:
                # markers sit at each line's most recent position;
                # the count strictly between prev and pos is the reuse distance
                distance = fenwick.prefix(pos - 1) - fenwick.prefix(prev)
                if distance >= ways:
                    misses += 1
                fenwick.add(prev, -1)
            fenwick.add(pos, +1)
            last_pos[line] = pos
    return misses


def sweep_capacities(
    trace: AccessTrace,
    sizes: Sequence[int],
    template: CacheConfig,
    kinds: frozenset[AccessKind] = ALL_KINDS,
) -> MissRatioCurve:
    """Simulate every segment at every capacity; combine per-segment miss
    ratios as the weighted mean given by the segment weights."""
    if not sizes:
        raise DataError("sizes must be non-empty")
    ordered = sorted(int(s) for s in sizes)
    if len(set(ordered)) != len(ordered):
        raise DataError("sizes contain duplicates")
    points = []
    for size in ordered:
        config = replace(template, capacity_bytes=size)
        ratio = sum(
            seg.weight * simulate(seg, config, kinds).miss_ratio for seg in trace.segments
        )
        points.append(CurvePoint(capacity_bytes=size, miss_ratio=ratio))
    return MissRatioCurve(points=tuple(points), kind=curve_kind_for(kinds))


def estimate_footprint(
    curve: MissRatioCurve, knee_ratio: float = DEFAULT_KNEE_RATIO
) -> int | None:
    """Smallest listed capacity whose miss ratio drops below the knee.

    Returns None when no point on the curve reaches the knee.
    """
    if not 0.0 < knee_ratio <= 1.0:
        raise DataError(f"knee_ratio {knee_ratio} outside (0, 1]")
    for point in curve.points:
        if point.miss_ratio < knee_ratio:
            return point.capacity_bytes
    return None


# --- trace files ----------------------------------------------------------------

_RECORD_DTYPE = np.dtype([("address", "<u8"), ("kind", "u1")])


def read_text_trace(path: str | Path) -> AccessTrace:
    """Read a `kind address-hex` text trace as a single full-weight segment."""
    addresses: list[int] = []
    kinds: list[int] = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 2:
                raise ParseError(f"expected 'kind address', got {raw.strip()!r}", line=lineno)
            kind = _KIND_TOKENS.get(parts[0].lower())
            if kind is None:
                raise ParseError(f"unknown access kind {parts[0]!r}", line=lineno)
            try:
                address = int(parts[1], 16)
            except ValueError:
                raise ParseError(f"address {parts[1]!r} is not hexadecimal", line=lineno)
            if address < 0:
                raise ParseError("address is negative", line=lineno)
            addresses.append(address)
            kinds.append(kind.value)
    if not addresses:
        raise ParseError(f"trace {path} has no accesses")
    return AccessTrace.single(addresses, kinds)


def write_text_trace(trace: AccessTrace, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        for segment in trace.segments:
            for address, kind in zip(segment.addresses.tolist(), segment.kinds.tolist()):
                fh.write(f"{_KIND_LETTER[AccessKind(kind)]} {address:#x}\n")


def read_binary_trace(path: str | Path, sidecar: str | Path | None = None) -> AccessTrace:
    """Read packed (u64 address, u8 kind) records.

    The optional JSON sidecar assigns record ranges to weighted segments:
    `{"segments": [{"begin": 0, "end": N, "weight": 1.0}, ...]}`. Without a
    sidecar the whole file is one segment of weight 1.
    """
    records = np.fromfile(path, dtype=_RECORD_DTYPE)
    if records.size == 0:
        raise DataError(f"trace {path} has no records")
    if sidecar is None:
        return AccessTrace.single(records["address"], records["kind"])
    spec = json.loads(Path(sidecar).read_text(encoding="utf-8"))
    segments = []
    previous_end = 0
    for entry in spec["segments"]:
        begin, end = int(entry["begin"]), int(entry["end"])
        if begin < previous_end or end <= begin or end > records.size:
            raise DataError(
                f"sidecar segment [{begin}, {end}) is out of order or out of range"
            )
        previous_end = end
        segments.append(
            TraceSegment(
                weight=float(entry["weight"]),
                addresses=records["address"][begin:end],
                kinds=records["kind"][begin:end],
            )
        )
    return AccessTrace(segments=tuple(segments))


def write_binary_trace(
    trace: AccessTrace, path: str | Path, sidecar: str | Path | None = None
) -> None:
    total = sum(len(s) for s in trace.segments)
    records = np.empty(total, dtype=_RECORD_DTYPE)
    offset = 0
    boundaries = []
    for segment in trace.segments:
        end = offset + len(segment)
        records["address"][offset:end] = segment.addresses
        records["kind"][offset:end] = segment.kinds
        boundaries.append({"begin": offset, "end": end, "weight": segment.weight})
        offset = end
    records.tofile(path)
    if sidecar is not None:
        Path(sidecar).write_text(
            json.dumps({"segments": boundaries}, indent=2, sort_keys=True) + "\n",
            encoding="utf-8",
        )


def skip_accesses(trace: AccessTrace, n: int) -> AccessTrace:
    """Drop the first `n` records across segments (fast-forward past a prefix).

    Segments emptied by the skip are removed and the remaining weights are
    renormalized to sum to 1.
    """
    if n < 0:
        raise DataError(f"skip count {n} is negative")
    if n == 0:
        return trace
    remaining = n
    kept: list[TraceSegment] = []
    for segment in trace.segments:
        if remaining >= len(segment):
            remaining -= len(segment)
            continue
        if remaining > 0:
            segment = TraceSegment(
                weight=segment.weight,
                addresses=segment.addresses[remaining:],
                kinds=segment.kinds[remaining:],
            )
            remaining = 0
        kept.append(segment)
    if not kept:
        raise DataError(f"skip of {n} accesses consumes the whole trace")
    total_weight = sum(s.weight for s in kept)
    return AccessTrace(
        segments=tuple(
            TraceSegment(s.weight / total_weight, s.addresses, s.kinds) for s in kept
        )
    )


def write_curve_csv(curve: MissRatioCurve, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("capacity_bytes,miss_ratio\n")
        for point in curve.points:
            fh.write(f"{point.capacity_bytes},{point.miss_ratio:.6f}\n")


def read_curve_csv(path: str | Path, kind: CurveKind = CurveKind.UNIFIED) -> MissRatioCurve:
    points = []
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip()
        if header != "capacity_bytes,miss_ratio":
            raise ParseError(f"expected 'capacity_bytes,miss_ratio' header in {path}", line=1)
        for lineno, raw in enumerate(fh, start=2):
            line = raw.strip()
            if not line:
                continue
            try:
                capacity_s, ratio_s = line.split(",")
                points.append(CurvePoint(int(capacity_s), float(ratio_s)))
            except ValueError:
                raise ParseError(f"bad curve row {line!r}", line=lineno)
    return MissRatioCurve(points=tuple(points), kind=kind)
