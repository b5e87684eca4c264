"""Shared fixtures and independent oracles used across the test suite."""

from __future__ import annotations

import itertools
from collections import Counter

import numpy as np

from wcr.model import (
    MetricDescriptor,
    MetricGroup,
    MetricSchema,
    MetricUnit,
    MetricVector,
    RawProfile,
    default_schema,
)

# Counter totals for one plausible five-node run. Instruction and cycle
# totals are chosen so the headline derivations come out to round numbers
# (instructions/cycles = 1.28, 1000*l1i_misses/instructions = 15) and the
# five mix categories cover 98% of retired instructions.
FIXTURE_COUNTERS: dict[str, float] = {
    "instructions_retired": 2_560_000_000,
    "cycles": 2_000_000_000,
    "branch_instructions": 486_400_000,     # 0.19
    "integer_instructions": 972_800_000,    # 0.38
    "fp_instructions": 76_800_000,          # 0.03
    "load_instructions": 665_600_000,       # 0.26
    "store_instructions": 307_200_000,      # 0.12
    "l1i_misses": 38_400_000,               # MPKI 15
    "l1i_accesses": 512_000_000,
    "l1d_misses": 25_600_000,               # MPKI 10
    "l1d_accesses": 972_800_000,
    "l2_misses": 28_160_000,                # MPKI 11
    "l2_accesses": 64_000_000,
    "l3_misses": 3_072_000,                 # MPKI 1.2
    "l3_accesses": 28_160_000,
    "itlb_misses": 128_000,                 # MPKI 0.05
    "itlb_accesses": 2_560_000_000,
    "dtlb_misses": 2_304_000,               # MPKI 0.9
    "dtlb_accesses": 972_800_000,
    "itlb_walk_cycles": 10_000_000,
    "dtlb_walk_cycles": 40_000_000,
    "mispredicted_branches": 13_619_200,    # 2.8% of branches
    "taken_branches": 291_840_000,
    "indirect_branches": 48_640_000,
    "frontend_stall_cycles": 700_000_000,
    "backend_stall_cycles": 500_000_000,
    "resource_stall_cycles": 300_000_000,
    "store_buffer_stall_cycles": 100_000_000,
    "divider_busy_cycles": 20_000_000,
    "machine_clears": 256_000,
    "uops_issued": 3_200_000_000,
    "uops_retired": 3_000_000_000,
    "offcore_requests": 40_000_000,
    "offcore_demand_data_reads": 25_000_000,
    "offcore_rfo_requests": 8_000_000,
    "offcore_writebacks": 7_000_000,
    "offcore_read_occupancy_cycles": 600_000_000,
    "l1d_miss_occupancy_cycles": 400_000_000,
    "snoop_responses": 10_000_000,
    "snoop_hits": 4_000_000,
    "snoop_hitm": 1_000_000,
    "snoop_misses": 5_000_000,
    "fp_operations": 256_000_000,
    "offcore_bytes": 2_560_000_000,
}


def make_profile(workload_id: str = "w1", **overrides) -> RawProfile:
    counters = dict(FIXTURE_COUNTERS)
    counters.update(overrides.pop("counters", {}))
    return RawProfile(
        workload_id=workload_id,
        counters=counters,
        wall_time_s=overrides.pop("wall_time_s", 120.0),
        node_count=overrides.pop("node_count", 5),
        **overrides,
    )


def make_plain_schema(names, unit=MetricUnit.PER_KILO_INSTR) -> MetricSchema:
    """A schema for synthetic vectors; formula ids are never dereferenced."""
    return MetricSchema(
        metrics=tuple(
            MetricDescriptor(name=n, group=MetricGroup.CACHE, unit=unit, formula_id="synthetic")
            for n in names
        ),
        version="test-1",
    )


def plant_clusters(
    n_points: int,
    n_clusters: int,
    dim: int,
    seed: int,
    sigma: float = 0.01,
    low: float = 0.2,
    high: float = 0.8,
):
    """Gaussian clusters with inter-centroid separation >= 5 * sigma * sqrt(dim).

    Returns (points, labels, centers). Values stay well inside (0, 1) so the
    points can double as metric vectors under ratio-unit constraints.
    """
    rng = np.random.default_rng(seed)
    min_separation = 5.0 * sigma * np.sqrt(dim)
    for _ in range(100):
        centers = rng.uniform(low, high, size=(n_clusters, dim))
        gaps = np.sqrt(((centers[:, None] - centers[None]) ** 2).sum(axis=2))
        np.fill_diagonal(gaps, np.inf)
        if gaps.min() >= min_separation:
            break
    else:
        raise AssertionError("could not place separated centers")

    base, extra = divmod(n_points, n_clusters)
    counts = [base + (1 if i < extra else 0) for i in range(n_clusters)]
    labels = np.repeat(np.arange(n_clusters), counts)
    points = centers[labels] + rng.normal(0.0, sigma, size=(n_points, dim))
    assert points.min() > 0.01 and points.max() < 0.99
    return points, labels, centers


def planted_metric_vectors(seed: int = 42):
    """77 vectors under the default 45-metric schema, planted in 17 clusters."""
    schema = default_schema()
    points, labels, _ = plant_clusters(77, 17, len(schema), seed=seed)
    vectors = [
        MetricVector.from_values(f"wl{i:02d}", points[i], schema) for i in range(len(points))
    ]
    return schema, vectors, points, labels


def adjusted_rand_index(a, b) -> float:
    """Chance-corrected agreement between two labelings of the same items."""
    a = list(a)
    b = list(b)
    assert len(a) == len(b)

    def comb2(x: int) -> int:
        return x * (x - 1) // 2

    cells = Counter(zip(a, b))
    sum_cells = sum(comb2(c) for c in cells.values())
    sum_a = sum(comb2(c) for c in Counter(a).values())
    sum_b = sum(comb2(c) for c in Counter(b).values())
    total = comb2(len(a))
    expected = sum_a * sum_b / total
    max_index = (sum_a + sum_b) / 2.0
    if max_index == expected:
        return 1.0
    return (sum_cells - expected) / (max_index - expected)


def brute_force_kmeans(points: np.ndarray, k: int):
    """Exhaustive minimum-inertia partition; the k-means optimality oracle.

    Enumerates every assignment of n points to k non-empty clusters and
    computes inertia with the same numpy expression the implementation
    uses, so equal partitions give bit-equal inertia.
    """
    points = np.asarray(points, dtype=float)
    n = points.shape[0]
    best_inertia = np.inf
    best_labels = None
    for assignment in itertools.product(range(k), repeat=n):
        if len(set(assignment)) < k:
            continue
        labels = np.array(assignment)
        centroids = np.array([points[labels == j].mean(axis=0) for j in range(k)])
        inertia = float(((points - centroids[labels]) ** 2).sum())
        if inertia < best_inertia:
            best_inertia = inertia
            best_labels = labels
    return best_inertia, best_labels


def partition_of(labels, k: int) -> frozenset:
    labels = np.asarray(labels)
    return frozenset(
        frozenset(np.where(labels == j)[0].tolist()) for j in range(k)
    )
