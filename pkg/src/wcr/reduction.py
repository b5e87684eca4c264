"""Workload-set reduction: standardization, PCA, k-means, representatives.

The pipeline standardizes each metric column to zero mean and unit sample
standard deviation, projects onto the principal components that explain a
target share of variance, clusters the projected workloads with seeded
k-means++ / Lloyd iterations, and keeps the member nearest each centroid
as the cluster's representative. Everything is deterministic given the
inputs and the seed.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

import numpy as np

from .errors import DataError
from .model import MetricSchema, MetricVector, RawProfile

log = logging.getLogger("wcr.reduction")

# treat a column as zero-variance when its spread is negligible next to its scale
_ZERO_VARIANCE_RTOL = 1e-12


@dataclass(eq=False)
class NormalizedMatrix:
    """Z-scored metric matrix with the column statistics that produced it."""

    ids: tuple[str, ...]
    cols: tuple[str, ...]
    data: np.ndarray
    col_means: np.ndarray
    col_stds: np.ndarray
    dropped_cols: tuple[str, ...]

    def to_dict(self) -> dict[str, Any]:
        return {
            "ids": list(self.ids),
            "cols": list(self.cols),
            "data": self.data.tolist(),
            "col_means": self.col_means.tolist(),
            "col_stds": self.col_stds.tolist(),
            "dropped_cols": list(self.dropped_cols),
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "NormalizedMatrix":
        return cls(
            ids=tuple(d["ids"]),
            cols=tuple(d["cols"]),
            data=np.asarray(d["data"], dtype=float).reshape(len(d["ids"]), len(d["cols"])),
            col_means=np.asarray(d["col_means"], dtype=float),
            col_stds=np.asarray(d["col_stds"], dtype=float),
            dropped_cols=tuple(d["dropped_cols"]),
        )

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(("workload",) + self.cols)
            for i, workload in enumerate(self.ids):
                writer.writerow([workload] + [repr(float(v)) for v in self.data[i]])


@dataclass(eq=False)
class PcaModel:
    """Principal components of the standardized matrix.

    `components` holds the retained components as rows (retained x d_in),
    while `eigenvalues` / `explained_variance_ratio` cover the full input
    dimension in non-increasing order.
    """

    components: np.ndarray
    eigenvalues: tuple[float, ...]
    explained_variance_ratio: tuple[float, ...]
    retained: int

    def to_dict(self) -> dict[str, Any]:
        return {
            "components": self.components.tolist(),
            "eigenvalues": list(self.eigenvalues),
            "explained_variance_ratio": list(self.explained_variance_ratio),
            "retained": self.retained,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "PcaModel":
        comps = np.asarray(d["components"], dtype=float)
        if comps.size == 0:
            comps = comps.reshape(int(d["retained"]), -1 if d["components"] else 0)
        return cls(
            components=comps,
            eigenvalues=tuple(float(v) for v in d["eigenvalues"]),
            explained_variance_ratio=tuple(float(v) for v in d["explained_variance_ratio"]),
            retained=int(d["retained"]),
        )


@dataclass(eq=False)
class Clustering:
    """K-means outcome: assignments, centroids, and convergence diagnostics."""

    k: int
    assignments: dict[str, int]
    centroids: np.ndarray
    inertia: float
    iterations: int
    seed: int
    labels: tuple[int, ...]
    inertia_history: tuple[float, ...]

    def to_dict(self) -> dict[str, Any]:
        return {
            "k": self.k,
            "assignments": dict(sorted(self.assignments.items())),
            "centroids": self.centroids.tolist(),
            "inertia": self.inertia,
            "iterations": self.iterations,
            "seed": self.seed,
            "labels": list(self.labels),
            "inertia_history": list(self.inertia_history),
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "Clustering":
        return cls(
            k=int(d["k"]),
            assignments={str(k): int(v) for k, v in d["assignments"].items()},
            centroids=np.asarray(d["centroids"], dtype=float),
            inertia=float(d["inertia"]),
            iterations=int(d["iterations"]),
            seed=int(d["seed"]),
            labels=tuple(int(v) for v in d["labels"]),
            inertia_history=tuple(float(v) for v in d["inertia_history"]),
        )


@dataclass(eq=False)
class ReductionResult:
    """Full audit trail of one reduction run."""

    clustering: Clustering
    representatives: tuple[str, ...]
    pca: PcaModel
    cluster_sizes: tuple[int, ...]
    normalized: NormalizedMatrix
    projected: np.ndarray

    def to_dict(self) -> dict[str, Any]:
        return {
            "clustering": self.clustering.to_dict(),
            "representatives": list(self.representatives),
            "pca": self.pca.to_dict(),
            "cluster_sizes": list(self.cluster_sizes),
            "normalized": self.normalized.to_dict(),
            "projected": self.projected.tolist(),
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "ReductionResult":
        normalized = NormalizedMatrix.from_dict(d["normalized"])
        return cls(
            clustering=Clustering.from_dict(d["clustering"]),
            representatives=tuple(d["representatives"]),
            pca=PcaModel.from_dict(d["pca"]),
            cluster_sizes=tuple(int(v) for v in d["cluster_sizes"]),
            normalized=normalized,
            projected=np.asarray(d["projected"], dtype=float).reshape(len(normalized.ids), -1),
        )


@dataclass(frozen=True)
class ReductionConfig:
    """Knobs for `reduce_pipeline`. `k=None` selects k by BIC over [k_min, k_max]."""

    variance_target: float = 0.85
    k: int | None = None
    k_min: int = 1
    k_max: int | None = None
    seed: int = 42
    restarts: int = 8
    max_iter: int = 300
    tol: float = 1e-6


# --- standardization --------------------------------------------------------


def normalize_zscore(vectors: Sequence[MetricVector], schema: MetricSchema) -> NormalizedMatrix:
    """Standardize each metric column to mean 0 and sample std 1 (n-1 denominator).

    Columns with no variance carry no information for clustering; they are
    dropped and reported in `dropped_cols`.
    """
    if len(vectors) < 2:
        raise DataError(f"need at least 2 workloads to normalize, got {len(vectors)}")
    ids = tuple(v.workload_id for v in vectors)
    if len(set(ids)) != len(ids):
        raise DataError("workload ids must be unique")
    for v in vectors:
        if v.schema_version != schema.version:
            raise DataError(
                f"workload '{v.workload_id}': schema_version {v.schema_version!r} "
                f"does not match schema {schema.version!r}"
            )
        if len(v.values) != len(schema):
            raise DataError(
                f"workload '{v.workload_id}': vector length {len(v.values)} "
                f"does not match schema"
            )

    matrix = np.array([v.values for v in vectors], dtype=float)
    means = matrix.mean(axis=0)
    stds = matrix.std(axis=0, ddof=1)
    keep = stds > _ZERO_VARIANCE_RTOL * np.maximum(1.0, np.abs(means))
    dropped = tuple(name for name, kept in zip(schema.names, keep) if not kept)
    if dropped:
        log.warning("dropping zero-variance metrics: %s", ", ".join(dropped))
    data = (matrix[:, keep] - means[keep]) / stds[keep]
    return NormalizedMatrix(
        ids=ids,
        cols=tuple(name for name, kept in zip(schema.names, keep) if kept),
        data=data,
        col_means=means[keep],
        col_stds=stds[keep],
        dropped_cols=dropped,
    )


# --- PCA ---------------------------------------------------------------------


def fit_pca(nm: NormalizedMatrix | np.ndarray, variance_target: float = 0.85) -> PcaModel:
    """Eigendecompose the sample covariance and keep the leading components.

    Retains the smallest number of components whose cumulative explained
    variance reaches `variance_target`. Rank-deficient input is fine:
    trailing eigenvalues are clamped to zero. Each component is oriented
    so its largest-magnitude entry is positive.
    """
    if not 0.0 < variance_target <= 1.0:
        raise DataError(f"variance_target {variance_target} outside (0, 1]")
    data = nm.data if isinstance(nm, NormalizedMatrix) else np.asarray(nm, dtype=float)
    n, d = data.shape
    if d == 0:
        return PcaModel(
            components=np.zeros((0, 0)), eigenvalues=(), explained_variance_ratio=(),
            retained=0,
        )
    if n < 2:
        raise DataError(f"need at least 2 rows to fit, got {n}")

    cov = np.atleast_2d(np.cov(data, rowvar=False, ddof=1))
    eigvals, eigvecs = np.linalg.eigh(cov)
    order = np.argsort(eigvals)[::-1]
    eigvals = np.clip(eigvals[order], 0.0, None)
    components = eigvecs[:, order].T
    for i in range(d):
        pivot = int(np.argmax(np.abs(components[i])))
        if components[i, pivot] < 0:
            components[i] = -components[i]

    total = float(eigvals.sum())
    ratios = eigvals / total if total > 0 else np.zeros(d)
    if total > 0:
        cumulative = np.cumsum(ratios)
        retained = int(np.searchsorted(cumulative, variance_target - 1e-12) + 1)
        retained = min(retained, d)
    else:
        retained = d  # no variance anywhere; keep the full (arbitrary) basis
    return PcaModel(
        components=components[:retained],
        eigenvalues=tuple(float(v) for v in eigvals),
        explained_variance_ratio=tuple(float(v) for v in ratios),
        retained=retained,
    )


def project(nm: NormalizedMatrix | np.ndarray, model: PcaModel) -> np.ndarray:
    """Map rows into the retained component space."""
    data = nm.data if isinstance(nm, NormalizedMatrix) else np.asarray(nm, dtype=float)
    if model.retained == 0:
        return np.zeros((data.shape[0], 0))
    if data.shape[1] != model.components.shape[1]:
        raise DataError(
            f"matrix has {data.shape[1]} columns but the model expects "
            f"{model.components.shape[1]}"
        )
    return data @ model.components.T


# --- k-means -----------------------------------------------------------------


def kmeans(
    points: np.ndarray,
    k: int,
    seed: int,
    max_iter: int = 300,
    tol: float = 1e-6,
    ids: Sequence[str] | None = None,
) -> Clustering:
    """Seeded k-means++ initialization, Lloyd iterations, point-move polish.

    Deterministic for a given (points, k, seed). Lloyd iterations stop when
    the largest centroid movement drops below `tol`; a final single-point
    relocation pass then applies any strictly inertia-decreasing moves,
    which escapes Lloyd-stable local optima on small instances. An empty
    cluster is re-seeded with the point farthest from its assigned centroid
    (that point is moved into the empty cluster), so every cluster ends up
    non-empty.
    """
    points = np.asarray(points, dtype=float)
    if points.ndim != 2:
        raise DataError("points must be a 2-D matrix")
    n = points.shape[0]
    if k <= 0:
        raise DataError(f"k must be positive, got {k}")
    if k > n:
        raise DataError(f"k={k} exceeds the number of points ({n})")
    if ids is None:
        ids = tuple(str(i) for i in range(n))
    else:
        ids = tuple(ids)
        if len(ids) != n:
            raise DataError(f"{len(ids)} ids for {n} points")
        if len(set(ids)) != n:
            raise DataError("ids must be unique")

    rng = np.random.default_rng(seed)
    centroids = points[_plus_plus_init(points, k, rng)].copy()

    labels = np.zeros(n, dtype=int)
    history: list[float] = []
    iterations = 0
    for _ in range(max_iter):
        iterations += 1
        distances = _sq_distances(points, centroids)
        labels = np.argmin(distances, axis=1)
        labels = _fill_empty_clusters(points, centroids, labels, k)

        new_centroids = np.empty_like(centroids)
        for j in range(k):
            new_centroids[j] = points[labels == j].mean(axis=0)
        movement = float(np.sqrt(((new_centroids - centroids) ** 2).sum(axis=1)).max()) \
            if centroids.size else 0.0
        centroids = new_centroids
        history.append(float(((points - centroids[labels]) ** 2).sum()))
        if movement < tol:
            break

    labels = _relocation_polish(points, labels, k, max_sweeps=max_iter)
    for j in range(k):
        centroids[j] = points[labels == j].mean(axis=0)

    inertia = float(((points - centroids[labels]) ** 2).sum())
    if not history or inertia < history[-1]:
        history.append(inertia)
    return Clustering(
        k=k,
        assignments={ids[i]: int(labels[i]) for i in range(n)},
        centroids=centroids,
        inertia=inertia,
        iterations=iterations,
        seed=seed,
        labels=tuple(int(v) for v in labels),
        inertia_history=tuple(history),
    )


def _plus_plus_init(points: np.ndarray, k: int, rng: np.random.Generator) -> list[int]:
    n = points.shape[0]
    chosen = [int(rng.integers(n))]
    dists = ((points - points[chosen[0]]) ** 2).sum(axis=1)
    for _ in range(1, k):
        total = float(dists.sum())
        if total > 0:
            idx = int(rng.choice(n, p=dists / total))
        else:
            idx = int(rng.integers(n))  # all remaining mass at existing centers
        chosen.append(idx)
        dists = np.minimum(dists, ((points - points[idx]) ** 2).sum(axis=1))
    return chosen


def _sq_distances(points: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    if points.shape[1] == 0:
        return np.zeros((points.shape[0], centroids.shape[0]))
    return ((points[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)


def _fill_empty_clusters(
    points: np.ndarray, centroids: np.ndarray, labels: np.ndarray, k: int
) -> np.ndarray:
    labels = labels.copy()
    counts = np.bincount(labels, minlength=k)
    for cluster in range(k):
        if counts[cluster] > 0:
            continue
        # donate the point farthest from its centroid, from a cluster that
        # can spare one; k <= n guarantees such a cluster exists
        dist_to_own = ((points - centroids[labels]) ** 2).sum(axis=1)
        eligible = counts[labels] >= 2
        if not eligible.any():
            raise DataError("cannot re-seed empty cluster")  # unreachable for k <= n
        candidates = np.where(eligible, dist_to_own, -np.inf)
        donor = int(np.argmax(candidates))
        counts[labels[donor]] -= 1
        counts[cluster] += 1
        labels[donor] = cluster
        centroids[cluster] = points[donor]
    return labels


def kmeans_best_of(
    points: np.ndarray,
    k: int,
    seed: int,
    restarts: int,
    max_iter: int = 300,
    tol: float = 1e-6,
    ids: Sequence[str] | None = None,
) -> Clustering:
    """Run `restarts` seeded k-means runs and keep the lowest inertia.

    Restart seeds are seed, seed+1, ...; ties keep the earliest seed so the
    merge is deterministic even when restarts run concurrently.
    """
    if restarts < 1:
        raise DataError(f"restarts must be positive, got {restarts}")
    best: Clustering | None = None
    for r in range(restarts):
        result = kmeans(points, k, seed + r, max_iter=max_iter, tol=tol, ids=ids)
        if best is None or result.inertia < best.inertia:
            best = result
    assert best is not None
    return best


# --- model selection ---------------------------------------------------------


def bic_score(points: np.ndarray, clustering: Clustering) -> float:
    """Bayesian Information Criterion of a clustering, higher is better.

    Models the data as a hard-assignment mixture of spherical Gaussians
    with a shared variance (the pooled within-cluster mean squared
    deviation per dimension). Zero pooled variance makes the likelihood
    unbounded; that degenerate fit scores +inf.
    """
    points = np.asarray(points, dtype=float)
    n, d = points.shape
    k = clustering.k
    if d == 0:
        return math.inf
    sigma2 = clustering.inertia / (n * d)
    if sigma2 <= 0.0:
        return math.inf
    labels = np.asarray(clustering.labels)
    counts = np.bincount(labels, minlength=k).astype(float)
    log_likelihood = float(
        (counts * np.log(counts / n)).sum()
        - 0.5 * n * d * (math.log(2.0 * math.pi * sigma2) + 1.0)
    )
    params = (k - 1) + k * d + 1
    return log_likelihood - 0.5 * params * math.log(n)


def choose_k(
    points: np.ndarray,
    k_min: int,
    k_max: int,
    seed: int,
    restarts: int = 8,
) -> int:
    """Pick the cluster count in [k_min, k_max] that maximizes the BIC.

    Each candidate k is scored on its best-of-`restarts` k-means result.
    Ties go to the smallest k.
    """
    points = np.asarray(points, dtype=float)
    n = points.shape[0]
    if not 1 <= k_min <= k_max <= n:
        raise DataError(f"need 1 <= k_min <= k_max <= n, got ({k_min}, {k_max}) with n={n}")
    best_k = k_min
    best_score = -math.inf
    for k in range(k_min, k_max + 1):
        clustering = kmeans_best_of(points, k, seed, restarts)
        score = bic_score(points, clustering)
        log.debug("k=%d inertia=%.6g bic=%.6g", k, clustering.inertia, score)
        if score > best_score:
            best_score = score
            best_k = k
    return best_k


# --- representatives ----------------------------------------------------------


def select_representatives(
    clustering: Clustering, points: np.ndarray, ids: Sequence[str]
) -> list[str]:
    """Per cluster, the member nearest the centroid; ties take the smallest id."""
    points = np.asarray(points, dtype=float)
    ids = tuple(ids)
    if len(ids) != points.shape[0] or len(ids) != len(clustering.labels):
        raise DataError("points and ids are inconsistent with the clustering")
    for i, workload in enumerate(ids):
        if clustering.assignments.get(workload) != clustering.labels[i]:
            raise DataError(f"id {workload!r} does not match the clustering's assignments")

    labels = np.asarray(clustering.labels)
    representatives: list[str] = []
    for cluster in range(clustering.k):
        member_rows = np.where(labels == cluster)[0]
        if member_rows.size == 0:
            raise DataError(f"cluster {cluster} has no members")
        d2 = ((points[member_rows] - clustering.centroids[cluster]) ** 2).sum(axis=1)
        best = d2.min()
        candidates = [ids[row] for row, dist in zip(member_rows, d2) if dist == best]
        representatives.append(min(candidates))
    return representatives


# --- pipeline -----------------------------------------------------------------


def reduce_vectors(
    vectors: Sequence[MetricVector], schema: MetricSchema, config: ReductionConfig
) -> ReductionResult:
    """Normalize, project, cluster, and pick representatives for metric vectors."""
    nm = normalize_zscore(vectors, schema)
    pca = fit_pca(nm, config.variance_target)
    projected = project(nm, pca)
    n = projected.shape[0]
    if config.k is not None:
        k = config.k
    else:
        k_max = config.k_max if config.k_max is not None else n
        k = choose_k(projected, config.k_min, k_max, config.seed, config.restarts)
    clustering = kmeans_best_of(
        projected, k, config.seed, config.restarts,
        max_iter=config.max_iter, tol=config.tol, ids=nm.ids,
    )
    representatives = select_representatives(clustering, projected, nm.ids)
    sizes = tuple(int(c) for c in np.bincount(np.asarray(clustering.labels), minlength=k))
    return ReductionResult(
        clustering=clustering,
        representatives=tuple(representatives),
        pca=pca,
        cluster_sizes=sizes,
        normalized=nm,
        projected=projected,
    )


def reduce_pipeline(
    profiles: Sequence[RawProfile], schema: MetricSchema, config: ReductionConfig
) -> ReductionResult:
    """Derive metric vectors from raw profiles, then reduce them."""
    from .ingest import derive_microarch_metrics

    if len(profiles) < 2:
        raise DataError(f"need at least 2 profiles, got {len(profiles)}")
    vectors = [derive_microarch_metrics(p, schema) for p in profiles]
    return reduce_vectors(vectors, schema, config)
