"""Overlapping item clusters from spectral embeddings.

Pipeline: row-normalize the embedding, run K-means (k-means++ init, Lloyd
iterations), then attach every item to its R nearest centroids.  Two
embedding routes are supported: ``laplacian`` (eigenvectors of the
normalized co-occurrence Laplacian) and ``svd`` (items projected onto the
top left singular vectors of X^T, scaled by the singular values).
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import graph as graph_mod
from . import spectral
from .errors import ConfigurationError

ROW_SUM_EPS = 1e-12


@dataclass(frozen=True)
class GroupingConfig:
    k: int
    r: int
    f: int
    kmeans_max_iters: int = 100
    seed: int = 0
    normalization: str = "row_sum"  # or "l2"

    def validate(self, m: int) -> None:
        if not 1 <= self.r < self.k or self.k > m:
            raise ConfigurationError(
                f"need 1 <= R < K <= m, got R={self.r}, K={self.k}, m={m}"
            )
        if self.kmeans_max_iters < 1:
            raise ConfigurationError("kmeans_max_iters must be >= 1")
        if self.normalization not in ("row_sum", "l2"):
            raise ConfigurationError(f"unknown normalization {self.normalization!r}")


@dataclass
class OverlappingClusters:
    k: int
    assignments: np.ndarray  # m x R, each row sorted ascending, distinct ids
    centroids: np.ndarray  # K x F
    inertia: float


def normalize_rows(embedding, mode="row_sum"):
    """Divide each row by its entry sum (or L2 norm); near-zero rows pass
    through unchanged so zero-degree items keep zero coordinates."""
    coords = embedding.coords.copy()
    if mode == "row_sum":
        scale = coords.sum(axis=1)
    elif mode == "l2":
        scale = np.linalg.norm(coords, axis=1)
    else:
        raise ConfigurationError(f"unknown normalization {mode!r}")
    ok = np.abs(scale) > ROW_SUM_EPS
    coords[ok] /= scale[ok, None]
    return replace(embedding, coords=coords)


def _kmeans_pp_init(points, k, rng):
    n = points.shape[0]
    centroids = np.empty((k, points.shape[1]))
    first = rng.integers(n)
    centroids[0] = points[first]
    d2 = np.sum((points - centroids[0]) ** 2, axis=1)
    for j in range(1, k):
        total = d2.sum()
        if total <= 0:
            # all remaining points coincide with a centroid; pick any
            idx = rng.integers(n)
        else:
            idx = int(np.searchsorted(np.cumsum(d2 / total), rng.random()))
            idx = min(idx, n - 1)
        centroids[j] = points[idx]
        d2 = np.minimum(d2, np.sum((points - centroids[j]) ** 2, axis=1))
    return centroids


def _pairwise_sq_dists(points, centroids):
    # ||p - c||^2 = ||p||^2 - 2 p.c + ||c||^2
    d2 = (
        np.sum(points**2, axis=1)[:, None]
        - 2.0 * points @ centroids.T
        + np.sum(centroids**2, axis=1)[None, :]
    )
    np.maximum(d2, 0.0, out=d2)
    return d2


def kmeans(points, k, max_iters=100, seed=0):
    """Lloyd iterations from a k-means++ start.

    Stops when no label changes or after max_iters.  Empty clusters are
    reinitialized at the point currently farthest from its own centroid.
    The inertia is checked to be non-increasing every iteration.
    """
    points = np.asarray(points, dtype=np.float64)
    n = points.shape[0]
    if k > n:
        raise ConfigurationError(f"K={k} exceeds the number of points {n}")
    rng = np.random.default_rng(seed)
    centroids = _kmeans_pp_init(points, k, rng)

    labels = np.full(n, -1, dtype=np.int64)
    prev_inertia = np.inf
    for _ in range(max_iters):
        d2 = _pairwise_sq_dists(points, centroids)
        new_labels = np.argmin(d2, axis=1)
        point_d2 = d2[np.arange(n), new_labels]

        for j in range(k):
            if not np.any(new_labels == j):
                far = int(np.argmax(point_d2))
                centroids[j] = points[far]
                new_labels[far] = j
                point_d2[far] = 0.0

        inertia = float(point_d2.sum())
        assert inertia <= prev_inertia + 1e-9 * max(1.0, prev_inertia)
        prev_inertia = inertia
        if np.array_equal(new_labels, labels):
            break
        labels = new_labels
        for j in range(k):
            members = points[labels == j]
            if len(members):
                centroids[j] = members.mean(axis=0)

    d2 = _pairwise_sq_dists(points, centroids)
    labels = np.argmin(d2, axis=1)
    inertia = float(d2[np.arange(n), labels].sum())
    return centroids, labels, inertia


def assign_overlapping(points, centroids, r) -> OverlappingClusters:
    """Attach each point to its R nearest centroids (ties to lower id)."""
    k = centroids.shape[0]
    if r > k:
        raise ConfigurationError(f"R={r} exceeds K={k}")
    d2 = _pairwise_sq_dists(np.asarray(points, dtype=np.float64), centroids)
    # stable argsort: equal distances resolve to the lower centroid index
    nearest = np.argsort(d2, axis=1, kind="stable")[:, :r]
    assignments = np.sort(nearest, axis=1).astype(np.int32)
    return OverlappingClusters(
        k=k, assignments=assignments, centroids=centroids, inertia=float("nan")
    )


def item_grouping(matrix, cfg: GroupingConfig, algo="laplacian") -> OverlappingClusters:
    """End-to-end overlapping grouping of the items of an interaction matrix."""
    cfg.validate(matrix.m)
    eigs = spectral.EigsConfig(f=cfg.f, seed=cfg.seed)
    if algo == "laplacian":
        lap = graph_mod.build_laplacian(graph_mod.build_cooccurrence(matrix))
        embedding = spectral.top_eigenvectors(lap, eigs)
    elif algo == "svd":
        embedding = spectral.top_singular_triplets(matrix, eigs)
    else:
        raise ConfigurationError(f"unknown grouping algorithm {algo!r}")
    return cluster_embedding(embedding, cfg)


def cluster_activations(h, cfg: GroupingConfig, algo="laplacian") -> OverlappingClusters:
    """Group real-valued hidden activations (used when stacking layers).

    The co-occurrence adjacency generalizes to H^T H on the activation
    matrix; the rest of the pipeline is unchanged.
    """
    import scipy.sparse as sp

    h = np.asarray(h, dtype=np.float64)
    width = h.shape[1]
    cfg.validate(width)
    eigs = spectral.EigsConfig(f=cfg.f, seed=cfg.seed)
    if algo == "laplacian":
        y = h.T @ h
        deg = y.sum(axis=1)
        inv_sqrt = np.zeros_like(deg)
        nz = deg > 0
        inv_sqrt[nz] = 1.0 / np.sqrt(deg[nz])
        lap = graph_mod.NormalizedLaplacian(
            m=width,
            matrix=sp.csr_matrix(inv_sqrt[:, None] * y * inv_sqrt[None, :]),
            zero_degree_items=np.flatnonzero(~nz).astype(np.int64),
        )
        embedding = spectral.top_eigenvectors(lap, eigs)
    elif algo == "svd":
        sig, u = spectral.golub_kahan_topk(sp.csr_matrix(h), cfg.f, eigs)
        embedding = spectral.SpectralEmbedding(
            m=width, f=cfg.f, coords=u * sig, spectrum=sig
        )
    else:
        raise ConfigurationError(f"unknown grouping algorithm {algo!r}")
    return cluster_embedding(embedding, cfg)


def cluster_embedding(embedding, cfg: GroupingConfig) -> OverlappingClusters:
    """Normalize + K-means + R-nearest assignment on a precomputed embedding."""
    normalized = normalize_rows(embedding, cfg.normalization)
    centroids, _, inertia = kmeans(
        normalized.coords, cfg.k, max_iters=cfg.kmeans_max_iters, seed=cfg.seed
    )
    clusters = assign_overlapping(normalized.coords, centroids, cfg.r)
    clusters.inertia = inertia
    return clusters
