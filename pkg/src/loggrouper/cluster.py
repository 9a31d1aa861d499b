"""Clustering algorithms and parameter selection.

Four algorithms operate on FeatureMatrix rows with plain Euclidean geometry:
Lloyd k-means with k-means++ seeding, Ward agglomerative merging via the
Lance-Williams update, density clustering over closed eps-balls, and spectral
clustering on the normalized graph Laplacian. Tie-breaking rules are fixed
everywhere so equal inputs give byte-equal assignments.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Sequence

import numpy as np

from .errors import ClusterError
from .vectorize import FeatureMatrix


class Algorithm(Enum):
    KMEANS = "kmeans"
    AGGLOMERATIVE = "agglomerative"
    DBSCAN = "dbscan"
    SPECTRAL = "spectral"


@dataclass
class ClusterAssignment:
    """Labels for every record of a matrix; -1 marks density-scan noise."""

    record_ids: tuple[str, ...]
    labels: tuple[int, ...]
    k: int
    algorithm: Algorithm
    params: dict
    seed: int = 0

    def __post_init__(self) -> None:
        if len(self.labels) != len(self.record_ids):
            raise ClusterError("labels do not match record ids")
        present = sorted(set(self.labels) - {-1})
        if present != list(range(self.k)):
            raise ClusterError(f"labels must cover 0..{self.k - 1} exactly, got {present}")
        if -1 in self.labels and self.algorithm is not Algorithm.DBSCAN:
            raise ClusterError("only dbscan may emit noise labels")

    @property
    def noise_count(self) -> int:
        return sum(1 for label in self.labels if label == -1)


def _pairwise_sq(rows: np.ndarray) -> np.ndarray:
    sq = np.sum(rows**2, axis=1)
    d2 = sq[:, None] + sq[None, :] - 2.0 * (rows @ rows.T)
    np.maximum(d2, 0.0, out=d2)
    np.fill_diagonal(d2, 0.0)
    return d2


def pairwise_distances(rows: np.ndarray) -> np.ndarray:
    """Dense Euclidean distance matrix."""
    return np.sqrt(_pairwise_sq(rows))


def _relabel_by_first_appearance(labels: np.ndarray) -> np.ndarray:
    mapping: dict[int, int] = {}
    out = np.empty_like(labels)
    for i, label in enumerate(labels):
        if label == -1:
            out[i] = -1
            continue
        if label not in mapping:
            mapping[label] = len(mapping)
        out[i] = mapping[label]
    return out


def within_cluster_sse(rows: np.ndarray, labels: Sequence[int]) -> float:
    """Sum of squared distances to cluster centroids, noise excluded."""
    labels = np.asarray(labels)
    total = 0.0
    for label in np.unique(labels):
        if label == -1:
            continue
        members = rows[labels == label]
        total += float(np.sum((members - members.mean(axis=0)) ** 2))
    return total


def _kmeans_pp_init(rows: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = rows.shape[0]
    centers = np.empty((k, rows.shape[1]))
    centers[0] = rows[rng.integers(n)]
    d2 = np.sum((rows - centers[0]) ** 2, axis=1)
    for j in range(1, k):
        total = d2.sum()
        if total <= 0.0:
            idx = int(rng.integers(n))
        else:
            idx = int(rng.choice(n, p=d2 / total))
        centers[j] = rows[idx]
        np.minimum(d2, np.sum((rows - centers[j]) ** 2, axis=1), out=d2)
    return centers


def _lloyd(
    rows: np.ndarray, centers: np.ndarray, max_iter: int, tol: float
) -> tuple[np.ndarray, np.ndarray, float, list[float]]:
    n, k = rows.shape[0], centers.shape[0]
    history: list[float] = []
    labels = np.zeros(n, dtype=int)
    for _ in range(max_iter):
        d2 = (
            np.sum(rows**2, axis=1)[:, None]
            - 2.0 * (rows @ centers.T)
            + np.sum(centers**2, axis=1)[None, :]
        )
        labels = np.argmin(d2, axis=1)
        # repair empty clusters with the point farthest from its own centroid
        for empty in range(k):
            while np.sum(labels == empty) == 0:
                own = np.take_along_axis(d2, labels[:, None], axis=1).ravel()
                sizes = np.bincount(labels, minlength=k)
                movable = sizes[labels] > 1
                if not np.any(movable):
                    raise ClusterError("cannot repair empty cluster")
                candidates = np.where(movable, own, -np.inf)
                labels[int(np.argmax(candidates))] = empty
        new_centers = np.empty_like(centers)
        for j in range(k):
            new_centers[j] = rows[labels == j].mean(axis=0)
        sse = float(np.sum((rows - new_centers[labels]) ** 2))
        history.append(sse)
        movement = float(np.max(np.linalg.norm(new_centers - centers, axis=1)))
        centers = new_centers
        if movement < tol:
            break
    return labels, centers, history[-1], history


def _kmeans_rows(
    rows: np.ndarray,
    k: int,
    seed: int,
    n_init: int,
    max_iter: int,
    tol: float,
) -> tuple[np.ndarray, float, list[float]]:
    rng = np.random.default_rng(seed)
    best: tuple[float, np.ndarray, list[float]] | None = None
    for _ in range(max(1, n_init)):
        centers = _kmeans_pp_init(rows, k, rng)
        labels, _, sse, history = _lloyd(rows, centers, max_iter, tol)
        if best is None or sse < best[0]:
            best = (sse, labels, history)
    sse, labels, history = best
    return _relabel_by_first_appearance(labels), sse, history


def kmeans(
    matrix: FeatureMatrix,
    k: int,
    seed: int,
    n_init: int = 10,
    max_iter: int = 300,
    tol: float = 1e-6,
) -> ClusterAssignment:
    """Lloyd k-means with k-means++ seeding and empty-cluster repair.

    Runs n_init seedings from one generator and keeps the lowest-SSE result;
    iteration stops when the largest centroid movement drops below tol.
    """
    rows = matrix.rows
    n = rows.shape[0]
    if not 1 <= k <= n:
        raise ClusterError(f"k={k} outside [1, {n}]")
    labels, sse, history = _kmeans_rows(rows, k, seed, n_init, max_iter, tol)
    return ClusterAssignment(
        record_ids=matrix.record_ids,
        labels=tuple(int(x) for x in labels),
        k=k,
        algorithm=Algorithm.KMEANS,
        params={"k": k, "sse": sse, "n_init": n_init, "sse_history": history},
        seed=seed,
    )


def agglomerative(matrix: FeatureMatrix, k: int, linkage: str = "ward") -> ClusterAssignment:
    """Bottom-up merging by Lance-Williams distance updates.

    Ward linkage merges the pair with the smallest variance increase;
    average linkage uses mean inter-cluster distance. Equal merge costs are
    broken by the smallest (i, j) index pair.
    """
    if linkage not in ("ward", "average"):
        raise ClusterError(f"unknown linkage {linkage!r}")
    rows = matrix.rows
    n = rows.shape[0]
    if not 1 <= k <= n:
        raise ClusterError(f"k={k} outside [1, {n}]")
    dist = _pairwise_sq(rows) if linkage == "ward" else pairwise_distances(rows)
    np.fill_diagonal(dist, np.inf)
    sizes = np.ones(n)
    alive = np.ones(n, dtype=bool)
    cluster_of = np.arange(n)
    for _ in range(n - k):
        masked = np.where(alive[:, None] & alive[None, :], dist, np.inf)
        flat = int(np.argmin(masked))
        i, j = divmod(flat, n)
        if i > j:
            i, j = j, i
        others = alive.copy()
        others[i] = others[j] = False
        if linkage == "ward":
            si, sj, sh = sizes[i], sizes[j], sizes[others]
            merged = (
                (si + sh) * dist[i, others]
                + (sj + sh) * dist[j, others]
                - sh * dist[i, j]
            ) / (si + sj + sh)
        else:
            merged = (sizes[i] * dist[i, others] + sizes[j] * dist[j, others]) / (
                sizes[i] + sizes[j]
            )
        dist[i, others] = merged
        dist[others, i] = merged
        sizes[i] += sizes[j]
        alive[j] = False
        cluster_of[cluster_of == j] = i
    labels = _relabel_by_first_appearance(cluster_of)
    return ClusterAssignment(
        record_ids=matrix.record_ids,
        labels=tuple(int(x) for x in labels),
        k=k,
        algorithm=Algorithm.AGGLOMERATIVE,
        params={"k": k, "linkage": linkage},
    )


def dbscan(matrix: FeatureMatrix, eps: float, min_samples: int) -> ClusterAssignment:
    """Density clustering over closed eps-balls (distance <= eps).

    Core points need min_samples neighbors counting themselves. Clusters are
    connected components of core points; non-core points join their nearest
    core's cluster (ties broken by the core with the lexicographically
    smallest coordinates) or become noise. Labels are ordered by each
    cluster's first core point.
    """
    if eps <= 0:
        raise ClusterError(f"eps must be positive, got {eps}")
    if min_samples < 1:
        raise ClusterError(f"min_samples must be >= 1, got {min_samples}")
    rows = matrix.rows
    n = rows.shape[0]
    dist = pairwise_distances(rows)
    within = dist <= eps
    core = within.sum(axis=1) >= min_samples
    labels = np.full(n, -1, dtype=int)
    component = np.full(n, -1, dtype=int)
    n_components = 0
    for start in range(n):
        if not core[start] or component[start] != -1:
            continue
        stack = [start]
        component[start] = n_components
        while stack:
            node = stack.pop()
            for neighbor in np.flatnonzero(within[node] & core):
                if component[neighbor] == -1:
                    component[neighbor] = n_components
                    stack.append(int(neighbor))
        n_components += 1
    labels[core] = component[core]
    core_idx = np.flatnonzero(core)
    for point in np.flatnonzero(~core):
        reachable = core_idx[within[point, core_idx]]
        if reachable.size == 0:
            continue
        dists = dist[point, reachable]
        nearest = reachable[dists == dists.min()]
        if nearest.size > 1:
            order = np.lexsort(rows[nearest].T[::-1])
            chosen = int(nearest[order[0]])
        else:
            chosen = int(nearest[0])
        labels[point] = component[chosen]
    return ClusterAssignment(
        record_ids=matrix.record_ids,
        labels=tuple(int(x) for x in labels),
        k=n_components,
        algorithm=Algorithm.DBSCAN,
        params={"eps": float(eps), "min_samples": int(min_samples)},
    )


def _spectral_embedding(affinity: np.ndarray, k: int) -> np.ndarray:
    degree = affinity.sum(axis=1)
    if np.any(degree <= 0):
        raise ClusterError("degenerate affinity: isolated node with zero degree")
    inv_sqrt = 1.0 / np.sqrt(degree)
    laplacian = np.eye(affinity.shape[0]) - inv_sqrt[:, None] * affinity * inv_sqrt[None, :]
    _, vectors = np.linalg.eigh(laplacian)
    embedding = vectors[:, :k].copy()
    norms = np.linalg.norm(embedding, axis=1)
    nonzero = norms > 0
    embedding[nonzero] /= norms[nonzero, None]
    return embedding


def spectral_from_affinity(
    affinity: np.ndarray,
    k: int,
    seed: int,
    record_ids: Sequence[str] | None = None,
    extra_params: dict | None = None,
) -> ClusterAssignment:
    """Spectral clustering from an explicit symmetric affinity matrix."""
    affinity = np.asarray(affinity, dtype=float)
    n = affinity.shape[0]
    if affinity.shape != (n, n):
        raise ClusterError("affinity must be square")
    if not 2 <= k <= n:
        raise ClusterError(f"k={k} outside [2, {n}]")
    embedding = _spectral_embedding(affinity, k)
    labels, _, _ = _kmeans_rows(embedding, k, seed, n_init=10, max_iter=300, tol=1e-6)
    ids = tuple(record_ids) if record_ids is not None else tuple(str(i) for i in range(n))
    params = {"k": k}
    if extra_params:
        params.update(extra_params)
    return ClusterAssignment(
        record_ids=ids,
        labels=tuple(int(x) for x in labels),
        k=k,
        algorithm=Algorithm.SPECTRAL,
        params=params,
        seed=seed,
    )


def spectral(matrix: FeatureMatrix, k: int, seed: int) -> ClusterAssignment:
    """Spectral clustering with a Gaussian affinity.

    Affinity w_ij = exp(-d_ij^2 / (2 sigma^2)) with sigma the median pairwise
    distance; k-means runs on the row-normalized eigenvectors of the smallest
    eigenvalues of the normalized Laplacian. All-identical inputs make the
    affinity degenerate.
    """
    rows = matrix.rows
    n = rows.shape[0]
    if not 2 <= k <= n:
        raise ClusterError(f"k={k} outside [2, {n}]")
    dist = pairwise_distances(rows)
    sigma = float(np.median(dist[np.triu_indices(n, k=1)]))
    if sigma <= 0.0:
        raise ClusterError("degenerate affinity: median pairwise distance is zero")
    affinity = np.exp(-(dist**2) / (2.0 * sigma**2))
    assignment = spectral_from_affinity(
        affinity, k, seed, record_ids=matrix.record_ids, extra_params={"sigma": sigma}
    )
    return assignment


def elbow_point(ks: Sequence[int], values: Sequence[float]) -> int:
    """Pick the k of maximum perpendicular distance to the curve's chord.

    Both axes are min-max normalized first; endpoints are excluded and ties
    go to the smaller k. Needs at least 3 points.
    """
    if len(ks) != len(values):
        raise ClusterError("ks and values differ in length")
    if len(ks) < 3:
        raise ClusterError("elbow selection needs at least 3 k values")
    ks_arr = np.asarray(ks, dtype=float)
    vals = np.asarray(values, dtype=float)
    if np.any(np.diff(ks_arr) <= 0):
        raise ClusterError("ks must be strictly increasing")
    x = (ks_arr - ks_arr[0]) / (ks_arr[-1] - ks_arr[0])
    span = vals.max() - vals.min()
    y = (vals - vals.min()) / span if span > 0 else np.zeros_like(vals)
    ax, ay = x[0], y[0]
    bx, by = x[-1], y[-1]
    chord = max(float(np.hypot(bx - ax, by - ay)), 1e-300)
    distances = np.abs((bx - ax) * (ay - y) - (ax - x) * (by - ay)) / chord
    interior = distances[1:-1]
    return int(ks[1 + int(np.argmax(interior))])


@dataclass
class ElbowCurve:
    """SSE per candidate k and the chosen elbow."""

    ks: tuple[int, ...]
    values: tuple[float, ...]
    chosen_k: int


def elbow_select_k(
    matrix: FeatureMatrix,
    k_range: Sequence[int],
    clusterer: Algorithm,
    seed: int,
) -> ElbowCurve:
    """Run a k-taking clusterer across k_range and pick k at the elbow."""
    if clusterer not in (Algorithm.KMEANS, Algorithm.AGGLOMERATIVE, Algorithm.SPECTRAL):
        raise ClusterError(f"{clusterer.value} does not take a k parameter")
    ks = sorted(set(int(k) for k in k_range))
    n = matrix.n_records
    if any(k < 2 or k > n for k in ks):
        raise ClusterError(f"k range must lie within [2, {n}]")
    if len(ks) < 3:
        raise ClusterError("elbow selection needs at least 3 k values")
    values = []
    for k in ks:
        assignment = run_clusterer(matrix, clusterer, k=k, seed=seed)
        values.append(within_cluster_sse(matrix.rows, assignment.labels))
    chosen = elbow_point(ks, values)
    return ElbowCurve(ks=tuple(ks), values=tuple(values), chosen_k=chosen)


def run_clusterer(
    matrix: FeatureMatrix,
    algorithm: Algorithm,
    k: int | None = None,
    seed: int = 0,
    eps: float | None = None,
    min_samples: int | None = None,
) -> ClusterAssignment:
    """Dispatch to one algorithm with its relevant parameters."""
    if algorithm is Algorithm.KMEANS:
        return kmeans(matrix, k, seed)
    if algorithm is Algorithm.AGGLOMERATIVE:
        return agglomerative(matrix, k)
    if algorithm is Algorithm.SPECTRAL:
        return spectral(matrix, k, seed)
    if algorithm is Algorithm.DBSCAN:
        return dbscan(matrix, eps, min_samples)
    raise ClusterError(f"unknown algorithm {algorithm!r}")


def default_min_samples(dims: int) -> int:
    """Density-scan default: max(4, 2 * dims); callers cap it at n - 1."""
    return max(4, 2 * int(dims))


def greedy_eps(matrix: FeatureMatrix, min_samples: int, seed: int = 0) -> tuple[float, dict]:
    """Greedy epsilon search over k-distance deciles.

    Candidates are the 10%..90% deciles of the sorted (min_samples-1)-nearest
    neighbor distances. Each candidate is scored by the silhouette over
    non-noise points of the resulting density scan; candidates yielding fewer
    than 2 clusters or more than 50% noise score -inf. Smallest eps wins ties.
    Raises when no candidate is viable.
    """
    from .quality import silhouette_from_labels

    rows = matrix.rows
    n = rows.shape[0]
    if n < min_samples + 1:
        raise ClusterError(f"need at least {min_samples + 1} points")
    dist = pairwise_distances(rows)
    order = np.sort(dist, axis=1)
    rank = max(1, min_samples - 1)
    kdist = np.sort(order[:, rank])
    candidates = sorted(set(float(np.quantile(kdist, q / 10.0)) for q in range(1, 10)))
    best: tuple[float, float] | None = None
    tried: list[dict] = []
    for eps in candidates:
        if eps <= 0.0:
            tried.append({"eps": eps, "score": None, "reason": "non-positive eps"})
            continue
        assignment = dbscan(matrix, eps, min_samples)
        noise_fraction = assignment.noise_count / n
        if assignment.k < 2 or noise_fraction > 0.5:
            tried.append({"eps": eps, "score": None, "reason": "clusters<2 or noise>0.5"})
            continue
        labels = np.asarray(assignment.labels)
        mask = labels >= 0
        score = silhouette_from_labels(rows[mask], labels[mask])
        tried.append({"eps": eps, "score": score, "reason": None})
        if best is None or score > best[1]:
            best = (eps, score)
    if best is None:
        raise ClusterError("no viable epsilon among k-distance deciles")
    return best[0], {"candidates": tried, "eps": best[0], "silhouette": best[1]}
