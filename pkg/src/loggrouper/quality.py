"""Cluster validity scoring and combo selection.

Silhouette and Calinski-Harabasz are computed per combo, min-max normalized
across the whole comparison set, and the best combo is the one with the
highest mean of the two normalized scores. Report numbers are rounded to six
significant digits; that rounded form is what gets persisted and compared.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .cluster import Algorithm, ClusterAssignment, pairwise_distances
from .errors import QualityError
from .vectorize import FeatureMatrix, VectorizerTag

# Fixed priority for breaking exact ties between combos.
ALGORITHM_ORDER: tuple[Algorithm, ...] = (
    Algorithm.DBSCAN,
    Algorithm.AGGLOMERATIVE,
    Algorithm.KMEANS,
    Algorithm.SPECTRAL,
)


@dataclass(frozen=True)
class Combo:
    """One cell of the comparison matrix."""

    vectorizer: VectorizerTag
    preprocessed: bool
    algorithm: Algorithm

    @property
    def key(self) -> str:
        variant = "preprocessed" if self.preprocessed else "raw"
        return f"{self.vectorizer.value}+{variant}+{self.algorithm.value}"

    def sort_key(self) -> tuple:
        return (self.vectorizer.value, self.preprocessed, self.algorithm.value)


@dataclass(frozen=True)
class QualityScore:
    """Raw validity scores for one combo."""

    combo: Combo
    sc: float
    ch: float
    n_clusters: int
    noise_fraction: float


@dataclass(frozen=True, eq=True)
class QualityReport:
    """Scores, normalizations, per-algorithm averages and the winning combo."""

    scores: tuple[QualityScore, ...]
    normalized: tuple[tuple[float, float], ...]
    group_averages: dict[Algorithm, tuple[float, float]]
    best_combo: Combo


def round6(value: float) -> float:
    """Round to 6 significant digits, the precision persisted in reports."""
    return float(f"{float(value):.6g}")


def silhouette_from_labels(rows: np.ndarray, labels: Sequence[int]) -> float:
    """Mean silhouette over points already stripped of noise."""
    labels = np.asarray(labels)
    n = rows.shape[0]
    unique = np.unique(labels)
    if unique.size < 2:
        raise QualityError("undefined silhouette: fewer than 2 clusters")
    if n != labels.shape[0]:
        raise QualityError("labels do not match rows")
    dist = pairwise_distances(rows)
    sums = np.stack([dist[:, labels == c].sum(axis=1) for c in unique], axis=1)
    counts = np.array([(labels == c).sum() for c in unique])
    own = np.searchsorted(unique, labels)
    scores = np.zeros(n)
    for i in range(n):
        size = counts[own[i]]
        if size <= 1:
            continue  # singleton: s = 0
        a = sums[i, own[i]] / (size - 1)
        other = [sums[i, c] / counts[c] for c in range(unique.size) if c != own[i]]
        b = min(other)
        denom = max(a, b)
        scores[i] = 0.0 if denom == 0.0 else (b - a) / denom
    return float(scores.mean())


def silhouette(matrix: FeatureMatrix, assignment: ClusterAssignment) -> float:
    """Mean silhouette coefficient; noise points are excluded entirely."""
    labels = np.asarray(assignment.labels)
    mask = labels >= 0
    return silhouette_from_labels(matrix.rows[mask], labels[mask])


def calinski_harabasz(matrix: FeatureMatrix, assignment: ClusterAssignment) -> float:
    """Variance-ratio score (B/(k-1)) / (W/(n-k)); noise points excluded."""
    labels = np.asarray(assignment.labels)
    mask = labels >= 0
    rows = matrix.rows[mask]
    labels = labels[mask]
    unique = np.unique(labels)
    k = unique.size
    n = rows.shape[0]
    if k < 2:
        raise QualityError("variance ratio needs at least 2 clusters")
    if k >= n:
        raise QualityError(f"variance ratio needs k < n, got k={k}, n={n}")
    grand = rows.mean(axis=0)
    between = 0.0
    within = 0.0
    for c in unique:
        members = rows[labels == c]
        centroid = members.mean(axis=0)
        between += members.shape[0] * float(np.sum((centroid - grand) ** 2))
        within += float(np.sum((members - centroid) ** 2))
    if within == 0.0:
        raise QualityError("zero within-cluster dispersion")
    return (between / (k - 1)) / (within / (n - k))


def normalize_scores(scores: Sequence[QualityScore]) -> list[tuple[float, float]]:
    """Min-max normalize sc and ch independently across the comparison set.

    A metric that is constant across the set maps to 0.5 everywhere. Fewer
    than two scores leave nothing to compare and raise.
    """
    if len(scores) < 2:
        raise QualityError("normalization needs at least 2 valid scores")

    def minmax(values: list[float]) -> list[float]:
        lo, hi = min(values), max(values)
        if hi == lo:
            return [0.5] * len(values)
        return [(v - lo) / (hi - lo) for v in values]

    nsc = minmax([s.sc for s in scores])
    nch = minmax([s.ch for s in scores])
    return list(zip(nsc, nch))


def _tie_rank(score: QualityScore) -> tuple:
    return (
        score.n_clusters,
        ALGORITHM_ORDER.index(score.combo.algorithm),
        score.combo.sort_key(),
    )


def _select(
    scores: Sequence[QualityScore],
    normalized: Sequence[tuple[float, float]],
) -> Combo:
    if not scores:
        raise QualityError("no combos to select from")
    ranked = sorted(
        range(len(scores)),
        key=lambda i: (
            -(normalized[i][0] + normalized[i][1]) / 2.0,
            _tie_rank(scores[i]),
        ),
    )
    return scores[ranked[0]].combo


def select_best(report: QualityReport) -> Combo:
    """Pick the combo with the highest mean normalized score.

    Exact ties prefer fewer clusters, then the fixed algorithm order.
    """
    return _select(report.scores, report.normalized)


def build_report(scores: Sequence[QualityScore]) -> QualityReport:
    """Assemble the full report with six-significant-digit numbers.

    Selection runs on the rounded values so the persisted report is
    self-consistent: re-running selection on loaded artifacts reproduces
    the same best combo.
    """
    ordered = sorted(scores, key=lambda s: s.combo.sort_key())
    rounded = [
        QualityScore(
            combo=s.combo,
            sc=round6(s.sc),
            ch=round6(s.ch),
            n_clusters=s.n_clusters,
            noise_fraction=round6(s.noise_fraction),
        )
        for s in ordered
    ]
    if len(rounded) == 1:
        normalized = [(0.5, 0.5)]
    else:
        normalized = [(round6(a), round6(b)) for a, b in normalize_scores(rounded)]
    averages: dict[Algorithm, tuple[float, float]] = {}
    for algorithm in ALGORITHM_ORDER:
        rows = [i for i, s in enumerate(rounded) if s.combo.algorithm is algorithm]
        if rows:
            averages[algorithm] = (
                round6(sum(normalized[i][0] for i in rows) / len(rows)),
                round6(sum(normalized[i][1] for i in rows) / len(rows)),
            )
    best = _select(rounded, normalized)
    return QualityReport(
        scores=tuple(rounded),
        normalized=tuple(normalized),
        group_averages=averages,
        best_combo=best,
    )
