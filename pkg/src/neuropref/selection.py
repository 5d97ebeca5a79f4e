"""Feature ranking by infinite-path energy over a feature graph.

Features are nodes of a weighted graph mixing class relevance (Fisher
score) with non-redundancy (1 - |Spearman|). The score of a feature is
the summed weight of all paths leaving it, computed in closed form as a
row sum of (I - rA)^(-1) - I with damping r below the spectral radius
bound. The adjacency builder is pluggable.
"""

from __future__ import annotations

import fnmatch
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import stats

from .errors import DegenerateLabelsError, KOutOfRangeError

EPS = 1e-12

AdjacencyBuilder = Callable[[np.ndarray, np.ndarray, float], np.ndarray]


@dataclass(frozen=True)
class FeatureRanking:
    """Scores plus the induced order (descending, ties by column index)."""

    scores: np.ndarray
    order: np.ndarray
    alpha: float
    damping_r: float

    def to_dict(self) -> dict:
        return {
            "scores": [None if not np.isfinite(s) else float(s) for s in self.scores],
            "order": [int(i) for i in self.order],
            "alpha": self.alpha,
            "damping_r": self.damping_r,
        }


def fisher_scores(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Two-class Fisher criterion per column, min-max normalized to [0,1]."""
    pos, neg = x[y > 0], x[y <= 0]
    if len(pos) == 0 or len(neg) == 0:
        raise DegenerateLabelsError("both classes are required for Fisher scores")
    h = (pos.mean(axis=0) - neg.mean(axis=0)) ** 2 / (
        pos.var(axis=0) + neg.var(axis=0) + EPS
    )
    span = h.max() - h.min()
    if span < EPS:
        return np.zeros_like(h)
    return (h - h.min()) / span


def spearman_abs(x: np.ndarray) -> np.ndarray:
    """|Spearman rho| between all column pairs (ranks + Pearson)."""
    ranks = stats.rankdata(x, axis=0)
    with np.errstate(invalid="ignore"):
        rho = np.corrcoef(ranks.T)
    rho = np.atleast_2d(rho)
    return np.abs(np.nan_to_num(rho, nan=0.0))


def default_adjacency(x: np.ndarray, y: np.ndarray, alpha: float) -> np.ndarray:
    """A_ij = alpha * max(h_i, h_j) + (1 - alpha) * (1 - |spearman_ij|)."""
    h = fisher_scores(x, y)
    redundancy = 1.0 - spearman_abs(x)
    return alpha * np.maximum(h[:, None], h[None, :]) + (1.0 - alpha) * redundancy


def path_energy_scores(adjacency: np.ndarray, damping_r: float) -> np.ndarray:
    """Row sums of (I - rA)^(-1) - I: total damped path weight per node."""
    d = adjacency.shape[0]
    ones = np.ones(d)
    return np.linalg.solve(np.eye(d) - damping_r * adjacency, ones) - ones


def truncated_path_scores(
    adjacency: np.ndarray, damping_r: float, n_terms: int
) -> np.ndarray:
    """Series oracle: row sums of sum_{l=1..n_terms} (rA)^l."""
    d = adjacency.shape[0]
    m = damping_r * adjacency
    acc = np.zeros(d)
    v = np.ones(d)
    for _ in range(n_terms):
        v = m @ v
        acc += v
    return acc


def spectral_radius(adjacency: np.ndarray) -> float:
    return float(np.max(np.abs(np.linalg.eigvalsh(adjacency))))


def rank_features(
    x: np.ndarray,
    y: np.ndarray,
    alpha: float = 0.5,
    damping_scale: float = 0.9,
    adjacency_builder: AdjacencyBuilder = default_adjacency,
) -> FeatureRanking:
    """Score every feature by damped infinite-path energy.

    Zero-variance columns are excluded from the graph and scored -inf
    (they sort last). Damping is ``damping_scale / spectral_radius(A)``
    so the Neumann series converges geometrically.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y)
    if x.ndim != 2 or x.shape[1] < 2:
        raise ValueError(f"need a matrix with >= 2 features, got shape {x.shape}")
    if len(np.unique(y)) < 2:
        raise DegenerateLabelsError("both classes must be present")

    n_features = x.shape[1]
    variances = x.var(axis=0)
    included = np.flatnonzero(variances > EPS)
    scores = np.full(n_features, -np.inf)
    damping_r = 0.0
    if len(included) >= 2:
        a = adjacency_builder(x[:, included], y, alpha)
        rho = spectral_radius(a)
        if rho > EPS:
            damping_r = damping_scale / rho
            scores[included] = path_energy_scores(a, damping_r)
        else:
            scores[included] = 0.0
    elif len(included) == 1:
        scores[included] = 0.0

    order = np.lexsort((np.arange(n_features), -scores))
    return FeatureRanking(scores, order, alpha, damping_r)


def select_top_k(ranking: FeatureRanking, k: int = 20) -> list[int]:
    """First k ranked feature indices (stable under re-runs)."""
    n = len(ranking.scores)
    if not (1 <= k <= n):
        raise KOutOfRangeError(f"k={k} outside [1, {n}]")
    return [int(i) for i in ranking.order[:k]]


def resolve_feature_override(
    names: tuple[str, ...] | list[str], requested: list[str]
) -> list[int]:
    """Expand a manual feature list (exact names or glob patterns).

    Returns column indices in pattern order then canonical column order;
    duplicates collapse to the first occurrence.
    """
    selected: list[int] = []
    seen: set[int] = set()
    for pattern in requested:
        matches = [i for i, n in enumerate(names) if fnmatch.fnmatchcase(n, pattern)]
        if not matches:
            raise KOutOfRangeError(f"feature override {pattern!r} matches no columns")
        for i in matches:
            if i not in seen:
                selected.append(i)
                seen.add(i)
    return selected
