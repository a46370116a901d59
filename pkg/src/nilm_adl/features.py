"""Filter-style feature scoring: Fisher discriminant ratios and Spearman rank correlation."""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.stats

FLDA = "FLDA"
SPEARMAN = "Spearman"


@dataclass(frozen=True)
class FeatureScores:
    method: str
    scores: tuple[tuple[int, float], ...]  # (feature_index, score), best first

    def to_json(self) -> str:
        return json.dumps(
            [{"index": i, "score": s, "method": self.method} for i, s in self.scores], indent=2
        )

    def as_array(self) -> np.ndarray:
        out = np.empty(len(self.scores))
        for i, s in self.scores:
            out[i] = s
        return out


def _ranked(method: str, values: np.ndarray) -> FeatureScores:
    order = sorted(range(values.size), key=lambda j: (-values[j], j))
    return FeatureScores(method, tuple((j, float(values[j])) for j in order))


@dataclass(frozen=True)
class ScatterMatrices:
    within: np.ndarray
    between: np.ndarray
    class_means: dict[int, np.ndarray]
    grand_mean: np.ndarray


def scatter_matrices(X, y) -> ScatterMatrices:
    """Within-class scatter (sum over classes of outer products about the class mean)
    and between-class scatter ``(1/C) sum_i (mu_i - mu)(mu_i - mu)^T``.

    ``mu`` is the mean over all rows.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y)
    classes = np.unique(y)
    if classes.size < 2:
        raise ValueError("scatter matrices need at least two classes")
    d = X.shape[1]
    grand = X.mean(axis=0)
    within = np.zeros((d, d))
    between = np.zeros((d, d))
    means = {}
    for c in classes:
        Xc = X[y == c]
        mu = Xc.mean(axis=0)
        means[int(c)] = mu
        centred = Xc - mu
        within += centred.T @ centred
        diff = (mu - grand)[:, None]
        between += diff @ diff.T
    between /= classes.size
    # symmetrize away rounding from the matrix products
    within = 0.5 * (within + within.T)
    between = 0.5 * (between + between.T)
    return ScatterMatrices(within, between, means, grand)


def _ridge(within: np.ndarray) -> float:
    d = within.shape[0]
    eps = 1e-6 * np.trace(within) / d
    return eps if eps > 0 else 1e-12


def flda_scores(X, y) -> FeatureScores:
    """Per-feature Fisher ratio ``S_B[j, j] / (S_W[j, j] + eps)``."""
    sm = scatter_matrices(X, y)
    eps = _ridge(sm.within)
    ratio = np.diag(sm.between) / (np.diag(sm.within) + eps)
    return _ranked(FLDA, ratio)


@dataclass(frozen=True)
class FisherProjection:
    W: np.ndarray  # (d, C-1) discriminant directions
    bias: np.ndarray  # (C-1,)
    eigenvalues: np.ndarray

    def transform(self, X) -> np.ndarray:
        return np.asarray(X, dtype=float) @ self.W + self.bias


def flda_projection(X, y) -> FisherProjection:
    """Discriminant directions from the generalized eigenproblem ``S_B w = lam (S_W + eps I) w``.

    The bias centres the projected class means on zero, i.e. it sits at their
    midpoint for two classes.
    """
    sm = scatter_matrices(X, y)
    d = sm.within.shape[0]
    eps = _ridge(sm.within)
    vals, vecs = scipy.linalg.eigh(sm.between, sm.within + eps * np.eye(d))
    n_dirs = min(len(sm.class_means) - 1, d)
    top = np.argsort(vals)[::-1][:n_dirs]
    W = vecs[:, top]
    projected = np.array([mu @ W for mu in sm.class_means.values()])
    return FisherProjection(W, -projected.mean(axis=0), vals[top])


def average_ranks(values) -> np.ndarray:
    """1-based ranks; ties share the mean of the positions they span."""
    return scipy.stats.rankdata(np.asarray(values, dtype=float), method="average")


def spearman_rho_from_ranks(rx, ry) -> float:
    """``1 - 6 sum(d^2) / (n (n^2 - 1))`` for two rank sequences."""
    rx = np.asarray(rx, dtype=float)
    ry = np.asarray(ry, dtype=float)
    n = rx.size
    if n < 2 or ry.size != n:
        raise ValueError("need two rank sequences of equal length >= 2")
    d2 = np.sum((rx - ry) ** 2)
    return float(1.0 - 6.0 * d2 / (n * (n * n - 1)))


def spearman_rho(x, y) -> float:
    return spearman_rho_from_ranks(average_ranks(x), average_ranks(y))


def spearman_scores(X, y) -> FeatureScores:
    """Score each column by ``|rho|`` against the integer label codes."""
    X = np.asarray(X, dtype=float)
    if X.shape[0] < 2:
        raise ValueError("Spearman scoring needs at least two rows")
    ry = average_ranks(np.asarray(y, dtype=float))
    rho = np.array([spearman_rho_from_ranks(average_ranks(X[:, j]), ry) for j in range(X.shape[1])])
    return _ranked(SPEARMAN, np.abs(rho))


def select_top_k(scores: FeatureScores, k: int) -> list[int]:
    if not 1 <= k <= len(scores.scores):
        raise ValueError(f"k must be in [1, {len(scores.scores)}]")
    # scores are already ordered by (-score, index)
    return [i for i, _ in scores.scores[:k]]


def score_features(X, y, method: str) -> FeatureScores:
    key = method.lower()
    if key in ("flda", "fisher"):
        return flda_scores(X, y)
    if key in ("sc", "spearman"):
        return spearman_scores(X, y)
    raise ValueError(f"unknown feature scoring method {method!r}")
