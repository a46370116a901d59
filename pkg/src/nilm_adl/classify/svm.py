"""Soft-margin kernel SVM trained by two-coefficient dual decomposition, and a one-vs-all wrapper."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

TAU = 1e-12


@dataclass(frozen=True)
class Kernel:
    kind: str = "poly"
    degree: int = 2
    gamma: float = 1.0
    coef0: float = 1.0

    def __post_init__(self) -> None:
        if self.kind not in ("poly", "linear"):
            raise ValueError(f"unsupported kernel {self.kind!r}")
        if self.kind == "poly" and self.degree < 1:
            raise ValueError("polynomial degree must be >= 1")

    def __call__(self, A, B) -> np.ndarray:
        dot = np.atleast_2d(A) @ np.atleast_2d(B).T
        if self.kind == "linear":
            return dot
        return (self.gamma * dot + self.coef0) ** self.degree


@dataclass
class BinaryMachine:
    support_vectors: np.ndarray
    dual_coef: np.ndarray  # alpha_i * y_i for each support vector
    bias: float
    kernel: Kernel
    C: float
    kkt_residual: float
    iterations: int
    converged: bool

    def decision_function(self, X) -> np.ndarray:
        if self.dual_coef.size == 0:
            return np.full(np.atleast_2d(X).shape[0], self.bias)
        return self.kernel(X, self.support_vectors) @ self.dual_coef + self.bias


def smo_train(
    X,
    y,
    kernel: Kernel = Kernel(),
    C: float = 1.0,
    tol: float = 1e-3,
    max_iter: int = 200_000,
) -> BinaryMachine:
    """Solve ``min 1/2 a'Qa - e'a  s.t.  y'a = 0, 0 <= a <= C`` with ``Q_ij = y_i y_j K_ij``.

    Each step updates the maximal-violating pair chosen with second-order
    information; iteration stops once the KKT gap ``m(a) - M(a)`` drops below ``tol``.
    ``y`` must be +1/-1.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if set(np.unique(y)) - {-1.0, 1.0}:
        raise ValueError("binary targets must be +1/-1")
    if C <= 0:
        raise ValueError("C must be positive")
    n = X.shape[0]
    K = kernel(X, X)
    Kd = np.diag(K).copy()
    alpha = np.zeros(n)
    grad = -np.ones(n)

    gap = np.inf
    it = 0
    while it < max_iter:
        yg = -y * grad
        up = ((y > 0) & (alpha < C)) | ((y < 0) & (alpha > 0))
        low = ((y > 0) & (alpha > 0)) | ((y < 0) & (alpha < C))
        if not up.any() or not low.any():
            gap = 0.0
            break
        i = int(np.argmax(np.where(up, yg, -np.inf)))
        m_up = yg[i]
        M_low = np.min(np.where(low, yg, np.inf))
        gap = m_up - M_low
        if gap < tol:
            break

        b = m_up - yg
        a = Kd[i] + Kd - 2.0 * K[i]
        a = np.where(a > 0, a, TAU)
        cand = low & (b > 0)
        j = int(np.argmin(np.where(cand, -(b * b) / a, np.inf)))

        yi, yj = y[i], y[j]
        quad = max(Kd[i] + Kd[j] - 2.0 * K[i, j], TAU)
        old_i, old_j = alpha[i], alpha[j]
        if yi != yj:
            delta = (-grad[i] - grad[j]) / quad
            diff = old_i - old_j
            ai, aj = old_i + delta, old_j + delta
            if diff > 0:
                if aj < 0:
                    aj, ai = 0.0, diff
            elif ai < 0:
                ai, aj = 0.0, -diff
            if diff > 0:
                if ai > C:
                    ai, aj = C, C - diff
            elif aj > C:
                aj, ai = C, C + diff
        else:
            delta = (grad[i] - grad[j]) / quad
            total = old_i + old_j
            ai, aj = old_i - delta, old_j + delta
            if total > C:
                if ai > C:
                    ai, aj = C, total - C
            elif aj < 0:
                aj, ai = 0.0, total
            if total > C:
                if aj > C:
                    aj, ai = C, total - C
            elif ai < 0:
                ai, aj = 0.0, total
        alpha[i], alpha[j] = ai, aj
        # Q_ti = y_t y_i K_ti
        grad += y * (K[:, i] * yi * (ai - old_i) + K[:, j] * yj * (aj - old_j))
        it += 1

    converged = gap < tol
    bias = -_rho(alpha, grad, y, C)
    sv = alpha > 0
    return BinaryMachine(
        X[sv].copy(), (alpha * y)[sv], float(bias), kernel, C, float(max(gap, 0.0)), it, converged
    )


def _rho(alpha, grad, y, C) -> float:
    yg = y * grad
    free = (alpha > 0) & (alpha < C)
    if free.any():
        return float(np.mean(yg[free]))
    # no free vectors: midpoint of the feasible interval
    up_bound = ((y > 0) & (alpha >= C)) | ((y < 0) & (alpha <= 0))
    low_bound = ((y > 0) & (alpha <= 0)) | ((y < 0) & (alpha >= C))
    ub = np.min(yg[low_bound]) if low_bound.any() else np.inf
    lb = np.max(yg[up_bound]) if up_bound.any() else -np.inf
    if not np.isfinite(ub) or not np.isfinite(lb):
        return float(ub if np.isfinite(ub) else lb)
    return float(0.5 * (ub + lb))


@dataclass
class SvmOvaModel:
    classes: np.ndarray
    n_features: int
    machines: list[BinaryMachine] = field(default_factory=list)

    def decision_values(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.n_features:
            raise ValueError(f"expected {self.n_features} features, got {X.shape[1]}")
        return np.column_stack([m.decision_function(X) for m in self.machines])

    def predict(self, X) -> np.ndarray:
        return self.classes[np.argmax(self.decision_values(X), axis=1)]

    def confidence(self, X) -> np.ndarray:
        """Softmax of decision values; a [0, 1] score for reporting only."""
        d = self.decision_values(X)
        e = np.exp(d - d.max(axis=1, keepdims=True))
        return e / e.sum(axis=1, keepdims=True)


def train_svm_ova(
    X,
    y,
    kernel: Kernel = Kernel(),
    C: float = 1.0,
    tol: float = 1e-3,
    labels=None,
) -> SvmOvaModel:
    """One binary machine per label (label vs the rest).

    ``labels`` lists the labels the model must cover; any that never occur in
    ``y`` are rejected.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y)
    present = np.unique(y)
    classes = present if labels is None else np.asarray(sorted(labels))
    missing = set(classes.tolist()) - set(present.tolist())
    if missing:
        raise ValueError(f"labels absent from training data: {sorted(missing)}")
    if classes.size < 2:
        raise ValueError("one-vs-all training needs at least two labels")
    machines = [smo_train(X, np.where(y == c, 1.0, -1.0), kernel, C, tol) for c in classes]
    return SvmOvaModel(classes, X.shape[1], machines)
