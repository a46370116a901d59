"""Multilevel force-directed layout: heavy-edge coarsening, coarsest-level layout,
prolongation and refinement."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

from .forces import attraction, laplacian, repulsion, separate_coincident

# forces weaker than FORCE_FLOOR * k * max(1, weighted degree) move
# proportionally, so refinement settles on a true equilibrium instead of
# oscillating at the step length; the degree factor keeps heavily weighted
# (coarse) vertices from forcing a tiny global step
FORCE_FLOOR = 0.05


def heavy_edge_matching(adjacency) -> np.ndarray:
    """Coarse parent index for every vertex.

    Vertices are visited by ascending degree (ties by index); each unmatched
    vertex pairs with its unmatched neighbour of largest weight (ties to the
    lower index). Diagonal entries are not edges.
    """
    A = sp.csr_matrix(adjacency)
    n = A.shape[0]
    degree = np.diff(A.indptr) - (A.diagonal() != 0)
    order = np.lexsort((np.arange(n), degree))
    parent = np.full(n, -1, dtype=np.intp)
    n_coarse = 0
    for u in order:
        if parent[u] >= 0:
            continue
        cols = A.indices[A.indptr[u] : A.indptr[u + 1]]
        vals = A.data[A.indptr[u] : A.indptr[u + 1]]
        best, best_w = -1, 0.0
        for v, w in sorted(zip(cols, vals)):
            if v != u and parent[v] < 0 and w > best_w:
                best, best_w = v, w
        parent[u] = n_coarse
        if best >= 0:
            parent[best] = n_coarse
        n_coarse += 1
    return parent


def prolongation_matrix(parent: np.ndarray) -> sp.csr_matrix:
    """0/1 matrix of shape (n_fine, n_coarse) with ``P[i, parent[i]] = 1``."""
    n = parent.size
    return sp.csr_matrix((np.ones(n), (np.arange(n), parent)), shape=(n, int(parent.max()) + 1))


def coarsen(adjacency) -> tuple[sp.csr_matrix, sp.csr_matrix]:
    """(coarse adjacency ``P^T G P``, prolongation ``P``).

    The coarse diagonal keeps the weight of edges collapsed inside a merged
    pair; force computations ignore it.
    """
    G = sp.csr_matrix(adjacency, dtype=float)
    P = prolongation_matrix(heavy_edge_matching(G))
    return sp.csr_matrix(P.T @ G @ P), P


@dataclass
class LayoutResult:
    positions: np.ndarray
    converged: bool
    levels: list[int]  # vertex count per level, finest first
    iterations: list[int]


def force_directed(
    adjacency,
    x: np.ndarray,
    k: float = 1.0,
    tol: float = 1e-3,
    theta: float = 1.2,
    max_iter: int = 500,
    step: float | None = None,
    rng: np.random.Generator | None = None,
) -> tuple[np.ndarray, bool, int]:
    """Adaptive-step refinement under repulsion ``k/d^2`` and weighted attraction ``-k d w``.

    All vertices move together each iteration by ``step * f / max(|f|, floor)``
    with ``floor = FORCE_FLOOR * k * max(1, weighted degree)``.
    The step shrinks by 0.9 on oscillation (the force energy rises or the move
    field reverses against the previous one) and grows by 1.1 after five
    consecutive steady iterations. Stops when the largest move is below
    ``tol * k``.
    """
    rng = np.random.default_rng(0) if rng is None else rng
    x = np.array(x, dtype=float)
    n = x.shape[0]
    if n < 2:
        return x, True, 0
    step = k if step is None else step
    lap = laplacian(adjacency)
    floor = FORCE_FLOOR * k * np.maximum(1.0, lap.diagonal())
    energy_prev = np.inf
    move_prev = np.zeros_like(x)
    progress = 0
    for it in range(1, max_iter + 1):
        x = separate_coincident(x, k, rng)
        f = repulsion(x, k, theta) + attraction(x, adjacency, k, lap)
        norm = np.sqrt(np.sum(f * f, axis=1))
        energy = float(np.sum(norm * norm))
        move = f * (step / np.maximum(norm, floor))[:, None]
        x = x + move
        if energy >= energy_prev or np.sum(move * move_prev) < 0:
            progress = 0
            step *= 0.9
        else:
            progress += 1
            if progress >= 5:
                progress = 0
                step *= 1.1
        energy_prev = energy
        move_prev = move
        if np.max(np.sqrt(np.sum(move * move, axis=1))) < tol * k:
            return x, True, it
    return x, False, max_iter


def _layout_component(
    G: sp.csr_matrix,
    k: float,
    tol: float,
    min_size: int,
    p: float,
    theta: float,
    max_iter: int,
    rng: np.random.Generator,
    coarsest_offset: np.ndarray,
) -> LayoutResult:
    n = G.shape[0]
    if n == 1:
        return LayoutResult(np.zeros((1, 2)), True, [1], [0])
    coarse, P = coarsen(G)
    n_coarse = coarse.shape[0]
    if n_coarse < min_size or n_coarse / n > p:
        # coarsest level: seeded random start, spread to about k per vertex
        side = k * np.sqrt(n)
        x = rng.uniform(-side / 2, side / 2, size=(n, 2)) + coarsest_offset
        x, ok, its = force_directed(G, x, k, tol, theta, max_iter, step=k, rng=rng)
        return LayoutResult(x, ok, [n], [its])
    sub = _layout_component(coarse, k, tol, min_size, p, theta, max_iter, rng, coarsest_offset)
    x = P @ sub.positions
    x, ok, its = force_directed(G, x, k, tol, theta, max_iter, step=0.2 * k, rng=rng)
    return LayoutResult(x, ok and sub.converged, [n] + sub.levels, [its] + sub.iterations)


def multilevel_layout(
    adjacency,
    tol: float = 1e-3,
    min_size: int = 10,
    p: float = 0.75,
    seed: int = 0,
    *,
    k: float = 1.0,
    theta: float = 1.2,
    max_iter: int = 500,
    coarsest_offset=(0.0, 0.0),
) -> LayoutResult:
    """2-D coordinates for every vertex.

    Each connected component is laid out on its own; components after the
    first are placed side by side to its right. ``coarsest_offset`` shifts the
    random start of the coarsest level.
    """
    G = sp.csr_matrix(adjacency, dtype=float)
    n = G.shape[0]
    if n == 0:
        return LayoutResult(np.zeros((0, 2)), True, [0], [0])
    offset = np.asarray(coarsest_offset, dtype=float)
    n_comp, comp = connected_components(G, directed=False)
    rng = np.random.default_rng(seed)
    positions = np.zeros((n, 2))
    converged = True
    levels: list[int] = []
    iterations: list[int] = []
    cursor = None
    for c in range(n_comp):
        idx = np.nonzero(comp == c)[0]
        res = _layout_component(G[idx][:, idx], k, tol, min_size, p, theta, max_iter, rng, offset)
        pos = res.positions
        if cursor is not None:
            pos = pos - [pos[:, 0].min() - cursor, pos[:, 1].mean() - offset[1]]
        positions[idx] = pos
        cursor = positions[idx, 0].max() + 2 * k
        converged &= res.converged
        if c == 0 or len(res.levels) > len(levels):
            levels, iterations = res.levels, res.iterations
    return LayoutResult(positions, converged, levels, iterations)
