"""Pairwise force laws and their exact / Barnes-Hut accumulations over a 2-D layout."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp


def repulsion_force(k: float, d: float) -> float:
    """Magnitude ``k / d**2``, pushing the pair apart."""
    if d <= 0:
        raise ValueError("repulsion is undefined at zero distance")
    return k / (d * d)


def attraction_force(k: float, d: float) -> float:
    """Signed magnitude ``-k * d``: negative pulls the pair together."""
    if d < 0:
        raise ValueError("distance must be non-negative")
    return -k * d


def separate_coincident(x: np.ndarray, k: float, rng: np.random.Generator) -> np.ndarray:
    """Nudge exact duplicates apart by a ``1e-6 * k`` jitter (the first copy stays put)."""
    _, first, inverse = np.unique(x, axis=0, return_index=True, return_inverse=True)
    inverse = np.asarray(inverse).ravel()
    dup = first[inverse] != np.arange(x.shape[0])
    if not dup.any():
        return x
    x = x.copy()
    x[dup] += rng.normal(0.0, 1e-6 * k, size=(int(dup.sum()), 2))
    return x


def exact_repulsion(x: np.ndarray, k: float) -> np.ndarray:
    """O(n^2) sum of ``k / d^2`` along each separation vector."""
    diff = x[:, None, :] - x[None, :, :]
    d2 = np.sum(diff * diff, axis=-1)
    np.fill_diagonal(d2, np.inf)
    scale = k / (d2 * np.sqrt(d2))
    return np.sum(diff * scale[..., None], axis=1)


def laplacian(adjacency) -> sp.csr_matrix:
    """``diag(degree) - A`` with the diagonal of ``A`` ignored."""
    A = sp.csr_matrix(adjacency, dtype=float)
    A = A - sp.diags(A.diagonal())
    deg = np.asarray(A.sum(axis=1)).ravel()
    return sp.csr_matrix(sp.diags(deg) - A)


def attraction(x: np.ndarray, adjacency, k: float, lap: sp.csr_matrix | None = None) -> np.ndarray:
    """Weighted spring pull ``-k * w_ij * (x_i - x_j)``; the diagonal is ignored.

    Pass ``lap`` (from :func:`laplacian`) to skip rebuilding it.
    """
    if lap is None:
        lap = laplacian(adjacency)
    return -k * (lap @ x)


@dataclass
class QuadTree:
    """Flat quadtree built level by level.

    Node arrays are indexed by node id; ``leaf_of[b]`` is the leaf holding body ``b``.
    """

    center: np.ndarray  # (m, 2) cell centres
    half: np.ndarray  # (m,) half side length
    com: np.ndarray  # (m, 2) centre of mass
    mass: np.ndarray  # (m,) body count
    quad: np.ndarray  # (m, 2, 2) quadrupole moment about the centre of mass
    children: np.ndarray  # (m, 4), -1 for none
    is_leaf: np.ndarray  # (m,) bool
    leaf_of: np.ndarray  # (n,) leaf node of each body

    @classmethod
    def build(cls, x: np.ndarray, max_depth: int = 48) -> "QuadTree":
        n = x.shape[0]
        lo, hi = x.min(axis=0), x.max(axis=0)
        centers = [0.5 * (lo + hi)[None, :]]
        halves = [np.array([0.5 * float(np.max(hi - lo)) * (1 + 1e-9) + 1e-12])]
        coms, masses, quads, kids, leaves = [], [], [], [], []
        leaf_of = np.empty(n, dtype=np.intp)
        body = np.arange(n)
        local = np.zeros(n, dtype=np.intp)  # node index within the current level
        base = 0
        for depth in range(max_depth + 1):
            c, h = centers[-1], halves[-1]
            m = c.shape[0]
            mass = np.bincount(local, minlength=m).astype(float)
            com = np.stack([np.bincount(local, x[body, j], m) for j in range(2)], axis=1) / mass[:, None]
            rel = x[body] - com[local]
            sxx = np.bincount(local, rel[:, 0] ** 2, m)
            syy = np.bincount(local, rel[:, 1] ** 2, m)
            sxy = np.bincount(local, rel[:, 0] * rel[:, 1], m)
            q = np.empty((m, 2, 2))
            q[:, 0, 0] = 2 * sxx - syy
            q[:, 1, 1] = 2 * syy - sxx
            q[:, 0, 1] = q[:, 1, 0] = 3 * sxy
            leaf = (mass == 1) | (depth == max_depth)
            coms.append(com)
            masses.append(mass)
            quads.append(q)
            leaves.append(leaf)
            child = np.full((m, 4), -1, dtype=np.intp)
            kids.append(child)
            done = leaf[local]
            leaf_of[body[done]] = base + local[done]
            body, local = body[~done], local[~done]
            if body.size == 0:
                break
            pts = x[body]
            quadrant = (pts[:, 0] >= c[local, 0]).astype(np.intp) + 2 * (pts[:, 1] >= c[local, 1])
            keys, new_local = np.unique(local * 4 + quadrant, return_inverse=True)
            parent, qd = keys // 4, keys % 4
            child[parent, qd] = base + m + np.arange(keys.size)
            sign = np.stack([np.where(qd & 1, 1.0, -1.0), np.where(qd & 2, 1.0, -1.0)], axis=1)
            centers.append(c[parent] + sign * (h[parent] / 2)[:, None])
            halves.append(h[parent] / 2)
            local = np.asarray(new_local).ravel()
            base += m
        return cls(
            np.concatenate(centers), np.concatenate(halves), np.concatenate(coms),
            np.concatenate(masses), np.concatenate(quads), np.concatenate(kids),
            np.concatenate(leaves), leaf_of,
        )


def barnes_hut_repulsion(x: np.ndarray, k: float, theta: float = 1.2) -> np.ndarray:
    """Repulsion where a cell of width ``w`` whose nearest point lies ``D`` from a
    body is treated as one aggregate when ``w / D < theta``.

    An accepted cell contributes its monopole (body count at the centre of
    mass) plus the quadrupole correction of the ``1/d^2`` field.

    Cells containing the body itself are always opened, so ``theta = 0``
    reproduces the exact pairwise sum.
    """
    n = x.shape[0]
    force = np.zeros_like(x)
    if n < 2:
        return force
    tree = QuadTree.build(x)
    body = np.arange(n)
    node = np.zeros(n, dtype=np.intp)
    leaf_b, leaf_n = [], []
    while body.size:
        leaf = tree.is_leaf[node]
        if leaf.any():
            leaf_b.append(body[leaf])
            leaf_n.append(node[leaf])
            body, node = body[~leaf], node[~leaf]
            if not body.size:
                break
        diff = x[body] - tree.com[node]
        dist = np.sqrt(np.sum(diff * diff, axis=1))
        # distance from the body to the nearest point of the cell (0 when inside)
        gap = np.maximum(np.abs(x[body] - tree.center[node]) - tree.half[node][:, None], 0.0)
        box_dist = np.sqrt(np.sum(gap * gap, axis=1))
        accept = (box_dist > 0) & (2 * tree.half[node] < theta * box_dist)
        if accept.any():
            b, dv, dd, nd = body[accept], diff[accept], dist[accept], node[accept]
            Qr = np.einsum("nij,nj->ni", tree.quad[nd], dv)
            rQr = np.sum(dv * Qr, axis=1)
            contrib = dv * (tree.mass[nd] / dd**3)[:, None]
            contrib -= Qr / dd[:, None] ** 5 - 2.5 * dv * (rQr / dd**7)[:, None]
            np.add.at(force, b, k * contrib)
            body, node = body[~accept], node[~accept]
        kids = tree.children[node]
        valid = kids >= 0
        body = np.repeat(body, valid.sum(axis=1))
        node = kids[valid]
    # leaves: exact body-body terms, skipping self
    lb = np.concatenate(leaf_b)
    ln = np.concatenate(leaf_n)
    order = np.argsort(tree.leaf_of, kind="stable")
    sorted_leaf = tree.leaf_of[order]
    first = np.searchsorted(sorted_leaf, ln, side="left")
    count = np.searchsorted(sorted_leaf, ln, side="right") - first
    one = count == 1
    b, o = lb[one], order[first[one]]
    keep = b != o
    b, o = b[keep], o[keep]
    dv = x[b] - x[o]
    d = np.sqrt(np.sum(dv * dv, axis=1))
    np.add.at(force, b, dv * (k / d**3)[:, None])
    for bi, f0, c0 in zip(lb[~one], first[~one], count[~one]):
        others = order[f0 : f0 + c0]
        others = others[others != bi]
        dv = x[bi] - x[others]
        d = np.sqrt(np.sum(dv * dv, axis=1))
        force[bi] += np.sum(dv * (k / d**3)[:, None], axis=0)
    return force


def repulsion(x: np.ndarray, k: float, theta: float) -> np.ndarray:
    return exact_repulsion(x, k) if theta <= 0 else barnes_hut_repulsion(x, k, theta)
