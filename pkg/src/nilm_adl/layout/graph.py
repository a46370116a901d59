"""Device-similarity graphs over feature vectors and layout export."""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.spatial.distance import cdist


@dataclass(frozen=True)
class SimilarityGraph:
    """Weighted undirected graph; vertex ``i`` is ``ids[i]`` tagged with ``labels[i]``."""

    ids: tuple[str, ...]
    labels: tuple[str, ...]
    adjacency: sp.csr_matrix

    def __post_init__(self) -> None:
        A = self.adjacency
        n = len(self.ids)
        if len(self.labels) != n or A.shape != (n, n):
            raise ValueError("ids, labels and adjacency disagree on vertex count")
        if A.diagonal().any():
            raise ValueError("self-loops are not allowed")
        if A.nnz and A.data.min() < 0:
            raise ValueError("edge weights must be non-negative")
        if abs(A - A.T).sum() > 1e-12 * max(1.0, abs(A).sum()):
            raise ValueError("adjacency must be symmetric")
        if A.nnz and not np.all(np.isfinite(A.data)):
            raise ValueError("edge weights must be finite")

    @property
    def n(self) -> int:
        return len(self.ids)

    def edges(self) -> list[tuple[int, int, float]]:
        """Each undirected edge once, as ``(u, v, w)`` with ``u < v``."""
        upper = sp.triu(self.adjacency, k=1).tocoo()
        order = np.lexsort((upper.col, upper.row))
        return [(int(upper.row[i]), int(upper.col[i]), float(upper.data[i])) for i in order]


def device_similarity_graph(vectors, labels, ids=None, k: int = 5) -> SimilarityGraph:
    """k-nearest-neighbour graph with weight ``1 / (1 + distance)``, symmetrized by union.

    Neighbour ties are broken by lower index.
    """
    X = np.atleast_2d(np.asarray(vectors, dtype=float))
    n = X.shape[0]
    if n < 2:
        raise ValueError("need at least two vectors")
    if k < 1:
        raise ValueError("k must be >= 1")
    if ids is None:
        ids = [str(i) for i in range(n)]
    k = min(k, n - 1)
    D = cdist(X, X)
    np.fill_diagonal(D, np.inf)
    nbr = np.argsort(D, axis=1, kind="stable")[:, :k]
    rows = np.repeat(np.arange(n), k)
    cols = nbr.ravel()
    W = sp.coo_matrix((1.0 / (1.0 + D[rows, cols]), (rows, cols)), shape=(n, n)).tocsr()
    W = W.maximum(W.T).tocsr()
    W.sort_indices()
    return SimilarityGraph(tuple(str(i) for i in ids), tuple(str(l) for l in labels), W)


def layout_document(graph: SimilarityGraph, positions: np.ndarray, **extra) -> dict:
    """``{vertices: [{id, label, x, y}], edges: [{u, v, w}]}`` plus any extra fields."""
    doc = dict(extra)
    doc["vertices"] = [
        {"id": i, "label": l, "x": float(p[0]), "y": float(p[1])}
        for i, l, p in zip(graph.ids, graph.labels, positions)
    ]
    doc["edges"] = [{"u": graph.ids[u], "v": graph.ids[v], "w": w} for u, v, w in graph.edges()]
    return doc


def layout_json(graph: SimilarityGraph, positions: np.ndarray, **extra) -> str:
    return json.dumps(layout_document(graph, positions, **extra), indent=1, sort_keys=True) + "\n"


_PALETTE = ("#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f")


def layout_svg(graph: SimilarityGraph, positions: np.ndarray, size: int = 600, margin: int = 20) -> str:
    """Scatter of the layout; each label gets a CSS class and colour, edges drawn faintly."""
    pos = np.asarray(positions, dtype=float).reshape(-1, 2)
    classes = sorted(set(graph.labels))
    css = {lab: f"lab{i}" for i, lab in enumerate(classes)}
    if pos.size:
        lo, span = pos.min(axis=0), np.ptp(pos, axis=0).max()
    else:
        lo, span = np.zeros(2), 0.0
    scale = (size - 2 * margin) / span if span > 0 else 0.0
    px = margin + (pos - lo) * scale
    if span == 0:
        px[:] = size / 2
    lines = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" viewBox="0 0 {size} {size}">',
        "<style>",
        "line{stroke:#999;stroke-opacity:0.3}",
    ]
    lines += [f".{css[lab]}{{fill:{_PALETTE[i % len(_PALETTE)]}}}" for i, lab in enumerate(classes)]
    lines.append("</style>")
    for u, v, _ in graph.edges():
        (x1, y1), (x2, y2) = px[u], px[v]
        lines.append(f'<line x1="{x1:.2f}" y1="{size - y1:.2f}" x2="{x2:.2f}" y2="{size - y2:.2f}"/>')
    for vid, lab, (x, y) in zip(graph.ids, graph.labels, px):
        lines.append(f'<circle class="{css[lab]}" cx="{x:.2f}" cy="{size - y:.2f}" r="4"><title>{vid} {lab}</title></circle>')
    for i, lab in enumerate(classes):
        lines.append(f'<text class="{css[lab]}" x="{margin}" y="{margin + 14 * (i + 1)}" font-size="12">{lab}</text>')
    lines.append("</svg>")
    return "\n".join(lines) + "\n"
