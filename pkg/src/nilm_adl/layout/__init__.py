"""Multilevel force-directed layout of device-similarity graphs."""

from .forces import (
    QuadTree,
    attraction,
    attraction_force,
    barnes_hut_repulsion,
    exact_repulsion,
    laplacian,
    repulsion,
    repulsion_force,
    separate_coincident,
)
from .graph import SimilarityGraph, device_similarity_graph, layout_document, layout_json, layout_svg
from .multilevel import (
    FORCE_FLOOR,
    LayoutResult,
    coarsen,
    force_directed,
    heavy_edge_matching,
    multilevel_layout,
    prolongation_matrix,
)

__all__ = [
    "FORCE_FLOOR",
    "LayoutResult",
    "QuadTree",
    "SimilarityGraph",
    "attraction",
    "attraction_force",
    "barnes_hut_repulsion",
    "coarsen",
    "device_similarity_graph",
    "exact_repulsion",
    "force_directed",
    "heavy_edge_matching",
    "laplacian",
    "layout_document",
    "layout_json",
    "layout_svg",
    "multilevel_layout",
    "prolongation_matrix",
    "repulsion",
    "repulsion_force",
    "separate_coincident",
]
