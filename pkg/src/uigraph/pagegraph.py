"""Multimodal page graph built from a component list.

Nodes are components; undirected edges follow three rules: every pair of
text nodes is connected, and visual-visual / text-visual pairs are
connected when their bounding-box IoU exceeds a threshold (default 0.8,
strict inequality). The normalized adjacency used by the graph encoder
adds self-loops and scales symmetrically by degree.
"""

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .components import Component, Kind, check_unique_ids
from .errors import InvalidInputError
from .geometry import iou

DEFAULT_IOU_THRESHOLD = 0.8


class EdgeKind(Enum):
    TEXT_TEXT = "text_text"
    VISUAL_VISUAL = "visual_visual"
    TEXT_VISUAL = "text_visual"


@dataclass(frozen=True)
class Edge:
    i: int  # node index, i < j
    j: int
    kind: EdgeKind
    weight: float


@dataclass
class PageGraph:
    nodes: list[Component]
    edges: list[Edge]
    adjacency: np.ndarray  # symmetric (N, N) edge-weight matrix, no self-loops

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)


def _edge_kind(a: Component, b: Component) -> EdgeKind:
    if a.kind is Kind.TEXT and b.kind is Kind.TEXT:
        return EdgeKind.TEXT_TEXT
    if a.kind is Kind.VISUAL and b.kind is Kind.VISUAL:
        return EdgeKind.VISUAL_VISUAL
    return EdgeKind.TEXT_VISUAL


def build_graph(
    components: list[Component],
    iou_threshold: float = DEFAULT_IOU_THRESHOLD,
    weight_mode: str = "unit",
) -> PageGraph:
    """Apply the three edge rules to a component list.

    Text-text pairs are always connected; visual-visual and text-visual
    pairs only when iou > iou_threshold. weight_mode "unit" assigns every
    edge weight 1.0; "iou" uses the pair IoU (1.0 for text-text pairs).
    """
    if not 0 < iou_threshold <= 1:
        raise InvalidInputError(f"iou_threshold must be in (0,1], got {iou_threshold}")
    if weight_mode not in ("unit", "iou"):
        raise InvalidInputError(f"unknown weight_mode {weight_mode!r}")
    check_unique_ids(components, "graph node")

    n = len(components)
    edges: list[Edge] = []
    adjacency = np.zeros((n, n), dtype=np.float64)
    for i in range(n):
        for j in range(i + 1, n):
            a, b = components[i], components[j]
            kind = _edge_kind(a, b)
            if kind is EdgeKind.TEXT_TEXT:
                connected = True
                pair_iou = 1.0
            else:
                pair_iou = iou(a.bbox, b.bbox)
                connected = pair_iou > iou_threshold
            if connected:
                weight = 1.0 if weight_mode == "unit" else pair_iou
                edges.append(Edge(i, j, kind, weight))
                adjacency[i, j] = adjacency[j, i] = weight
    return PageGraph(nodes=list(components), edges=edges, adjacency=adjacency)


def normalized_adjacency(g: PageGraph) -> np.ndarray:
    """Symmetric degree-normalized adjacency with self-loops.

    Returns D^{-1/2} (A + I) D^{-1/2} where D is the diagonal row-sum of
    A + I. Isolated nodes get a diagonal entry of exactly 1.
    """
    a_tilde = g.adjacency + np.eye(g.n_nodes)
    degrees = a_tilde.sum(axis=1)
    inv_sqrt = 1.0 / np.sqrt(degrees)
    return a_tilde * inv_sqrt[:, None] * inv_sqrt[None, :]


_DOT_SHAPES = {Kind.TEXT: "box", Kind.VISUAL: "ellipse"}


def graph_to_dot(g: PageGraph) -> str:
    """Graphviz export: node kind as shape, edge kind as label."""
    lines = ["graph page {"]
    for idx, node in enumerate(g.nodes):
        label = f"{node.id}:{node.kind.value}"
        lines.append(f'  n{idx} [shape={_DOT_SHAPES[node.kind]}, label="{label}"];')
    for e in g.edges:
        lines.append(f'  n{e.i} -- n{e.j} [label="{e.kind.value}"];')
    lines.append("}")
    return "\n".join(lines) + "\n"


def graph_to_dict(g: PageGraph) -> dict:
    return {
        "nodes": [
            {
                "id": c.id,
                "kind": c.kind.value,
                "bbox": [c.bbox.x, c.bbox.y, c.bbox.w, c.bbox.h],
            }
            for c in g.nodes
        ],
        "edges": [[e.i, e.j, e.kind.value, e.weight] for e in g.edges],
    }
