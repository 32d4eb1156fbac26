"""uigraph: multimodal page graphs, deterministic rendering, fusion kernels,
and an HTML-generation evaluation suite."""

__version__ = "0.1.0"

from .components import Component, Kind, featurize, mask_text_regions, merge_components
from .geometry import BBox, iou
from .htmldom import DomNode, DomTree, dom_paths, height1_subtrees, parse_html, serialize_html, tokenize_html
from .metrics import (
    EvalReport,
    bleu,
    block_metrics,
    embedding_cosine,
    evaluate_pair,
    html_bleu,
    match_blocks,
    mse,
    ssim,
    tree_bleu,
)
from .pagegraph import EdgeKind, PageGraph, build_graph, graph_to_dot, normalized_adjacency
from .raster import Raster
from .renderlab import LayoutBox, StyleProps, extract_annotations, layout, rasterize, synth_page
