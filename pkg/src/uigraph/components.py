"""Page components and the deterministic extraction-pipeline stages.

A component is one detected page element: a text run or a visual block,
carrying a bounding box and optional text / color / feature vector.
Detections normally arrive from external OCR and segmentation tools via
the annotation JSON format; the synthetic renderer produces the same
structures directly.
"""

import json
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np

from .errors import InvalidInputError
from .geometry import BBox, iou
from .raster import Raster

FEATURE_DIM = 10


class Kind(Enum):
    TEXT = "text"
    VISUAL = "visual"


@dataclass
class Component:
    id: int
    kind: Kind
    bbox: BBox
    text: str | None = None
    color: tuple[float, float, float] | None = None
    features: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.bbox.is_degenerate():
            raise InvalidInputError(
                f"component {self.id} has a degenerate bbox {self.bbox}"
            )
        if self.kind is Kind.TEXT and self.text is None:
            raise InvalidInputError(f"text component {self.id} is missing text")
        if self.kind is Kind.VISUAL and self.text is not None:
            raise InvalidInputError(f"visual component {self.id} must not carry text")
        if self.color is not None:
            self.color = tuple(float(c) for c in self.color)
            if len(self.color) != 3 or any(not 0 <= c <= 1 for c in self.color):
                raise InvalidInputError(
                    f"component {self.id} color must be an sRGB triple in [0,1]"
                )
        if self.features is not None:
            self.features = np.asarray(self.features, dtype=np.float64)


def check_unique_ids(components: list[Component], label: str = "component") -> None:
    seen = set()
    for c in components:
        if c.id in seen:
            raise InvalidInputError(f"duplicate {label} id {c.id}")
        seen.add(c.id)


def mask_text_regions(img: Raster, text_boxes: list[BBox]) -> Raster:
    """Blacken every pixel whose center falls inside any of the boxes.

    Boxes reaching outside the image are clipped. The input raster is not
    mutated. Masking is idempotent.
    """
    if img.width <= 0 or img.height <= 0:
        raise InvalidInputError("cannot mask an empty image")
    out = img.copy()
    for box in text_boxes:
        # pixel (px, py) has center (px+0.5, py+0.5); center-in-box is the
        # half-open test x <= px+0.5 < x+w
        x0 = max(0, math.ceil(box.x - 0.5))
        y0 = max(0, math.ceil(box.y - 0.5))
        x1 = min(img.width, math.ceil(box.x2 - 0.5))
        y1 = min(img.height, math.ceil(box.y2 - 0.5))
        if x1 > x0 and y1 > y0:
            out.pixels[y0:y1, x0:x1] = 0.0
    return out


def merge_components(
    text_components: list[Component],
    visual_components: list[Component],
    dup_threshold: float = 0.8,
) -> list[Component]:
    """Combine OCR text detections with segmentation blocks.

    Text components pass through unchanged. A visual component is treated
    as a duplicate detection of a text region (and dropped) when its IoU
    with any text component reaches dup_threshold. Ids are reassigned to
    0..n-1 in output order, text first.
    """
    if not 0 < dup_threshold <= 1:
        raise InvalidInputError(f"dup_threshold must be in (0,1], got {dup_threshold}")
    check_unique_ids(text_components, "text component")
    check_unique_ids(visual_components, "visual component")

    kept = list(text_components)
    for v in visual_components:
        if all(iou(v.bbox, t.bbox) < dup_threshold for t in text_components):
            kept.append(v)
    return [
        Component(
            id=i,
            kind=c.kind,
            bbox=c.bbox,
            text=c.text,
            color=c.color,
            features=c.features,
        )
        for i, c in enumerate(kept)
    ]


def featurize(c: Component, page_w: float, page_h: float) -> np.ndarray:
    """Deterministic 10-dim fallback feature vector for a component.

    Layout: [cx/W, cy/H, w/W, h/H, is_text, is_visual, r, g, b,
    ln(1+len(text))]. Missing color maps to (0,0,0), missing text to
    length 0. Externally supplied embedding vectors take precedence over
    this fallback (see feature_matrix).
    """
    if page_w <= 0 or page_h <= 0:
        raise InvalidInputError(f"page dimensions must be positive, got {page_w}x{page_h}")
    b = c.bbox.clipped(page_w, page_h)
    color = c.color if c.color is not None else (0.0, 0.0, 0.0)
    text_len = len(c.text) if c.text is not None else 0
    return np.array(
        [
            b.cx / page_w,
            b.cy / page_h,
            b.w / page_w,
            b.h / page_h,
            1.0 if c.kind is Kind.TEXT else 0.0,
            1.0 if c.kind is Kind.VISUAL else 0.0,
            color[0],
            color[1],
            color[2],
            math.log(1 + text_len),
        ],
        dtype=np.float64,
    )


def feature_matrix(components: list[Component], page_w: float, page_h: float) -> np.ndarray:
    """Stack per-component features, honoring external vectors when present.

    If any component carries an explicit feature vector, all of them must,
    and the dimensions must agree; otherwise the 10-dim fallback is used
    for every node.
    """
    provided = [c.features is not None for c in components]
    if any(provided):
        if not all(provided):
            raise InvalidInputError(
                "either all components or none must carry external features"
            )
        dims = {c.features.shape for c in components}
        if len(dims) > 1:
            raise InvalidInputError(f"external feature dims disagree: {sorted(dims)}")
        return np.stack([c.features for c in components])
    return np.stack([featurize(c, page_w, page_h) for c in components])


# --- annotation JSON interchange ---


def component_to_dict(c: Component) -> dict:
    d = {
        "id": c.id,
        "kind": c.kind.value,
        "bbox": [c.bbox.x, c.bbox.y, c.bbox.w, c.bbox.h],
    }
    if c.text is not None:
        d["text"] = c.text
    if c.color is not None:
        d["color"] = list(c.color)
    if c.features is not None:
        d["features"] = [float(v) for v in c.features]
    return d


def component_from_dict(d: dict) -> Component:
    try:
        kind = Kind(d["kind"])
        bbox = BBox(*(float(v) for v in d["bbox"]))
    except (KeyError, TypeError, ValueError) as exc:
        raise InvalidInputError(f"bad component record {d!r}: {exc}") from exc
    return Component(
        id=int(d["id"]),
        kind=kind,
        bbox=bbox,
        text=d.get("text"),
        color=tuple(d["color"]) if "color" in d else None,
        features=np.asarray(d["features"], dtype=np.float64) if "features" in d else None,
    )


def annotations_to_dict(page_w: int, page_h: int, components: list[Component]) -> dict:
    return {
        "page": {"width": int(page_w), "height": int(page_h)},
        "components": [component_to_dict(c) for c in components],
    }


def annotations_from_dict(doc: dict) -> tuple[int, int, list[Component]]:
    try:
        page = doc["page"]
        width, height = int(page["width"]), int(page["height"])
        records = doc["components"]
    except (KeyError, TypeError) as exc:
        raise InvalidInputError(f"malformed annotation document: {exc}") from exc
    components = [component_from_dict(r) for r in records]
    check_unique_ids(components)
    return width, height, components


def save_annotations(path, page_w: int, page_h: int, components: list[Component]) -> None:
    doc = annotations_to_dict(page_w, page_h, components)
    Path(path).write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")


def load_annotations(path) -> tuple[int, int, list[Component]]:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    return annotations_from_dict(doc)
