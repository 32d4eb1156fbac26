"""Axis-aligned bounding-box primitives.

Boxes are (x, y, w, h) with y increasing downward and real-valued
coordinates; all overlap math is done on continuous rectangles.
"""

import math
from dataclasses import dataclass

from .errors import InvalidGeometryError, InvalidInputError


@dataclass(frozen=True)
class BBox:
    """Rectangle given as left, top, width, height in pixels."""

    x: float
    y: float
    w: float
    h: float

    def __post_init__(self):
        for name in ("x", "y", "w", "h"):
            v = getattr(self, name)
            if not math.isfinite(v):
                raise InvalidInputError(f"bbox {name} must be finite, got {v!r}")
            if v < 0:
                raise InvalidInputError(f"bbox {name} must be non-negative, got {v!r}")

    @property
    def x2(self) -> float:
        return self.x + self.w

    @property
    def y2(self) -> float:
        return self.y + self.h

    @property
    def cx(self) -> float:
        return self.x + self.w / 2

    @property
    def cy(self) -> float:
        return self.y + self.h / 2

    @property
    def area(self) -> float:
        return self.w * self.h

    def is_degenerate(self) -> bool:
        return self.w <= 0 or self.h <= 0

    def clipped(self, page_w: float, page_h: float) -> "BBox":
        """Clip to the page rectangle [0, page_w] x [0, page_h]."""
        x1 = min(max(self.x, 0.0), page_w)
        y1 = min(max(self.y, 0.0), page_h)
        x2 = min(max(self.x2, 0.0), page_w)
        y2 = min(max(self.y2, 0.0), page_h)
        return BBox(x1, y1, x2 - x1, y2 - y1)


def intersection_area(a: BBox, b: BBox) -> float:
    """Overlap area of two boxes; 0 when disjoint."""
    iw = min(a.x2, b.x2) - max(a.x, b.x)
    ih = min(a.y2, b.y2) - max(a.y, b.y)
    if iw <= 0 or ih <= 0:
        return 0.0
    return iw * ih


def iou(a: BBox, b: BBox) -> float:
    """Intersection-over-union of two boxes.

    Returns a value in [0, 1]: 0 for disjoint interiors, 1 for identical
    boxes. Raises InvalidGeometryError if either box has zero width or
    height.
    """
    if a.is_degenerate() or b.is_degenerate():
        raise InvalidGeometryError(f"iou of degenerate box: {a} vs {b}")
    # derive every extent from the same x+w sums so rounding cannot push
    # the ratio past 1 (identical boxes give intersection == area exactly)
    ax2, ay2 = a.x + a.w, a.y + a.h
    bx2, by2 = b.x + b.w, b.y + b.h
    iw = min(ax2, bx2) - max(a.x, b.x)
    ih = min(ay2, by2) - max(a.y, b.y)
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    area_a = (ax2 - a.x) * (ay2 - a.y)
    area_b = (bx2 - b.x) * (by2 - b.y)
    return inter / (area_a + area_b - inter)
