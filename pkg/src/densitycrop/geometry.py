"""Axis-aligned box arithmetic shared by every other module."""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Iterable, Optional

# COCO-convention pixel-area thresholds separating small/medium/large objects.
SMALL_AREA_MAX = 32 * 32
MEDIUM_AREA_MAX = 96 * 96


class AreaClass(enum.Enum):
    SMALL = "small"
    MEDIUM = "medium"
    LARGE = "large"


@dataclass(frozen=True)
class BoundingBox:
    """Axis-aligned box as (left, top, width, height) in pixels.

    Coordinates are continuous; pixel-index rectangles (e.g. from masks) use
    inclusive extents, so a single pixel at (3, 4) is the box (3, 4, 1, 1).
    """

    x: float
    y: float
    w: float
    h: float

    def __post_init__(self) -> None:
        if not (self.w > 0 and self.h > 0):
            raise ValueError(f"box must have positive extent, got w={self.w}, h={self.h}")
        if self.x < 0 or self.y < 0:
            raise ValueError(f"box origin must be non-negative, got x={self.x}, y={self.y}")

    @property
    def x2(self) -> float:
        return self.x + self.w

    @property
    def y2(self) -> float:
        return self.y + self.h

    @property
    def area(self) -> float:
        return self.w * self.h

    @property
    def center(self) -> tuple[float, float]:
        return (self.x + self.w / 2.0, self.y + self.h / 2.0)

    def contains_box(self, other: "BoundingBox") -> bool:
        return (
            self.x <= other.x
            and self.y <= other.y
            and other.x2 <= self.x2
            and other.y2 <= self.y2
        )

    def contains_point(self, px: float, py: float) -> bool:
        """Half-open containment: the right/bottom edges are excluded."""
        return self.x <= px < self.x2 and self.y <= py < self.y2


def iou(a: BoundingBox, b: BoundingBox) -> float:
    """Intersection area over union area; 0 for disjoint boxes.

    Exactly 1.0 for equal boxes and never above 1: the intersection area is
    clamped to the smaller box area, which only removes rounding overshoot.
    """
    if a == b:
        return 1.0
    ix = min(a.x2, b.x2) - max(a.x, b.x)
    iy = min(a.y2, b.y2) - max(a.y, b.y)
    if ix <= 0 or iy <= 0:
        return 0.0
    inter = min(ix * iy, a.area, b.area)
    return inter / (a.area + b.area - inter)


def clip(b: BoundingBox, r: BoundingBox) -> Optional[BoundingBox]:
    """Intersection rectangle of ``b`` and ``r``, or None when empty.

    Boxes fully inside ``r`` are returned unchanged (same object), so
    clipping an interior box is exactly lossless.
    """
    if r.contains_box(b):
        return b
    x1 = max(b.x, r.x)
    y1 = max(b.y, r.y)
    x2 = min(b.x2, r.x2)
    y2 = min(b.y2, r.y2)
    if x2 - x1 <= 0 or y2 - y1 <= 0:
        return None
    return BoundingBox(x1, y1, x2 - x1, y2 - y1)


def area_class(b: BoundingBox) -> AreaClass:
    """Small below 32*32 px, large from 96*96 px, medium in between.

    Boundary areas fall into the larger class (area == 1024 is medium).
    """
    a = b.area
    if a < SMALL_AREA_MAX:
        return AreaClass.SMALL
    if a < MEDIUM_AREA_MAX:
        return AreaClass.MEDIUM
    return AreaClass.LARGE


def circumscribed_rect(points: Iterable[tuple[int, int]]) -> BoundingBox:
    """Minimal rectangle containing all (x, y) pixel coordinates.

    Pixel extents are inclusive: w = max_x - min_x + 1.
    """
    it = iter(points)
    try:
        x0, y0 = next(it)
    except StopIteration:
        raise ValueError("empty region") from None
    min_x = max_x = x0
    min_y = max_y = y0
    for px, py in it:
        if px < min_x:
            min_x = px
        elif px > max_x:
            max_x = px
        if py < min_y:
            min_y = py
        elif py > max_y:
            max_y = py
    return BoundingBox(min_x, min_y, max_x - min_x + 1, max_y - min_y + 1)
