"""Density-mask generation, connected-component crop extraction, and the
uniform-grid cropping baseline.

The mask is built by sliding a non-overlapping window over the density map
(step = window size, trailing windows clipped at the image edge) and turning
a whole window on when its density sum is strictly greater than the
threshold. 8-connected mask components become crop candidates; their
circumscribed rectangles are the crops.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Iterable

import numpy as np
from scipy import ndimage

from .dataset_io import CategoryStats
from .geometry import BoundingBox

DEFAULT_MIN_CROP_SIZE = 70

_EIGHT_CONNECTED = np.ones((3, 3), dtype=int)


@dataclass(frozen=True)
class MaskParams:
    window_h: int
    window_w: int
    threshold: float

    def __post_init__(self) -> None:
        if self.window_h < 1 or self.window_w < 1:
            raise ValueError("window must be at least 1x1")
        if self.threshold < 0:
            raise ValueError("threshold must be >= 0")


@dataclass(frozen=True)
class CropRegion:
    """Integer pixel rectangle (inclusive extents) with provenance."""

    image_id: int
    rect: BoundingBox
    component_size: int
    source_threshold: float


def window_from_stats(stats: CategoryStats) -> tuple[int, int]:
    """Sliding window (h, w) = global mean object size, rounded, at least 1."""
    return (
        max(1, round(stats.global_mean_h)),
        max(1, round(stats.global_mean_w)),
    )


def density_mask(den: np.ndarray, params: MaskParams) -> np.ndarray:
    """Binary uint8 mask of windows whose density sum exceeds the threshold.

    Trailing windows are clipped at the right/bottom edges and their
    (smaller) sums compared against the same threshold. Implemented by
    zero-padding to whole windows, which leaves the sums exact, and one
    reshape reduction, so large rasters stay cheap even for tiny windows.
    """
    den = np.asarray(den)
    if den.ndim != 2 or den.size == 0:
        raise ValueError(f"density raster must be non-empty 2-D, got shape {den.shape}")
    height, width = den.shape
    wh, ww = params.window_h, params.window_w
    padded = np.zeros((height + (-height % wh), width + (-width % ww)), dtype=np.float64)
    padded[:height, :width] = den
    sums = padded.reshape(padded.shape[0] // wh, wh, padded.shape[1] // ww, ww).sum(
        axis=(1, 3)
    )
    flags = (sums > params.threshold).astype(np.uint8)
    return np.repeat(np.repeat(flags, wh, axis=0), ww, axis=1)[:height, :width]


def connected_components(mask: np.ndarray) -> tuple[np.ndarray, int]:
    """8-connectivity labeling of a binary mask.

    Returns (labels, count) with component ids dense from 1, numbered by
    first appearance in raster-scan order; background is 0.
    """
    mask = np.asarray(mask)
    if mask.ndim != 2:
        raise ValueError(f"mask must be 2-D, got shape {mask.shape}")
    labels, count = ndimage.label(mask != 0, structure=_EIGHT_CONNECTED)
    if count == 0:
        return labels.astype(np.int32), 0
    # renumber by first raster-scan occurrence so ids never depend on
    # library internals
    flat = labels.ravel()
    values, first = np.unique(flat, return_index=True)
    nonzero = values != 0
    values, first = values[nonzero], first[nonzero]
    order = np.argsort(first)
    lut = np.zeros(count + 1, dtype=np.int32)
    lut[values[order]] = np.arange(1, count + 1, dtype=np.int32)
    return lut[labels], count


def crops_from_mask(
    mask: np.ndarray,
    min_size: int = DEFAULT_MIN_CROP_SIZE,
    *,
    image_id: int = 0,
    threshold: float = 0.0,
) -> list[CropRegion]:
    """Circumscribed rectangle of every mask component, small ones dropped.

    A component is dropped when its rect is narrower OR shorter than
    ``min_size``. Output is sorted by (rect.y, rect.x).
    """
    if min_size < 0:
        raise ValueError("min_size must be >= 0")
    labels, count = connected_components(mask)
    sizes = np.bincount(labels.ravel(), minlength=count + 1)
    crops = []
    for comp, slices in enumerate(ndimage.find_objects(labels), start=1):
        if slices is None:
            continue
        ys, xs = slices
        w = xs.stop - xs.start
        h = ys.stop - ys.start
        if w < min_size or h < min_size:
            continue
        crops.append(
            CropRegion(
                image_id=image_id,
                rect=BoundingBox(xs.start, ys.start, w, h),
                component_size=int(sizes[comp]),
                source_threshold=threshold,
            )
        )
    crops.sort(key=lambda c: (c.rect.y, c.rect.x))
    return crops


def uniform_grid(
    image_size: tuple[int, int],
    rows: int,
    cols: int,
    overlap: int = 0,
    *,
    image_id: int = 0,
) -> list[CropRegion]:
    """rows x cols rectangles tiling the image.

    The last row/column absorb any division remainder, so overlap 0 covers
    the image exactly. ``overlap`` expands each cell on interior edges only,
    clipped to the image.
    """
    height, width = image_size
    if rows < 1 or cols < 1:
        raise ValueError("rows and cols must be >= 1")
    if rows > height or cols > width:
        raise ValueError(f"grid {rows}x{cols} exceeds image size {height}x{width}")
    if overlap < 0:
        raise ValueError("overlap must be >= 0")
    base_h = height // rows
    base_w = width // cols
    crops = []
    for r in range(rows):
        y0 = r * base_h
        y1 = (r + 1) * base_h if r < rows - 1 else height
        ey0 = max(0, y0 - overlap) if r > 0 else y0
        ey1 = min(height, y1 + overlap) if r < rows - 1 else y1
        for c in range(cols):
            x0 = c * base_w
            x1 = (c + 1) * base_w if c < cols - 1 else width
            ex0 = max(0, x0 - overlap) if c > 0 else x0
            ex1 = min(width, x1 + overlap) if c < cols - 1 else x1
            rect = BoundingBox(ex0, ey0, ex1 - ex0, ey1 - ey0)
            crops.append(
                CropRegion(
                    image_id=image_id,
                    rect=rect,
                    component_size=(ex1 - ex0) * (ey1 - ey0),
                    source_threshold=0.0,
                )
            )
    return crops


def write_crop_manifest(crops: Iterable[CropRegion]) -> str:
    """JSON-lines manifest; crop_index restarts at 0 per image in input order."""
    lines = []
    counters: dict[int, int] = {}
    for crop in crops:
        index = counters.get(crop.image_id, 0)
        counters[crop.image_id] = index + 1
        lines.append(
            json.dumps(
                {
                    "image_id": crop.image_id,
                    "crop_index": index,
                    "x": int(crop.rect.x),
                    "y": int(crop.rect.y),
                    "w": int(crop.rect.w),
                    "h": int(crop.rect.h),
                    "threshold": crop.source_threshold,
                }
            )
        )
    return "".join(line + "\n" for line in lines)


def read_crop_manifest(text: str) -> list[tuple[int, CropRegion]]:
    """Parse a manifest back into (crop_index, CropRegion) rows, line order kept."""
    rows = []
    for line in text.splitlines():
        if not line.strip():
            continue
        obj = json.loads(line)
        rows.append(
            (
                int(obj["crop_index"]),
                CropRegion(
                    image_id=int(obj["image_id"]),
                    rect=BoundingBox(obj["x"], obj["y"], obj["w"], obj["h"]),
                    # component pixel count is not part of the manifest schema
                    component_size=int(obj["w"]) * int(obj["h"]),
                    source_threshold=float(obj["threshold"]),
                ),
            )
        )
    return rows
