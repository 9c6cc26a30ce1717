"""Figure-style overlay rendering: density heat layer, mask tint, crop and
ground-truth rectangles, written as deterministic PNG bytes."""

from __future__ import annotations

import struct
import zlib
from typing import Iterable, Optional, Sequence

import numpy as np

from .geometry import BoundingBox

CROP_COLOR = (255, 225, 0)
GT_COLOR = (40, 90, 255)
MASK_TINT = (255, 255, 0)
MASK_ALPHA = 0.4
DENSITY_ALPHA = 0.5

# Dark-to-hot gradient stops for the density layer.
_CMAP_STOPS = np.array(
    [(0, 0, 0), (70, 10, 110), (200, 80, 0), (255, 210, 60)], dtype=np.float64
)


def _colormap(values: np.ndarray) -> np.ndarray:
    """Map floats in [0, 1] to RGB via piecewise-linear gradient stops."""
    t = np.clip(values, 0.0, 1.0) * (len(_CMAP_STOPS) - 1)
    lo = np.floor(t).astype(int)
    hi = np.minimum(lo + 1, len(_CMAP_STOPS) - 1)
    frac = (t - lo)[..., None]
    return _CMAP_STOPS[lo] * (1.0 - frac) + _CMAP_STOPS[hi] * frac


def encode_png(rgb: np.ndarray) -> bytes:
    """Encode an HxWx3 uint8 array as PNG (fixed zlib settings, no filters)."""
    if rgb.ndim != 3 or rgb.shape[2] != 3 or rgb.dtype != np.uint8:
        raise ValueError("expected HxWx3 uint8 image")
    height, width, _ = rgb.shape

    def chunk(tag: bytes, payload: bytes) -> bytes:
        body = tag + payload
        return struct.pack(">I", len(payload)) + body + struct.pack(">I", zlib.crc32(body))

    raw = b"".join(b"\x00" + rgb[i].tobytes() for i in range(height))
    return (
        b"\x89PNG\r\n\x1a\n"
        + chunk(b"IHDR", struct.pack(">IIBBBBB", width, height, 8, 2, 0, 0, 0))
        + chunk(b"IDAT", zlib.compress(raw, 6))
        + chunk(b"IEND", b"")
    )


def _stroke_rect(img: np.ndarray, box: BoundingBox, color: tuple[int, int, int]) -> None:
    height, width, _ = img.shape
    x0 = max(0, int(round(box.x)))
    y0 = max(0, int(round(box.y)))
    x1 = min(width - 1, int(round(box.x + box.w)) - 1)
    y1 = min(height - 1, int(round(box.y + box.h)) - 1)
    if x1 < x0 or y1 < y0:
        return
    img[y0, x0 : x1 + 1] = color
    img[y1, x0 : x1 + 1] = color
    img[y0 : y1 + 1, x0] = color
    img[y0 : y1 + 1, x1] = color


def render_overlay(
    canvas: Optional[np.ndarray] = None,
    size: Optional[tuple[int, int]] = None,
    density: Optional[np.ndarray] = None,
    mask: Optional[np.ndarray] = None,
    crops: Sequence = (),
    annotations: Iterable = (),
) -> bytes:
    """Compose overlay layers onto an image (or blank canvas) and encode PNG.

    ``crops`` accepts CropRegion or BoundingBox values; ``annotations``
    accepts Annotation or BoundingBox values. All raster layers must match
    the canvas extent. With no layers at all, the output is just the canvas
    encoding, so rendering is idempotent in the trivial case.
    """
    if canvas is None:
        if size is None:
            raise ValueError("either canvas or size is required")
        base = np.zeros((size[0], size[1], 3), dtype=np.uint8)
    else:
        base = np.asarray(canvas)
        if base.ndim == 2:
            base = np.stack([base] * 3, axis=-1)
        base = base.astype(np.uint8).copy()
    height, width, _ = base.shape

    out = base.astype(np.float64)
    if density is not None:
        den = np.asarray(density, dtype=np.float64)
        if den.shape != (height, width):
            raise ValueError(f"density extent {den.shape} != canvas {(height, width)}")
        peak = den.max()
        layer = _colormap(den / peak if peak > 0 else den)
        out = (1.0 - DENSITY_ALPHA) * out + DENSITY_ALPHA * layer
    if mask is not None:
        m = np.asarray(mask)
        if m.shape != (height, width):
            raise ValueError(f"mask extent {m.shape} != canvas {(height, width)}")
        on = m != 0
        tint = np.array(MASK_TINT, dtype=np.float64)
        out[on] = (1.0 - MASK_ALPHA) * out[on] + MASK_ALPHA * tint

    img = np.clip(np.rint(out), 0, 255).astype(np.uint8)
    for crop in crops:
        rect = crop.rect if hasattr(crop, "rect") else crop
        _stroke_rect(img, rect, CROP_COLOR)
    for ann in annotations:
        box = ann.bbox if hasattr(ann, "bbox") else ann
        _stroke_rect(img, box, GT_COLOR)
    return encode_png(img)
