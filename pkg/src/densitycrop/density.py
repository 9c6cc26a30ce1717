"""Object density map rendering and comparison.

Each annotation contributes one discrete Gaussian centered at its bbox
center. The kernel is truncated at ``truncation_sigmas * sigma`` pixels and
normalized to sum to 1 before any image-boundary clipping, so the raster
integral equals the object count for interior objects. Spread comes from one
of three modes: a fixed sigma, a KNN-distance-adaptive sigma, or a per-category
sigma of half the mean bbox diagonal.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .dataset_io import Annotation, CategoryStats

# Fallback spread when nothing better is known; common crowd-counting default.
DEFAULT_FIXED_SIGMA = 15.0
DEFAULT_BETA = 0.3
DEFAULT_KNN = 3
DEFAULT_TRUNCATION_SIGMAS = 4.0

KERNEL_MODES = ("fixed", "adaptive", "classwise")


@dataclass(frozen=True)
class KernelSpec:
    """Gaussian kernel configuration for density rendering.

    ``sigma`` is the spread for fixed mode and the fallback for adaptive
    mode when an image has too few objects for a KNN estimate.
    """

    mode: str = "classwise"
    sigma: float = DEFAULT_FIXED_SIGMA
    beta: float = DEFAULT_BETA
    k: int = DEFAULT_KNN
    stats: CategoryStats | None = None
    truncation_sigmas: float = DEFAULT_TRUNCATION_SIGMAS

    def __post_init__(self) -> None:
        if self.mode not in KERNEL_MODES:
            raise ValueError(f"unknown kernel mode {self.mode!r}")
        if self.sigma <= 0:
            raise ValueError("sigma must be > 0")
        if self.beta <= 0:
            raise ValueError("beta must be > 0")
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.truncation_sigmas <= 0:
            raise ValueError("truncation_sigmas must be > 0")
        if self.mode == "classwise" and self.stats is None:
            raise ValueError("classwise mode requires category stats")

    @staticmethod
    def fixed(sigma: float = DEFAULT_FIXED_SIGMA, truncation_sigmas: float = DEFAULT_TRUNCATION_SIGMAS) -> "KernelSpec":
        return KernelSpec(mode="fixed", sigma=sigma, truncation_sigmas=truncation_sigmas)

    @staticmethod
    def adaptive(
        beta: float = DEFAULT_BETA,
        k: int = DEFAULT_KNN,
        fallback_sigma: float = DEFAULT_FIXED_SIGMA,
        truncation_sigmas: float = DEFAULT_TRUNCATION_SIGMAS,
    ) -> "KernelSpec":
        return KernelSpec(
            mode="adaptive", beta=beta, k=k, sigma=fallback_sigma,
            truncation_sigmas=truncation_sigmas,
        )

    @staticmethod
    def classwise(stats: CategoryStats, truncation_sigmas: float = DEFAULT_TRUNCATION_SIGMAS) -> "KernelSpec":
        return KernelSpec(mode="classwise", stats=stats, truncation_sigmas=truncation_sigmas)


def sigma_classwise(stats: CategoryStats, category_id: int) -> float:
    """Half the diagonal of the category's mean bbox."""
    s = stats.scale(category_id)
    return 0.5 * math.hypot(s.mean_h, s.mean_w)


def sigma_adaptive(
    centers: Sequence[tuple[float, float]], index: int, beta: float, k: int
) -> float:
    """beta times the mean distance from centers[index] to its k nearest others."""
    n = len(centers)
    if n < 2:
        raise ValueError("adaptive kernel undefined for isolated object")
    if not (1 <= k <= n - 1):
        raise ValueError(f"k={k} outside [1, {n - 1}]")
    cx, cy = centers[index]
    d = np.hypot(
        np.array([c[0] for c in centers]) - cx,
        np.array([c[1] for c in centers]) - cy,
    )
    d = np.delete(d, index)
    d.sort()
    return beta * float(d[:k].mean())


def _gaussian_kernel(sigma: float, truncation_sigmas: float) -> np.ndarray:
    """Discrete 2-D Gaussian on a (2R+1)^2 grid, normalized to sum to 1."""
    radius = math.ceil(truncation_sigmas * sigma)
    ax = np.arange(-radius, radius + 1, dtype=np.float64)
    g = np.exp(-(ax * ax) / (2.0 * sigma * sigma))
    kernel = np.outer(g, g)
    kernel /= kernel.sum()
    return kernel


def _object_sigmas(annotations: Sequence[Annotation], spec: KernelSpec) -> list[float]:
    if spec.mode == "fixed":
        return [spec.sigma] * len(annotations)
    if spec.mode == "classwise":
        assert spec.stats is not None
        return [sigma_classwise(spec.stats, a.category_id) for a in annotations]
    # adaptive: KNN needs at least k other objects in the image, otherwise
    # fall back to the fixed spread for every object
    if len(annotations) - 1 < spec.k:
        return [spec.sigma] * len(annotations)
    centers = [a.bbox.center for a in annotations]
    return [sigma_adaptive(centers, i, spec.beta, spec.k) for i in range(len(centers))]


def render_density(
    image_size: tuple[int, int],
    annotations: Sequence[Annotation],
    spec: KernelSpec,
) -> np.ndarray:
    """Render a float32 density raster of shape ``image_size`` = (height, width).

    Kernels are accumulated additively; mass falling outside the image is
    lost (no renormalization for boundary objects).
    """
    height, width = image_size
    if height <= 0 or width <= 0:
        raise ValueError(f"invalid image size {image_size}")
    acc = np.zeros((height, width), dtype=np.float64)
    kernels: dict[float, np.ndarray] = {}
    for ann, sigma in zip(annotations, _object_sigmas(annotations, spec)):
        if sigma <= 0:
            raise ValueError(f"annotation {ann.id}: sigma must be > 0, got {sigma}")
        kernel = kernels.get(sigma)
        if kernel is None:
            kernel = kernels.setdefault(sigma, _gaussian_kernel(sigma, spec.truncation_sigmas))
        radius = kernel.shape[0] // 2
        cx, cy = ann.bbox.center
        px = min(int(math.floor(cx)), width - 1)
        py = min(int(math.floor(cy)), height - 1)
        y0, y1 = py - radius, py + radius + 1
        x0, x1 = px - radius, px + radius + 1
        ky0, kx0 = max(0, -y0), max(0, -x0)
        ky1 = kernel.shape[0] - max(0, y1 - height)
        kx1 = kernel.shape[1] - max(0, x1 - width)
        acc[max(0, y0):min(y1, height), max(0, x0):min(x1, width)] += kernel[ky0:ky1, kx0:kx1]
    return acc.astype(np.float32)


def _catmull_rom_weights(t: np.ndarray) -> np.ndarray:
    """Weights for taps at offsets (-1, 0, 1, 2) around the sample, a = -0.5."""
    a = -0.5

    def k1(x):  # |x| <= 1
        return (a + 2) * x**3 - (a + 3) * x**2 + 1

    def k2(x):  # 1 < |x| < 2
        return a * x**3 - 5 * a * x**2 + 8 * a * x - 4 * a

    return np.stack([k2(1 + t), k1(t), k1(1 - t), k2(2 - t)], axis=1)


def _resample_matrix(n_in: int, n_out: int) -> np.ndarray:
    """(n_out, n_in) Catmull-Rom interpolation matrix, edge-clamped.

    Output position i samples the source at coordinate i * n_in / n_out,
    so integer upscale factors keep original samples exactly in place.
    """
    src = np.arange(n_out, dtype=np.float64) * n_in / n_out
    base = np.floor(src).astype(np.int64)
    weights = _catmull_rom_weights(src - base)
    mat = np.zeros((n_out, n_in), dtype=np.float64)
    rows = np.arange(n_out)
    for tap in range(4):
        cols = np.clip(base + tap - 1, 0, n_in - 1)
        np.add.at(mat, (rows, cols), weights[:, tap])
    return mat


def upsample_bicubic(raster: np.ndarray, target) -> np.ndarray:
    """Upsample a raster by an integer factor or to an explicit (h, w) target.

    Separable Catmull-Rom (cubic, a = -0.5) interpolation; negative
    overshoot is clamped to 0. Downsampling is rejected.
    """
    arr = np.asarray(raster, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError(f"raster must be 2-D, got shape {arr.shape}")
    h, w = arr.shape
    if isinstance(target, (int, np.integer)):
        if target < 1:
            raise ValueError(f"factor must be >= 1, got {target}")
        out_h, out_w = h * int(target), w * int(target)
    else:
        out_h, out_w = (int(v) for v in target)
    if out_h < h or out_w < w:
        raise ValueError(f"target ({out_h}, {out_w}) smaller than source ({h}, {w})")
    if (out_h, out_w) == (h, w):
        return arr.astype(np.float32)
    out = _resample_matrix(h, out_h) @ arr @ _resample_matrix(w, out_w).T
    np.maximum(out, 0.0, out=out)
    return out.astype(np.float32)


@dataclass(frozen=True)
class DensityError:
    """Comparison of a predicted density raster against ground truth.

    ``loss`` is the squared-norm training objective (pixel sum of squared
    differences over 2N images); ``loss_per_pixel`` additionally divides by
    the pixel count; ``mae`` is the plain mean absolute per-pixel error and
    ``count_error`` the absolute difference of the raster integrals.
    """

    loss: float
    loss_per_pixel: float
    mae: float
    count_error: float


def density_error(pred: np.ndarray, gt: np.ndarray, n_images: int = 1) -> DensityError:
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if pred.shape != gt.shape:
        raise ValueError(f"shape mismatch: {pred.shape} vs {gt.shape}")
    if n_images < 1:
        raise ValueError("n_images must be >= 1")
    diff = pred - gt
    sq = float((diff * diff).sum())
    loss = sq / (2.0 * n_images)
    return DensityError(
        loss=loss,
        loss_per_pixel=loss / diff.size,
        mae=float(np.abs(diff).mean()),
        count_error=abs(float(pred.sum()) - float(gt.sum())),
    )
