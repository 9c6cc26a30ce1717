"""End-to-end orchestration: annotations -> density -> mask -> crops ->
oracle detections -> fusion -> evaluation, either in memory or staged
through files by the CLI."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .config import PipelineConfig
from .dataset_io import Dataset, ImageRecord, dataset_stats
from .density import KernelSpec, render_density
from .evaluation import EvalResult, evaluate
from .fusion import FusionParams, full_image_region, fuse, oracle_detect
from .mask_crop import (
    CropRegion,
    MaskParams,
    crops_from_mask,
    density_mask,
    uniform_grid,
    window_from_stats,
)
from .remap import Detection, backproject_detections


@dataclass
class ImageArtifacts:
    image: ImageRecord
    density: Optional[np.ndarray]
    mask: Optional[np.ndarray]
    crops: list[CropRegion]
    global_dets: list[Detection]
    crop_local_dets: list[list[Detection]]
    crop_dets: list[Detection]  # backprojected into global coordinates


@dataclass
class PipelineResult:
    window: tuple[int, int]
    threshold: float
    per_image: list[ImageArtifacts]
    fused: list[Detection]
    eval_result: EvalResult


def build_kernel_spec(cfg: PipelineConfig, dataset: Dataset) -> KernelSpec:
    if cfg.kernel_mode == "classwise":
        return KernelSpec.classwise(dataset_stats(dataset), cfg.truncation_sigmas)
    if cfg.kernel_mode == "adaptive":
        return KernelSpec.adaptive(cfg.beta, cfg.knn, cfg.sigma, cfg.truncation_sigmas)
    return KernelSpec.fixed(cfg.sigma, cfg.truncation_sigmas)


def _process_image(
    image: ImageRecord,
    dataset: Dataset,
    cfg: PipelineConfig,
    spec: KernelSpec,
    window: tuple[int, int],
) -> ImageArtifacts:
    anns = dataset.annotations_for(image.id)
    size = (image.height, image.width)
    threshold = cfg.resolved_threshold
    if cfg.grid is not None:
        density = mask = None
        crops = uniform_grid(size, cfg.grid[0], cfg.grid[1], image_id=image.id)
    else:
        density = render_density(size, anns, spec)
        mask = density_mask(density, MaskParams(window[0], window[1], threshold))
        crops = crops_from_mask(
            mask, cfg.resolved_min_crop, image_id=image.id, threshold=threshold
        )

    global_dets: list[Detection] = []
    if cfg.include_global:
        global_dets = oracle_detect(full_image_region(image), dataset, cfg.miss)
    crop_local = []
    crop_dets: list[Detection] = []
    for index, crop in enumerate(crops):
        local = oracle_detect(crop, dataset, cfg.miss)
        crop_local.append(local)
        crop_dets.extend(
            backproject_detections(crop, local, 1.0, image_size=size, crop_index=index)
        )
    return ImageArtifacts(
        image=image,
        density=density,
        mask=mask,
        crops=crops,
        global_dets=global_dets,
        crop_local_dets=crop_local,
        crop_dets=crop_dets,
    )


def run_pipeline(dataset: Dataset, cfg: PipelineConfig) -> PipelineResult:
    """Run the full oracle-driven pipeline over a dataset in memory."""
    stats = dataset_stats(dataset)
    window = cfg.window if cfg.window is not None else window_from_stats(stats)
    spec = build_kernel_spec(cfg, dataset)
    images = sorted(dataset.images, key=lambda im: im.id)
    if cfg.jobs > 1:
        with ThreadPoolExecutor(max_workers=cfg.jobs) as pool:
            per_image = list(
                pool.map(lambda im: _process_image(im, dataset, cfg, spec, window), images)
            )
    else:
        per_image = [_process_image(im, dataset, cfg, spec, window) for im in images]

    params = FusionParams(nms_iou=cfg.nms_iou, max_dets_per_image=cfg.max_dets)
    all_global = [d for art in per_image for d in art.global_dets]
    all_crop = [d for art in per_image for d in art.crop_dets]
    fused = fuse(all_global, all_crop, params)
    return PipelineResult(
        window=window,
        threshold=cfg.resolved_threshold,
        per_image=per_image,
        fused=fused,
        eval_result=evaluate(fused, dataset),
    )
