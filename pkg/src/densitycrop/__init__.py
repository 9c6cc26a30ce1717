"""Density-map guided cropping for aerial object detection.

Renders object density maps from annotations, derives binary density masks
and crop regions, remaps annotations/detections between global and crop
coordinates, fuses crop and global detections with NMS, and scores results
with COCO-style AP. An oracle detector makes the whole pipeline verifiable
without any trained model.
"""

from .config import PROFILES, PipelineConfig
from .dataset_io import (
    Annotation,
    CategoryStats,
    Dataset,
    FormatError,
    ImageRecord,
    IntegrityError,
    dataset_stats,
    load_dataset,
    parse_coco,
    read_coco_detections,
    read_density,
    write_coco_detections,
    write_density,
)
from .density import (
    KernelSpec,
    density_error,
    render_density,
    sigma_adaptive,
    sigma_classwise,
    upsample_bicubic,
)
from .evaluation import EvalResult, evaluate
from .fusion import FusionParams, MissPolicy, full_image_region, fuse, nms, oracle_detect
from .geometry import AreaClass, BoundingBox, area_class, circumscribed_rect, clip, iou
from .mask_crop import (
    CropRegion,
    MaskParams,
    connected_components,
    crops_from_mask,
    density_mask,
    uniform_grid,
    window_from_stats,
)
from .overlay import render_overlay
from .pipeline import PipelineResult, run_pipeline
from .remap import (
    CropAnnotationSet,
    Detection,
    backproject_detections,
    project_annotations,
)

__version__ = "0.1.0"

__all__ = [
    "Annotation",
    "AreaClass",
    "BoundingBox",
    "CategoryStats",
    "CropAnnotationSet",
    "CropRegion",
    "Dataset",
    "Detection",
    "EvalResult",
    "FormatError",
    "FusionParams",
    "ImageRecord",
    "IntegrityError",
    "KernelSpec",
    "MaskParams",
    "MissPolicy",
    "PROFILES",
    "PipelineConfig",
    "PipelineResult",
    "area_class",
    "backproject_detections",
    "circumscribed_rect",
    "clip",
    "connected_components",
    "crops_from_mask",
    "dataset_stats",
    "density_error",
    "density_mask",
    "evaluate",
    "full_image_region",
    "fuse",
    "iou",
    "load_dataset",
    "nms",
    "oracle_detect",
    "parse_coco",
    "project_annotations",
    "read_coco_detections",
    "read_density",
    "render_density",
    "render_overlay",
    "run_pipeline",
    "sigma_adaptive",
    "sigma_classwise",
    "uniform_grid",
    "upsample_bicubic",
    "window_from_stats",
    "write_coco_detections",
    "write_density",
]
