"""Dataset profiles and the resolved configuration for a pipeline run."""

from __future__ import annotations

import os
from dataclasses import dataclass
from typing import Optional

from .density import (
    DEFAULT_BETA,
    DEFAULT_FIXED_SIGMA,
    DEFAULT_KNN,
    DEFAULT_TRUNCATION_SIGMAS,
)
from .fusion import DEFAULT_MAX_DETS, DEFAULT_NMS_IOU, MissPolicy
from .mask_crop import DEFAULT_MIN_CROP_SIZE
from .remap import DEFAULT_MIN_VISIBILITY

ENV_PROFILE = "DMNET_PROFILE"

# Published per-dataset presets: density threshold and minimum crop side.
PROFILES: dict[str, dict] = {
    "visiondrone": {"threshold": 0.08, "min_crop": DEFAULT_MIN_CROP_SIZE},
    "uavdt": {"threshold": 0.03, "min_crop": DEFAULT_MIN_CROP_SIZE},
    "custom": {},
}


def default_profile() -> str:
    return os.environ.get(ENV_PROFILE, "visiondrone")


@dataclass(frozen=True)
class PipelineConfig:
    """Everything a pipeline run needs; None fields fall back to the profile
    preset (threshold, min_crop) or to dataset statistics (window)."""

    profile: str = "visiondrone"
    kernel_mode: str = "classwise"
    sigma: float = DEFAULT_FIXED_SIGMA
    beta: float = DEFAULT_BETA
    knn: int = DEFAULT_KNN
    truncation_sigmas: float = DEFAULT_TRUNCATION_SIGMAS
    threshold: Optional[float] = None
    window: Optional[tuple[int, int]] = None
    min_crop: Optional[int] = None
    nms_iou: float = DEFAULT_NMS_IOU
    max_dets: int = DEFAULT_MAX_DETS
    min_visibility: float = DEFAULT_MIN_VISIBILITY
    grid: Optional[tuple[int, int]] = None
    include_global: bool = True
    miss: Optional[MissPolicy] = None
    seed: int = 0
    jobs: int = 1

    def __post_init__(self) -> None:
        if self.profile not in PROFILES:
            raise ValueError(f"unknown profile {self.profile!r}")
        if self.profile == "custom" and self.threshold is None and self.grid is None:
            raise ValueError("custom profile requires an explicit --threshold")

    @property
    def resolved_threshold(self) -> float:
        if self.threshold is not None:
            return self.threshold
        return PROFILES[self.profile].get("threshold", 0.0)

    @property
    def resolved_min_crop(self) -> int:
        if self.min_crop is not None:
            return self.min_crop
        return PROFILES[self.profile].get("min_crop", DEFAULT_MIN_CROP_SIZE)
