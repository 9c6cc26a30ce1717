"""Projection of annotations into crop-local coordinates and of crop-local
detections back into global image coordinates.

Crop rectangles have integer origins, so translating a fully-interior box
into a crop and back is exact in floating point; partially visible boxes
are clipped and their visible-area fraction recorded.
"""

from __future__ import annotations

import json
import posixpath
from dataclasses import dataclass, replace
from typing import Optional, Sequence

from .dataset_io import Annotation, Dataset
from .geometry import BoundingBox, clip
from .mask_crop import CropRegion

DEFAULT_MIN_VISIBILITY = 0.5


@dataclass(frozen=True)
class Detection:
    """A scored box, in crop-local or global coordinates.

    ``source`` is None for detections made on the full image and the crop
    index for detections lifted out of a crop.
    """

    image_id: int
    category_id: int
    bbox: BoundingBox
    score: float
    source: Optional[int] = None

    def __post_init__(self) -> None:
        if not (0.0 <= self.score <= 1.0):
            raise ValueError(f"score {self.score} outside [0, 1]")


@dataclass(frozen=True)
class CropAnnotationSet:
    crop: CropRegion
    annotations: tuple[Annotation, ...]
    visibility: tuple[float, ...]


def project_annotations(
    crop: CropRegion,
    anns: Sequence[Annotation],
    min_visibility: float = DEFAULT_MIN_VISIBILITY,
) -> CropAnnotationSet:
    """Clip annotations to a crop and shift them into crop-local coordinates.

    An annotation is kept when the clipped fraction of its area is at least
    ``min_visibility``. Boxes completely inside the crop pass through with
    exact coordinates and visibility 1.
    """
    if not (0.0 < min_visibility <= 1.0):
        raise ValueError("min_visibility must be in (0, 1]")
    rect = crop.rect
    kept = []
    vis = []
    for ann in anns:
        if ann.image_id != crop.image_id:
            raise ValueError(
                f"annotation {ann.id} belongs to image {ann.image_id}, crop to {crop.image_id}"
            )
        box = ann.bbox
        if rect.contains_box(box):
            local = BoundingBox(box.x - rect.x, box.y - rect.y, box.w, box.h)
            visibility = 1.0
        else:
            clipped = clip(box, rect)
            if clipped is None:
                continue
            visibility = clipped.area / box.area
            if visibility < min_visibility:
                continue
            local = BoundingBox(
                clipped.x - rect.x, clipped.y - rect.y, clipped.w, clipped.h
            )
        kept.append(replace(ann, bbox=local))
        vis.append(visibility)
    return CropAnnotationSet(crop=crop, annotations=tuple(kept), visibility=tuple(vis))


def backproject_detections(
    crop: CropRegion,
    dets: Sequence[Detection],
    scale: float = 1.0,
    image_size: Optional[tuple[int, int]] = None,
    crop_index: Optional[int] = None,
    drop_border: bool = False,
) -> list[Detection]:
    """Map crop-local detections into global image coordinates.

    Coordinates are multiplied by ``scale`` (crop pixels per detector input
    pixel) and shifted by the crop origin, then clipped to ``image_size``
    (height, width) when given. Boxes that collapse to zero area are
    dropped; scores pass through unchanged. Detections touching the crop
    border (likely truncated objects) are kept unless ``drop_border`` is set.
    """
    if scale <= 0:
        raise ValueError("scale must be > 0")
    rect = crop.rect
    out = []
    for det in dets:
        b = det.bbox
        if drop_border and (
            b.x * scale <= 0
            or b.y * scale <= 0
            or b.x2 * scale >= rect.w
            or b.y2 * scale >= rect.h
        ):
            continue
        if scale == 1.0:
            moved = BoundingBox(b.x + rect.x, b.y + rect.y, b.w, b.h)
        else:
            moved = BoundingBox(
                b.x * scale + rect.x, b.y * scale + rect.y, b.w * scale, b.h * scale
            )
        if image_size is not None:
            height, width = image_size
            bounds = BoundingBox(0, 0, width, height)
            clipped = clip(moved, bounds)
            if clipped is None:
                continue
            moved = clipped
        out.append(replace(det, bbox=moved, source=crop_index))
    return out


def crop_file_name(image_file_name: str, crop_index: int) -> str:
    """`dir/img.jpg` -> `dir/img_crop<k>.jpg`."""
    head, tail = posixpath.split(image_file_name)
    stem = tail.partition(".")[0]
    return posixpath.join(head, f"{stem}_crop{crop_index}.jpg")


def crop_image_id(global_crop_order: int) -> int:
    """Synthetic COCO image id for the n-th crop (0-based) of a manifest."""
    return global_crop_order + 1


def crops_to_coco(
    dataset: Dataset,
    crop_sets: Sequence[tuple[int, CropRegion, CropAnnotationSet]],
) -> bytes:
    """Build a COCO document of crop-local annotations.

    ``crop_sets`` holds (per-image crop index, crop, projected annotations)
    in manifest order; each crop becomes one synthetic image record whose id
    is its 1-based position in that order.
    """
    images = []
    annotations = []
    next_ann_id = 1
    for order, (crop_index, crop, proj) in enumerate(crop_sets):
        source = dataset.image_by_id(crop.image_id)
        cid = crop_image_id(order)
        images.append(
            {
                "id": cid,
                "file_name": crop_file_name(source.file_name, crop_index),
                "width": int(crop.rect.w),
                "height": int(crop.rect.h),
            }
        )
        for ann, vis in zip(proj.annotations, proj.visibility):
            annotations.append(
                {
                    "id": next_ann_id,
                    "image_id": cid,
                    "category_id": ann.category_id,
                    "bbox": [ann.bbox.x, ann.bbox.y, ann.bbox.w, ann.bbox.h],
                    "area": ann.bbox.area,
                    "iscrowd": 0,
                    "visibility": vis,
                }
            )
            next_ann_id += 1
    doc = {
        "images": images,
        "annotations": annotations,
        "categories": [
            {"id": cat_id, "name": name}
            for cat_id, name in sorted(dataset.categories.items())
        ],
    }
    return json.dumps(doc, indent=1).encode("utf-8")
