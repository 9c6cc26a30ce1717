"""COCO-style annotation ingest, dataset scale statistics, and the DMAP
binary raster format used to exchange density maps with external predictors.

DMAP layout (little-endian): magic ``DMAP`` (4 bytes), version u16 = 1,
reserved u16 = 0, height u32, width u32, then height*width IEEE-754 32-bit
floats, row-major. All values must be finite and non-negative.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from functools import cached_property
from typing import Mapping, Sequence

import numpy as np

from .geometry import BoundingBox

DMAP_MAGIC = b"DMAP"
DMAP_VERSION = 1
_DMAP_HEADER = struct.Struct("<4sHHII")


class FormatError(ValueError):
    """Malformed input bytes (JSON or DMAP)."""


class IntegrityError(ValueError):
    """Cross-reference violation inside an annotation document."""


@dataclass(frozen=True)
class ImageRecord:
    id: int
    file_name: str
    width: int
    height: int

    def __post_init__(self) -> None:
        if self.width <= 0 or self.height <= 0:
            raise ValueError(f"image {self.id}: non-positive dimensions")


@dataclass(frozen=True)
class Annotation:
    id: int
    image_id: int
    category_id: int
    bbox: BoundingBox


@dataclass(frozen=True)
class LoadReport:
    """Counts of annotations altered or discarded while loading."""

    dropped_degenerate: int = 0
    clamped: int = 0


@dataclass(frozen=True)
class Dataset:
    images: tuple[ImageRecord, ...]
    annotations: tuple[Annotation, ...]
    categories: Mapping[int, str]
    report: LoadReport = field(default=LoadReport(), compare=False)

    @cached_property
    def _image_index(self) -> dict[int, ImageRecord]:
        return {im.id: im for im in self.images}

    @cached_property
    def _annotations_by_image(self) -> dict[int, tuple[Annotation, ...]]:
        grouped: dict[int, list[Annotation]] = {}
        for a in self.annotations:
            grouped.setdefault(a.image_id, []).append(a)
        return {k: tuple(v) for k, v in grouped.items()}

    def image_by_id(self, image_id: int) -> ImageRecord:
        return self._image_index[image_id]

    def annotations_for(self, image_id: int) -> tuple[Annotation, ...]:
        return self._annotations_by_image.get(image_id, ())


@dataclass(frozen=True)
class CategoryScale:
    mean_h: float
    mean_w: float
    count: int


@dataclass(frozen=True)
class CategoryStats:
    """Per-category and global mean object extents, in pixels."""

    per_category: Mapping[int, CategoryScale]
    global_mean_h: float
    global_mean_w: float
    total: int

    def scale(self, category_id: int) -> CategoryScale:
        try:
            return self.per_category[category_id]
        except KeyError:
            raise KeyError(f"category {category_id} has no annotations") from None

    def to_dict(self) -> dict:
        return {
            "global": {
                "mean_h": self.global_mean_h,
                "mean_w": self.global_mean_w,
                "count": self.total,
            },
            "per_category": {
                str(cid): {"mean_h": s.mean_h, "mean_w": s.mean_w, "count": s.count}
                for cid, s in sorted(self.per_category.items())
            },
        }


def parse_coco(data: bytes | str) -> Dataset:
    """Parse a COCO-style annotation document into a validated Dataset.

    Annotations with non-positive width/height are dropped (counted in the
    load report); boxes sticking out of their image are clamped to its
    bounds (also counted). Images, annotations and categories are ordered
    by id so identical bytes always give an identical Dataset.
    """
    if isinstance(data, bytes):
        data = data.decode("utf-8")
    try:
        doc = json.loads(data)
    except json.JSONDecodeError as e:
        raise FormatError(f"JSON parse error at byte offset {e.pos}: {e.msg}") from e

    for key in ("images", "annotations", "categories"):
        if key not in doc:
            raise FormatError(f"missing '{key}' array")

    categories = {int(c["id"]): str(c.get("name", c["id"])) for c in doc["categories"]}
    categories = dict(sorted(categories.items()))

    images = sorted(
        (
            ImageRecord(
                id=int(im["id"]),
                file_name=str(im.get("file_name", f"{im['id']}.jpg")),
                width=int(im["width"]),
                height=int(im["height"]),
            )
            for im in doc["images"]
        ),
        key=lambda im: im.id,
    )
    image_index = {im.id: im for im in images}

    annotations = []
    dropped = 0
    clamped = 0
    for raw in sorted(doc["annotations"], key=lambda a: int(a["id"])):
        image_id = int(raw["image_id"])
        category_id = int(raw["category_id"])
        if image_id not in image_index:
            raise IntegrityError(f"annotation {raw['id']} references unknown image {image_id}")
        if category_id not in categories:
            raise IntegrityError(
                f"annotation {raw['id']} references unknown category {category_id}"
            )
        x, y, w, h = (float(v) for v in raw["bbox"])
        if w <= 0 or h <= 0:
            dropped += 1
            continue
        im = image_index[image_id]
        cx, cy = max(x, 0.0), max(y, 0.0)
        cw = min(x + w, float(im.width)) - cx
        ch = min(y + h, float(im.height)) - cy
        if cw <= 0 or ch <= 0:
            dropped += 1
            continue
        if (cx, cy, cw, ch) != (x, y, w, h):
            clamped += 1
            x, y, w, h = cx, cy, cw, ch
        annotations.append(
            Annotation(
                id=int(raw["id"]),
                image_id=image_id,
                category_id=category_id,
                bbox=BoundingBox(x, y, w, h),
            )
        )

    return Dataset(
        images=tuple(images),
        annotations=tuple(annotations),
        categories=categories,
        report=LoadReport(dropped_degenerate=dropped, clamped=clamped),
    )


def load_dataset(path) -> Dataset:
    with open(path, "rb") as f:
        return parse_coco(f.read())


def dataset_stats(d: Dataset) -> CategoryStats:
    """Arithmetic mean bbox height/width per category and over all annotations."""
    if not d.annotations:
        raise ValueError("no annotations")
    sums: dict[int, list[float]] = {}
    for a in d.annotations:
        acc = sums.setdefault(a.category_id, [0.0, 0.0, 0])
        acc[0] += a.bbox.h
        acc[1] += a.bbox.w
        acc[2] += 1
    per_category = {
        cid: CategoryScale(mean_h=sh / n, mean_w=sw / n, count=n)
        for cid, (sh, sw, n) in sorted(sums.items())
    }
    total = len(d.annotations)
    return CategoryStats(
        per_category=per_category,
        global_mean_h=sum(a.bbox.h for a in d.annotations) / total,
        global_mean_w=sum(a.bbox.w for a in d.annotations) / total,
        total=total,
    )


def write_density(raster: np.ndarray) -> bytes:
    """Serialize a 2-D non-negative float raster to DMAP bytes (bit-exact)."""
    arr = np.asarray(raster)
    if arr.ndim != 2:
        raise FormatError(f"raster must be 2-D, got shape {arr.shape}")
    arr = arr.astype("<f4", copy=False)
    if not np.isfinite(arr).all():
        raise FormatError("raster contains non-finite values")
    if (arr < 0).any():
        raise FormatError("raster contains negative values")
    h, w = arr.shape
    return _DMAP_HEADER.pack(DMAP_MAGIC, DMAP_VERSION, 0, h, w) + arr.tobytes(order="C")


def read_density(data: bytes) -> np.ndarray:
    """Parse DMAP bytes back into a float32 raster; inverse of write_density."""
    if len(data) < _DMAP_HEADER.size:
        raise FormatError("truncated header")
    magic, version, _reserved, h, w = _DMAP_HEADER.unpack_from(data)
    if magic != DMAP_MAGIC:
        raise FormatError(f"bad magic {magic!r}")
    if version != DMAP_VERSION:
        raise FormatError(f"unsupported version {version}")
    expected = _DMAP_HEADER.size + 4 * h * w
    if len(data) != expected:
        raise FormatError(f"payload length {len(data)} != expected {expected}")
    values = np.frombuffer(data, dtype="<f4", offset=_DMAP_HEADER.size).reshape(h, w)
    if not np.isfinite(values).all() or (values < 0).any():
        raise FormatError("raster contains negative or non-finite values")
    return values.copy()


def save_density(path, raster: np.ndarray) -> None:
    with open(path, "wb") as f:
        f.write(write_density(raster))


def load_density(path) -> np.ndarray:
    with open(path, "rb") as f:
        return read_density(f.read())


def write_coco_detections(dets: Sequence) -> bytes:
    """Serialize detections as a COCO results JSON array.

    Entries are sorted by (image_id, descending score); equal keys keep
    input order. Scores outside [0, 1] are rejected.
    """
    for d in dets:
        if not (0.0 <= d.score <= 1.0):
            raise ValueError(f"score {d.score} outside [0, 1]")
    ordered = sorted(dets, key=lambda d: (d.image_id, -d.score))
    rows = [
        {
            "image_id": d.image_id,
            "category_id": d.category_id,
            "bbox": [d.bbox.x, d.bbox.y, d.bbox.w, d.bbox.h],
            "score": d.score,
        }
        for d in ordered
    ]
    return json.dumps(rows, indent=1).encode("utf-8")


def read_coco_detections(data: bytes | str) -> list:
    """Parse a COCO results JSON array into Detection objects (origin unset)."""
    from .remap import Detection

    if isinstance(data, bytes):
        data = data.decode("utf-8")
    try:
        rows = json.loads(data)
    except json.JSONDecodeError as e:
        raise FormatError(f"JSON parse error at byte offset {e.pos}: {e.msg}") from e
    dets = []
    for row in rows:
        x, y, w, h = (float(v) for v in row["bbox"])
        dets.append(
            Detection(
                image_id=int(row["image_id"]),
                category_id=int(row["category_id"]),
                bbox=BoundingBox(x, y, w, h),
                score=float(row["score"]),
            )
        )
    return dets
