"""Shared synthetic fixtures: COCO documents and datasets built in code so
every expected value can be recomputed independently."""

from __future__ import annotations

import json

import numpy as np
import pytest

from densitycrop.dataset_io import Annotation, Dataset, ImageRecord, parse_coco
from densitycrop.geometry import BoundingBox, iou


def random_detections(rng, n, n_images=2, n_cats=3):
    from densitycrop.remap import Detection

    return [
        Detection(
            image_id=int(rng.integers(1, n_images + 1)),
            category_id=int(rng.integers(1, n_cats + 1)),
            bbox=BoundingBox(*rng.uniform(0, 80, 2), *rng.uniform(1, 40, 2)),
            score=float(rng.uniform(0, 1)),
        )
        for _ in range(n)
    ]


def dataset_to_coco_bytes(ds) -> bytes:
    images = [(im.id, im.file_name, im.width, im.height) for im in ds.images]
    annotations = [
        (a.id, a.image_id, a.category_id, (a.bbox.x, a.bbox.y, a.bbox.w, a.bbox.h))
        for a in ds.annotations
    ]
    return coco_bytes(images, annotations, sorted(ds.categories.items()))


def coco_doc(images, annotations, categories) -> dict:
    return {
        "images": [
            {"id": i, "file_name": f, "width": w, "height": h}
            for (i, f, w, h) in images
        ],
        "annotations": [
            {"id": a, "image_id": i, "category_id": c, "bbox": list(bbox)}
            for (a, i, c, bbox) in annotations
        ],
        "categories": [{"id": c, "name": n} for (c, n) in categories],
    }


def coco_bytes(images, annotations, categories) -> bytes:
    return json.dumps(coco_doc(images, annotations, categories)).encode()


def make_dataset(images, annotations, categories) -> Dataset:
    return parse_coco(coco_bytes(images, annotations, categories))


def clustered_dataset(
    seed: int = 20240717, n_images: int = 10, n_categories: int = 1
) -> Dataset:
    """Images with tight object clusters and limited pairwise overlap.

    Rejection sampling keeps same-image GT IoU <= 0.3, so fusion NMS at 0.7
    never suppresses one real object in favor of another and a perfect
    detector stays perfect end to end.
    """
    names = ("car", "van", "truck", "pedestrian")
    rng = np.random.default_rng(seed)
    images, anns = [], []
    ann_id = 1
    for img_id in range(1, n_images + 1):
        width, height = 800, 600
        images.append(ImageRecord(img_id, f"img{img_id}.jpg", width, height))
        placed: list[BoundingBox] = []
        for _cluster in range(2):
            ccx = rng.uniform(150, width - 150)
            ccy = rng.uniform(150, height - 150)
            for _ in range(int(rng.integers(6, 12))):
                for _attempt in range(50):
                    w = rng.uniform(18, 30)
                    h = rng.uniform(14, 24)
                    cx = ccx + rng.uniform(-55, 55)
                    cy = ccy + rng.uniform(-45, 45)
                    x = min(max(cx - w / 2, 1.0), width - w - 1)
                    y = min(max(cy - h / 2, 1.0), height - h - 1)
                    box = BoundingBox(x, y, w, h)
                    if all(iou(box, p) <= 0.3 for p in placed):
                        placed.append(box)
                        cat = 1 + int(rng.integers(0, n_categories))
                        anns.append(Annotation(ann_id, img_id, cat, box))
                        ann_id += 1
                        break
    categories = {i + 1: names[i % len(names)] for i in range(n_categories)}
    return Dataset(images=tuple(images), annotations=tuple(anns), categories=categories)


def bus_cluster_dataset() -> Dataset:
    """One 1000x600 image with three stacked bus-sized boxes (140x100).

    The boxes straddle the x = 140 sliding-window boundary, so a small fixed
    kernel can never produce a crop wide enough to contain one, while the
    category-scale kernel lights up windows across the whole stack.
    """
    buses = tuple(
        Annotation(i + 1, 1, 2, BoundingBox(103, by, 140, 100))
        for i, by in enumerate((120, 235, 350))
    )
    return Dataset(
        images=(ImageRecord(1, "img1.jpg", 1000, 600),),
        annotations=buses,
        categories={2: "bus"},
    )


@pytest.fixture
def small_dataset() -> Dataset:
    return make_dataset(
        images=[(1, "a.jpg", 200, 100), (2, "b.jpg", 300, 150)],
        annotations=[
            (1, 1, 1, (10, 10, 20, 30)),
            (2, 1, 2, (50, 40, 40, 20)),
            (3, 2, 1, (100, 50, 30, 40)),
        ],
        categories=[(1, "car"), (2, "truck")],
    )
