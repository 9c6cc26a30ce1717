"""COCO-style average precision over IoU thresholds 0.50:0.05:0.95.

Matching follows the MS COCO protocol: per category, detections are taken
in descending score order and greedily matched to the unmatched ground-truth
box of the same image with the highest IoU at or above the threshold.
Precision is interpolated (envelope) and sampled at 101 recall points. For
the size-bucketed metrics, ground truth outside the bucket is ignored, as
are detections matched to ignored ground truth and unmatched detections
whose own area falls outside the bucket.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Optional, Sequence

import numpy as np

from .dataset_io import Dataset
from .geometry import AreaClass, area_class, iou
from .remap import Detection

IOU_THRESHOLDS = (0.5, 0.55, 0.6, 0.65, 0.7, 0.75, 0.8, 0.85, 0.9, 0.95)
_RECALL_POINTS = np.linspace(0.0, 1.0, 101)

# JSON stand-in for metrics that are undefined (no ground truth in bucket),
# matching the convention of common COCO tooling.
UNDEFINED = -1.0


@dataclass(frozen=True)
class EvalResult:
    ap: Optional[float]
    ap50: Optional[float]
    ap75: Optional[float]
    ap_small: Optional[float]
    ap_medium: Optional[float]
    ap_large: Optional[float]
    per_category: Mapping[int, Optional[float]]

    def to_dict(self) -> dict:
        def enc(v):
            return UNDEFINED if v is None else v

        return {
            "AP": enc(self.ap),
            "AP50": enc(self.ap50),
            "AP75": enc(self.ap75),
            "APs": enc(self.ap_small),
            "APm": enc(self.ap_medium),
            "APl": enc(self.ap_large),
            "per_category": {str(k): enc(v) for k, v in sorted(self.per_category.items())},
        }


def _average_precision(tp: list[bool], npos: int) -> float:
    """AP from a score-ordered TP/FP sequence via 101-point interpolation."""
    if npos == 0:
        raise ValueError("npos must be > 0")
    if not tp:
        return 0.0
    tp_arr = np.asarray(tp, dtype=np.float64)
    tp_cum = np.cumsum(tp_arr)
    fp_cum = np.cumsum(1.0 - tp_arr)
    recall = tp_cum / npos
    precision = tp_cum / (tp_cum + fp_cum)
    # precision envelope: best precision at this recall or beyond
    for i in range(len(precision) - 2, -1, -1):
        if precision[i] < precision[i + 1]:
            precision[i] = precision[i + 1]
    idx = np.searchsorted(recall, _RECALL_POINTS, side="left")
    sampled = np.where(idx < len(precision), precision[np.minimum(idx, len(precision) - 1)], 0.0)
    return float(sampled.mean())


def _match_category(
    dets: list[Detection],
    gts_by_image: dict[int, list],
    thr: float,
    bucket: Optional[AreaClass],
) -> tuple[list[bool], int]:
    """Greedy matching for one category at one threshold and size bucket.

    Returns the TP flags of non-ignored detections in score order and the
    number of non-ignored ground-truth boxes.
    """
    gt_state: dict[int, list] = {}  # image_id -> [matched flags, ignore flags, boxes]
    npos = 0
    for image_id, boxes in gts_by_image.items():
        ignore = [bucket is not None and area_class(b) != bucket for b in boxes]
        npos += sum(1 for ig in ignore if not ig)
        gt_state[image_id] = [[False] * len(boxes), ignore, boxes]
    tp_flags: list[bool] = []
    for det in dets:
        state = gt_state.get(det.image_id)
        best_real, best_real_iou = -1, -1.0
        best_ign, best_ign_iou = -1, -1.0
        if state is not None:
            matched, ignore, boxes = state
            for j, gbox in enumerate(boxes):
                if matched[j]:
                    continue
                ov = iou(det.bbox, gbox)
                if ov < thr:
                    continue
                if ignore[j]:
                    if ov > best_ign_iou:
                        best_ign, best_ign_iou = j, ov
                elif ov > best_real_iou:
                    best_real, best_real_iou = j, ov
        if best_real >= 0:
            gt_state[det.image_id][0][best_real] = True
            tp_flags.append(True)
        elif best_ign >= 0:
            gt_state[det.image_id][0][best_ign] = True  # consumed, det ignored
        elif bucket is not None and area_class(det.bbox) != bucket:
            pass  # unmatched detection outside the bucket: ignored
        else:
            tp_flags.append(False)
    return tp_flags, npos


def evaluate(dets: Sequence[Detection], gt: Dataset) -> EvalResult:
    """COCO-style AP metrics of detections against a ground-truth dataset."""
    image_ids = {im.id for im in gt.images}
    for det in dets:
        if det.category_id not in gt.categories:
            raise ValueError(f"detection references unknown category {det.category_id}")
        if det.image_id not in image_ids:
            raise ValueError(f"detection references unknown image {det.image_id}")

    dets_by_cat: dict[int, list[Detection]] = {}
    for det in sorted(dets, key=lambda d: -d.score):
        dets_by_cat.setdefault(det.category_id, []).append(det)
    gts_by_cat: dict[int, dict[int, list]] = {}
    for ann in gt.annotations:
        gts_by_cat.setdefault(ann.category_id, {}).setdefault(ann.image_id, []).append(ann.bbox)

    buckets: dict[Optional[AreaClass], dict[int, list[Optional[float]]]] = {}
    for bucket in (None, AreaClass.SMALL, AreaClass.MEDIUM, AreaClass.LARGE):
        per_cat: dict[int, list[Optional[float]]] = {}
        for cat in gt.categories:
            cat_dets = dets_by_cat.get(cat, [])
            cat_gts = gts_by_cat.get(cat, {})
            aps: list[Optional[float]] = []
            for thr in IOU_THRESHOLDS:
                tp_flags, npos = _match_category(cat_dets, cat_gts, thr, bucket)
                aps.append(_average_precision(tp_flags, npos) if npos > 0 else None)
            per_cat[cat] = aps
        buckets[bucket] = per_cat

    def mean_ap(bucket: Optional[AreaClass], thr_index: Optional[int] = None) -> Optional[float]:
        values = []
        for aps in buckets[bucket].values():
            take = aps if thr_index is None else [aps[thr_index]]
            values.extend(v for v in take if v is not None)
        return sum(values) / len(values) if values else None

    per_category = {}
    for cat, aps in buckets[None].items():
        defined = [v for v in aps if v is not None]
        per_category[cat] = sum(defined) / len(defined) if defined else None

    return EvalResult(
        ap=mean_ap(None),
        ap50=mean_ap(None, IOU_THRESHOLDS.index(0.5)),
        ap75=mean_ap(None, IOU_THRESHOLDS.index(0.75)),
        ap_small=mean_ap(AreaClass.SMALL),
        ap_medium=mean_ap(AreaClass.MEDIUM),
        ap_large=mean_ap(AreaClass.LARGE),
        per_category=per_category,
    )
