import numpy as np
import pytest

from conftest import clustered_dataset, make_dataset
from densitycrop.evaluation import EvalResult, evaluate
from densitycrop.geometry import BoundingBox
from densitycrop.remap import Detection


def gt_as_detections(ds, score=1.0):
    return [
        Detection(a.image_id, a.category_id, a.bbox, score) for a in ds.annotations
    ]


class TestEvaluate:
    def test_perfect_detector(self, small_dataset):
        res = evaluate(gt_as_detections(small_dataset), small_dataset)
        assert res.ap == pytest.approx(1.0, abs=1e-6)
        assert res.ap50 == pytest.approx(1.0, abs=1e-6)
        assert res.ap75 == pytest.approx(1.0, abs=1e-6)
        for cat_ap in res.per_category.values():
            assert cat_ap == pytest.approx(1.0, abs=1e-6)

    def test_no_detections(self, small_dataset):
        res = evaluate([], small_dataset)
        assert res.ap == 0.0
        assert res.ap50 == 0.0
        # fixture boxes are 20x30, 40x20, 30x40: small and medium only
        assert res.ap_small == 0.0
        assert res.ap_medium == 0.0
        assert res.ap_large is None

    def test_single_box_iou_06_hand_case(self):
        ds = make_dataset(
            [(1, "a.jpg", 100, 100)], [(1, 1, 1, (0, 0, 10, 10))], [(1, "car")]
        )
        det = Detection(1, 1, BoundingBox(0, 2.5, 10, 10), 1.0)
        res = evaluate([det], ds)
        # matches at thresholds 0.50, 0.55, 0.60 only: AP = 3/10
        assert res.ap == pytest.approx(0.30, abs=1e-12)
        assert res.ap50 == pytest.approx(1.0, abs=1e-12)
        assert res.ap75 == 0.0

    def test_leading_false_positive_halves_ap(self):
        ds = make_dataset(
            [(1, "a.jpg", 200, 200)], [(1, 1, 1, (0, 0, 50, 50))], [(1, "car")]
        )
        dets = [
            Detection(1, 1, BoundingBox(150, 150, 10, 10), 0.95),
            Detection(1, 1, BoundingBox(0, 0, 50, 50), 0.9),
        ]
        res = evaluate(dets, ds)
        assert res.ap50 == pytest.approx(0.5, abs=1e-12)

    def test_trailing_false_positive_does_not_hurt(self):
        ds = make_dataset(
            [(1, "a.jpg", 200, 200)], [(1, 1, 1, (0, 0, 50, 50))], [(1, "car")]
        )
        dets = [
            Detection(1, 1, BoundingBox(0, 0, 50, 50), 0.9),
            Detection(1, 1, BoundingBox(150, 150, 10, 10), 0.8),
        ]
        assert evaluate(dets, ds).ap50 == pytest.approx(1.0, abs=1e-12)

    def test_reordering_invariance_at_distinct_scores(self):
        ds = clustered_dataset(seed=5, n_images=3)
        rng = np.random.default_rng(71)
        scores = rng.permutation(np.linspace(0.2, 0.99, len(ds.annotations)))
        dets = [
            Detection(a.image_id, a.category_id, a.bbox, float(s))
            for a, s in zip(ds.annotations, scores)
        ]
        base = evaluate(dets, ds)
        for seed in (1, 2, 3):
            shuffled = list(dets)
            np.random.default_rng(seed).shuffle(shuffled)
            assert evaluate(shuffled, ds) == base

    def test_size_buckets(self):
        ds = make_dataset(
            [(1, "a.jpg", 1000, 1000)],
            [
                (1, 1, 1, (10, 10, 20, 20)),     # small (400)
                (2, 1, 1, (200, 200, 150, 150)),  # large (22500)
            ],
            [(1, "car")],
        )
        res = evaluate(gt_as_detections(ds), ds)
        assert res.ap_small == pytest.approx(1.0, abs=1e-6)
        assert res.ap_large == pytest.approx(1.0, abs=1e-6)
        assert res.ap_medium is None

    def test_bucket_miss_only_penalizes_its_bucket(self):
        ds = make_dataset(
            [(1, "a.jpg", 1000, 1000)],
            [
                (1, 1, 1, (10, 10, 20, 20)),      # small
                (2, 1, 1, (200, 200, 150, 150)),  # large
            ],
            [(1, "car")],
        )
        dets = [Detection(1, 1, BoundingBox(200, 200, 150, 150), 1.0)]
        res = evaluate(dets, ds)
        assert res.ap_small == 0.0
        assert res.ap_large == pytest.approx(1.0, abs=1e-6)

    def test_unknown_category_rejected(self, small_dataset):
        with pytest.raises(ValueError, match="category"):
            evaluate([Detection(1, 9, BoundingBox(0, 0, 5, 5), 0.5)], small_dataset)

    def test_unknown_image_rejected(self, small_dataset):
        with pytest.raises(ValueError, match="image"):
            evaluate([Detection(9, 1, BoundingBox(0, 0, 5, 5), 0.5)], small_dataset)

    def test_report_serialization(self, small_dataset):
        res = evaluate([], small_dataset)
        doc = res.to_dict()
        assert doc["APl"] == -1.0
        assert doc["AP"] == 0.0
        assert set(doc["per_category"]) == {"1", "2"}


class TestEvalResult:
    def test_roundtrip_fields(self):
        res = EvalResult(0.5, 0.6, 0.4, None, 0.2, 0.9, {1: 0.5})
        doc = res.to_dict()
        assert doc["APs"] == -1.0
        assert doc["AP50"] == 0.6
