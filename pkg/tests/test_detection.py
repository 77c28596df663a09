import numpy as np
import pytest
from hypothesis import given, strategies as st

from polerisk.detection import (Detection, GroundTruth, average_precision,
                                iou, load_detections_csv,
                                load_ground_truth_csv, match_detections,
                                mean_average_precision)
from polerisk.imaging import BBox

from helpers import brute_force_ap


def det(score, box, image="img", cls=0):
    return Detection(image_id=image, class_id=cls, score=score, box=BBox(*box))


def gt(box, image="img", cls=0):
    return GroundTruth(image_id=image, class_id=cls, box=BBox(*box))


boxes = st.tuples(
    st.floats(-100, 100, allow_nan=False), st.floats(-100, 100, allow_nan=False),
    st.floats(0.1, 50), st.floats(0.1, 50),
).map(lambda t: BBox(t[0], t[1], t[0] + t[2], t[1] + t[3]))


class TestIou:
    def test_identical_boxes(self):
        box = BBox(3, 4, 10, 12)
        assert iou(box, box) == 1.0

    def test_disjoint_boxes(self):
        assert iou(BBox(0, 0, 1, 1), BBox(5, 5, 6, 6)) == 0.0

    def test_hand_computed_overlap(self):
        # Areas 4 and 4, intersection 1, union 7.
        assert iou(BBox(0, 0, 2, 2), BBox(1, 1, 3, 3)) == pytest.approx(1 / 7)

    @given(boxes, boxes)
    def test_symmetry(self, a, b):
        assert iou(a, b) == iou(b, a)
        assert 0.0 <= iou(a, b) <= 1.0

    @given(boxes)
    def test_self_iou(self, a):
        assert iou(a, a) == 1.0

    def test_touching_boxes_zero(self):
        assert iou(BBox(0, 0, 1, 1), BBox(1, 0, 2, 1)) == 0.0


class TestMatching:
    def test_perfect_detection_is_tp(self):
        flags = match_detections([det(0.9, (0, 0, 10, 10))],
                                 [gt((0, 0, 10, 10))], 0.5)
        assert flags == [(det(0.9, (0, 0, 10, 10)), True)]

    def test_duplicate_detections_one_tp(self):
        d_hi = det(0.9, (0, 0, 10, 10))
        d_lo = det(0.5, (1, 1, 10, 10))
        flags = dict(match_detections([d_lo, d_hi], [gt((0, 0, 10, 10))], 0.5))
        assert flags[d_hi] is True
        assert flags[d_lo] is False

    def test_below_threshold_is_fp(self):
        # IoU here is 4/(25+4-4) = 0.16, well under 0.5.
        flags = match_detections([det(0.9, (0, 0, 2, 2))], [gt((0, 0, 5, 5))], 0.5)
        assert flags[0][1] is False

    def test_class_and_image_must_match(self):
        d = det(0.9, (0, 0, 10, 10), image="a", cls=1)
        assert match_detections([d], [gt((0, 0, 10, 10), image="a", cls=0)])[0][1] is False
        assert match_detections([d], [gt((0, 0, 10, 10), image="b", cls=1)])[0][1] is False

    def test_stable_order_for_equal_scores(self):
        d1 = det(0.5, (0, 0, 10, 10))
        d2 = det(0.5, (0.5, 0.5, 10, 10))
        flagged = match_detections([d1, d2], [gt((0, 0, 10, 10))], 0.5)
        assert [f[0] for f in flagged] == [d1, d2]
        assert [f[1] for f in flagged] == [True, False]

    def test_threshold_validation(self):
        with pytest.raises(ValueError):
            match_detections([], [], iou_thresh=0.0)


class TestAveragePrecision:
    def test_single_tp(self):
        assert average_precision([True], 1) == 1.0

    def test_tp_then_fp(self):
        assert average_precision([True, False], 1) == 1.0

    def test_fp_then_tp(self):
        assert average_precision([False, True], 1) == 0.5

    def test_no_gt_no_dets_undefined(self):
        assert average_precision([], 0) is None

    def test_no_gt_with_dets_zero(self):
        assert average_precision([False, False], 0) == 0.0

    def test_gt_without_dets_zero(self):
        assert average_precision([], 3) == 0.0

    def test_appending_fp_never_increases(self):
        rng = np.random.default_rng(8)
        for _ in range(100):
            n_gt = int(rng.integers(1, 5))
            flags = list(rng.uniform(size=rng.integers(0, 8)) < 0.5)
            tp_count = min(sum(flags), n_gt)
            flags = flags[:len(flags)]
            base = average_precision(flags, n_gt)
            extended = average_precision(flags + [False], n_gt)
            assert extended <= base + 1e-15

    @given(st.lists(st.booleans(), max_size=12), st.integers(1, 6))
    def test_matches_brute_force_enumeration(self, flags, n_gt):
        flags = list(flags)
        if sum(flags) > n_gt:
            flags = flags[:n_gt]  # cannot have more TPs than ground truths
        assert average_precision(flags, n_gt) == pytest.approx(
            brute_force_ap(flags, n_gt), abs=1e-12)


class TestMeanAveragePrecision:
    def test_single_class_perfect(self):
        report = mean_average_precision([det(0.9, (0, 0, 10, 10))],
                                        [gt((0, 0, 10, 10))])
        assert report.map_value == 1.0
        assert report.per_class_ap == {0: 1.0}
        assert report.n_classes == 1

    def test_two_class_mean(self):
        dets = [det(0.9, (0, 0, 10, 10), cls=0),
                det(0.8, (50, 50, 60, 60), cls=1),
                det(0.9, (80, 80, 90, 90), cls=1)]
        gts = [gt((0, 0, 10, 10), cls=0), gt((50, 50, 60, 60), cls=1)]
        report = mean_average_precision(dets, gts)
        assert report.per_class_ap[0] == 1.0
        assert report.per_class_ap[1] == 0.5
        assert report.map_value == 0.75

    def test_no_classes_raises(self):
        with pytest.raises(ValueError):
            mean_average_precision([], [])

    def test_random_instances_match_oracle(self):
        rng = np.random.default_rng(31)
        for _ in range(20):
            n_det = int(rng.integers(1, 11))
            n_gt = int(rng.integers(1, 6))
            dets = [det(float(rng.uniform()),
                        tuple(_rand_box(rng)), cls=int(rng.integers(0, 2)))
                    for _ in range(n_det)]
            gts = [gt(tuple(_rand_box(rng)), cls=int(rng.integers(0, 2)))
                   for _ in range(n_gt)]
            flagged = match_detections(dets, gts, 0.5)
            report = mean_average_precision(dets, gts, 0.5)
            for cls, ap in report.per_class_ap.items():
                flags = [tp for d, tp in flagged if d.class_id == cls]
                count = sum(1 for g in gts if g.class_id == cls)
                assert ap == pytest.approx(brute_force_ap(flags, count), abs=1e-12)

    def test_equal_score_permutation_stability(self):
        d1 = det(0.7, (0, 0, 10, 10))
        d2 = det(0.7, (100, 100, 110, 110))
        gts = [gt((0, 0, 10, 10)), gt((100, 100, 110, 110))]
        a = mean_average_precision([d1, d2], gts).map_value
        b = mean_average_precision([d2, d1], gts).map_value
        assert a == b == 1.0


def _rand_box(rng):
    x0, y0 = rng.uniform(0, 50, 2)
    w, h = rng.uniform(5, 30, 2)
    return x0, y0, x0 + w, y0 + h


class TestCsvLoading:
    def test_detections_round_trip(self):
        text = ("image_id,class_id,score,x_min,y_min,x_max,y_max\n"
                "img1,0,0.95,10,20,30,40\n")
        dets = load_detections_csv(text)
        assert dets == [det(0.95, (10, 20, 30, 40), image="img1")]

    def test_ground_truth_loading(self):
        text = "image_id,class_id,x_min,y_min,x_max,y_max\nimg1,2,0,0,5,5\n"
        gts = load_ground_truth_csv(text)
        assert gts == [gt((0, 0, 5, 5), image="img1", cls=2)]

    def test_bad_header_rejected(self):
        with pytest.raises(ValueError, match="header"):
            load_detections_csv("a,b\n1,2\n")

    def test_wrong_column_count_reports_line(self):
        text = "image_id,class_id,x_min,y_min,x_max,y_max\nimg1,2,0,0,5\n"
        with pytest.raises(ValueError, match="line 2"):
            load_ground_truth_csv(text)
