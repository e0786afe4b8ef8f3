import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from s3mnet.dataio import IGNORE_LABEL
from s3mnet.errors import LabelError, UndefinedMetricError
from s3mnet.metrics import (
    MetricsReport,
    confusion_matrix,
    per_class_debug,
    segmentation_metrics,
    stereo_metrics,
)

# the worked 2x2 example: gt rows (0,0),(1,1); pred rows (0,1),(1,1)
GT_2X2 = np.array([[0, 0], [1, 1]])
PRED_2X2 = np.array([[0, 1], [1, 1]])


class TestConfusionMatrix:
    def test_perfect_prediction_is_diagonal(self, rng):
        gt = rng.integers(0, 4, (8, 8))
        cm = confusion_matrix(gt, gt, 4)
        assert np.array_equal(cm, np.diag(np.bincount(gt.ravel(), minlength=4)))

    def test_hand_tally(self):
        cm = confusion_matrix(PRED_2X2, GT_2X2, 2)
        assert cm.tolist() == [[1, 1], [0, 2]]

    def test_all_ignore_is_zero(self):
        gt = np.full((3, 3), IGNORE_LABEL)
        cm = confusion_matrix(np.zeros((3, 3), dtype=int), gt, 3)
        assert cm.sum() == 0

    def test_rejects_out_of_range(self):
        with pytest.raises(LabelError):
            confusion_matrix(np.array([[5]]), np.array([[0]]), 3)

    def test_total_counts_non_ignored(self):
        gt = np.array([[0, IGNORE_LABEL], [1, 1]])
        cm = confusion_matrix(np.zeros((2, 2), dtype=int), gt, 2)
        assert cm.sum() == 3


class TestSegmentationMetrics:
    def test_perfect_prediction_all_ones(self, rng):
        gt = rng.integers(0, 3, (10, 10))
        m = segmentation_metrics(confusion_matrix(gt, gt, 3))
        for value in vars(m).values():
            assert value == pytest.approx(1.0)

    def test_hand_derived_2x2_case(self):
        m = segmentation_metrics(confusion_matrix(PRED_2X2, GT_2X2, 2))
        assert m.acc == pytest.approx(0.75, abs=1e-6)
        assert m.m_acc == pytest.approx(0.75, abs=1e-6)
        assert m.m_iou == pytest.approx((1 / 2 + 2 / 3) / 2, abs=1e-6)
        assert m.fw_iou == pytest.approx(0.5 * 0.5 + 0.5 * (2 / 3), abs=1e-6)
        assert m.precision == pytest.approx((1 + 2 / 3) / 2, abs=1e-6)
        assert m.recall == pytest.approx(0.75, abs=1e-6)
        assert m.f_score == pytest.approx((2 / 3 + 4 / 5) / 2, abs=1e-6)

    def test_single_class_ground_truth(self):
        gt = np.ones((4, 4), dtype=int)
        m = segmentation_metrics(confusion_matrix(gt, gt, 3))
        assert m.acc == 1.0 and m.m_acc == 1.0 and m.m_iou == 1.0

    def test_empty_matrix_raises(self):
        with pytest.raises(UndefinedMetricError):
            segmentation_metrics(np.zeros((3, 3), dtype=int))

    @given(st.integers(0, 10_000))
    @settings(max_examples=30, deadline=None)
    def test_class_permutation_invariance(self, seed):
        gen = np.random.default_rng(seed)
        gt = gen.integers(0, 4, (6, 6))
        pred = gen.integers(0, 4, (6, 6))
        perm = gen.permutation(4)
        a = segmentation_metrics(confusion_matrix(pred, gt, 4))
        b = segmentation_metrics(confusion_matrix(perm[pred], perm[gt], 4))
        for f in vars(a):
            assert getattr(a, f) == pytest.approx(getattr(b, f), abs=1e-12)

    @given(st.integers(0, 10_000))
    @settings(max_examples=30, deadline=None)
    def test_additivity_over_images(self, seed):
        gen = np.random.default_rng(seed)
        gt1, pred1 = gen.integers(0, 3, (4, 4)), gen.integers(0, 3, (4, 4))
        gt2, pred2 = gen.integers(0, 3, (4, 4)), gen.integers(0, 3, (4, 4))
        merged = segmentation_metrics(
            confusion_matrix(np.concatenate([pred1, pred2]), np.concatenate([gt1, gt2]), 3)
        )
        summed = segmentation_metrics(
            confusion_matrix(pred1, gt1, 3) + confusion_matrix(pred2, gt2, 3)
        )
        for f in vars(merged):
            assert getattr(merged, f) == pytest.approx(getattr(summed, f), abs=1e-12)

    @given(st.integers(0, 10_000))
    @settings(max_examples=30, deadline=None)
    def test_fw_iou_between_extremes(self, seed):
        gen = np.random.default_rng(seed)
        gt = gen.integers(0, 3, (6, 6))
        pred = gen.integers(0, 3, (6, 6))
        cm = confusion_matrix(pred, gt, 3)
        m = segmentation_metrics(cm)
        tp = np.diag(cm).astype(float)
        gt_c, pred_c = cm.sum(1), cm.sum(0)
        with np.errstate(invalid="ignore"):
            iou = np.where(gt_c + pred_c - tp > 0, tp / (gt_c + pred_c - tp), 0)
        present = gt_c > 0
        assert m.fw_iou <= iou[present].max() + 1e-12
        assert m.fw_iou >= iou[present].min() - 1e-12


class TestStereoMetrics:
    def test_zero_error(self):
        d = np.random.default_rng(0).random((5, 5)) * 10
        assert stereo_metrics(d, d, np.ones_like(d, dtype=bool)) == (0.0, 0.0, 0.0)

    def test_hand_case(self):
        gt = np.zeros((1, 3))
        pred = np.array([[0.0, 2.0, 4.0]])
        epe, pep_1, pep_3 = stereo_metrics(pred, gt, np.ones((1, 3), dtype=bool))
        assert epe == pytest.approx(2.0)
        assert pep_1 == pytest.approx(2 / 3)
        assert pep_3 == pytest.approx(1 / 3)

    def test_strict_threshold_at_exactly_one(self):
        gt = np.zeros((1, 4))
        pred = np.ones((1, 4))
        _, pep_1, _ = stereo_metrics(pred, gt, np.ones((1, 4), dtype=bool))
        assert pep_1 == 0.0

    def test_mask_respected(self):
        gt = np.zeros((1, 2))
        pred = np.array([[100.0, 1.0]])
        valid = np.array([[False, True]])
        epe, _, _ = stereo_metrics(pred, gt, valid)
        assert epe == pytest.approx(1.0)

    def test_empty_mask_raises(self):
        with pytest.raises(UndefinedMetricError):
            stereo_metrics(np.zeros((2, 2)), np.zeros((2, 2)), np.zeros((2, 2), dtype=bool))

    @given(st.integers(0, 100_000))
    @settings(max_examples=200, deadline=None)
    def test_pep3_never_exceeds_pep1(self, seed):
        gen = np.random.default_rng(seed)
        gt = gen.random((4, 4)) * 10
        pred = gt + gen.normal(0, 3, (4, 4))
        valid = gen.random((4, 4)) > 0.2
        if not valid.any():
            valid[0, 0] = True
        _, pep_1, pep_3 = stereo_metrics(pred, gt, valid)
        assert pep_3 <= pep_1


class TestPerClassDebug:
    def test_rows_match_hand_case(self):
        rows = per_class_debug(confusion_matrix(PRED_2X2, GT_2X2, 2))
        assert rows[0]["acc"] == pytest.approx(0.5)
        assert rows[0]["iou"] == pytest.approx(0.5)
        assert rows[1]["precision"] == pytest.approx(2 / 3)
        assert rows[1]["recall"] == pytest.approx(1.0)
        assert rows[0]["gt_pixels"] == 2


class TestReport:
    def test_text_format(self):
        report = MetricsReport(
            acc=1.0, m_acc=0.5, m_iou=0.583333, fw_iou=0.25, precision=0.833333,
            recall=0.75, f_score=0.733333, epe=2.0, pep_1=2 / 3, pep_3=1 / 3,
        )
        text = report.to_text()
        lines = text.strip().splitlines()
        assert lines[0] == "acc = 1.000000"
        assert "epe = 2.000000" in lines
        assert "pep_1 = 0.666667" in lines
        keys = [ln.split(" = ")[0] for ln in lines]
        assert keys == ["acc", "m_acc", "m_iou", "fw_iou", "precision",
                        "recall", "f_score", "epe", "pep_1", "pep_3"]
