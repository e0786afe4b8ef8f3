"""Evaluation suite: seven segmentation metrics from a confusion matrix plus
masked end-point error and error-pixel percentages for disparity.

Pre/Rec/FSc are macro means over classes present in ground truth or
predictions; a class with a zero denominator contributes 0 to its own ratio.
PEP uses strict > at both tolerances.
"""

from __future__ import annotations

from dataclasses import dataclass, fields

import numpy as np

from .dataio import IGNORE_LABEL
from .errors import LabelError, UndefinedMetricError


@dataclass
class SegmentationMetrics:
    acc: float
    m_acc: float
    m_iou: float
    fw_iou: float
    precision: float
    recall: float
    f_score: float


@dataclass
class MetricsReport:
    acc: float
    m_acc: float
    m_iou: float
    fw_iou: float
    precision: float
    recall: float
    f_score: float
    epe: float
    pep_1: float
    pep_3: float

    def to_text(self):
        lines = [f"{f.name} = {getattr(self, f.name):.6f}" for f in fields(self)]
        return "\n".join(lines) + "\n"

    @staticmethod
    def from_parts(seg: SegmentationMetrics, epe, pep_1, pep_3):
        return MetricsReport(
            acc=seg.acc,
            m_acc=seg.m_acc,
            m_iou=seg.m_iou,
            fw_iou=seg.fw_iou,
            precision=seg.precision,
            recall=seg.recall,
            f_score=seg.f_score,
            epe=epe,
            pep_1=pep_1,
            pep_3=pep_3,
        )


def confusion_matrix(pred, gt, class_count, ignore_label=IGNORE_LABEL):
    """counts[g][p] = pixels with ground truth g predicted p; ignore-gt skipped."""
    pred = np.asarray(pred).ravel()
    gt = np.asarray(gt).ravel()
    if pred.shape != gt.shape:
        raise LabelError(f"pred/gt size mismatch: {pred.shape} vs {gt.shape}")
    keep = gt != ignore_label
    pred, gt = pred[keep], gt[keep]
    for name, arr in (("pred", pred), ("gt", gt)):
        if arr.size and (arr.min() < 0 or arr.max() >= class_count):
            raise LabelError(f"{name} labels outside [0, {class_count})")
    idx = gt.astype(np.int64) * class_count + pred.astype(np.int64)
    counts = np.bincount(idx, minlength=class_count * class_count)
    return counts.reshape(class_count, class_count)


def _safe_div(num, den):
    return np.divide(num, den, out=np.zeros_like(num, dtype=np.float64), where=den > 0)


def segmentation_metrics(cm) -> SegmentationMetrics:
    cm = np.asarray(cm, dtype=np.float64)
    total = cm.sum()
    if total == 0:
        raise UndefinedMetricError("confusion matrix is empty")
    tp = np.diag(cm)
    gt_c = cm.sum(axis=1)
    pred_c = cm.sum(axis=0)

    acc = tp.sum() / total
    in_gt = gt_c > 0
    m_acc = _safe_div(tp, gt_c)[in_gt].mean()

    present = (gt_c + pred_c) > 0
    iou = _safe_div(tp, gt_c + pred_c - tp)
    m_iou = iou[present].mean()
    fw_iou = float(((gt_c / total) * iou).sum())

    prec = _safe_div(tp, pred_c)
    rec = _safe_div(tp, gt_c)
    f1 = _safe_div(2.0 * prec * rec, prec + rec)
    return SegmentationMetrics(
        acc=float(acc),
        m_acc=float(m_acc),
        m_iou=float(m_iou),
        fw_iou=fw_iou,
        precision=float(prec[present].mean()),
        recall=float(rec[present].mean()),
        f_score=float(f1[present].mean()),
    )


def stereo_metrics(disparity, disparity_gt, valid):
    """(epe, pep_1, pep_3) over valid pixels; PEP thresholds are strict."""
    valid = np.asarray(valid, dtype=bool)
    if not valid.any():
        raise UndefinedMetricError("empty validity mask")
    err = np.abs(np.asarray(disparity, dtype=np.float64) - np.asarray(disparity_gt, dtype=np.float64))
    err = err[valid]
    return float(err.mean()), float((err > 1.0).mean()), float((err > 3.0).mean())


def per_class_debug(cm):
    """Per-class accuracy/IoU/precision/recall rows, for debug printing only."""
    cm = np.asarray(cm, dtype=np.float64)
    tp = np.diag(cm)
    gt_c = cm.sum(axis=1)
    pred_c = cm.sum(axis=0)
    return {
        c: {
            "gt_pixels": int(gt_c[c]),
            "acc": float(_safe_div(tp, gt_c)[c]),
            "iou": float(_safe_div(tp, gt_c + pred_c - tp)[c]),
            "precision": float(_safe_div(tp, pred_c)[c]),
            "recall": float(_safe_div(tp, gt_c)[c]),
        }
        for c in range(cm.shape[0])
    }
