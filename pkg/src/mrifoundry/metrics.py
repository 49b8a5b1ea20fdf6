"""Evaluation metrics: Dice overlap, accuracy, confusion matrix, ROC AUC."""

from __future__ import annotations

import numpy as np

from .errors import DataError, LabelError, ShapeError


def _as_ids(x) -> np.ndarray:
    arr = np.asarray(getattr(x, "data", x))
    return arr.astype(np.int64, copy=False)


def dice(pred, gt, k: int) -> float:
    """2|P∩G| / (|P|+|G|) for class ``k``; 1.0 when both sets are empty."""
    p = _as_ids(pred)
    g = _as_ids(gt)
    if p.shape != g.shape:
        raise ShapeError(f"shape mismatch: {p.shape} vs {g.shape}")
    pk = p == k
    gk = g == k
    denom = int(pk.sum()) + int(gk.sum())
    if denom == 0:
        return 1.0
    return 2.0 * int(np.logical_and(pk, gk).sum()) / denom


def accuracy(preds, labels) -> float:
    """Fraction of correctly predicted samples."""
    p = _as_ids(preds).ravel()
    y = _as_ids(labels).ravel()
    if p.size == 0:
        raise DataError("empty prediction list")
    if p.shape != y.shape:
        raise ShapeError(f"length mismatch: {p.shape} vs {y.shape}")
    return float(np.mean(p == y))


def confusion(preds, labels, n_classes: int) -> np.ndarray:
    """K x K counts, rows = true class, columns = predicted class."""
    p = _as_ids(preds).ravel()
    y = _as_ids(labels).ravel()
    if p.shape != y.shape:
        raise ShapeError(f"length mismatch: {p.shape} vs {y.shape}")
    if p.size and (p.min() < 0 or y.min() < 0 or p.max() >= n_classes or y.max() >= n_classes):
        raise LabelError(f"class ids must lie in [0, {n_classes})")
    mat = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(mat, (y, p), 1)
    return mat


def roc_auc(scores, labels) -> float:
    """Trapezoidal area under the ROC curve.

    Tied scores are grouped into a single threshold, which matches the
    rank-averaged Mann-Whitney statistic.
    """
    s = np.asarray(scores, dtype=np.float64).ravel()
    y = _as_ids(labels).ravel()
    if s.shape != y.shape:
        raise ShapeError(f"length mismatch: {s.shape} vs {y.shape}")
    pos = int((y == 1).sum())
    neg = int((y == 0).sum())
    if pos + neg != y.size:
        raise LabelError("labels must be binary 0/1")
    if pos == 0 or neg == 0:
        raise DataError("ROC needs both classes present")
    order = np.argsort(-s, kind="mergesort")
    y_sorted = y[order]
    s_sorted = s[order]
    distinct = np.where(np.diff(s_sorted) != 0)[0]
    cut = np.r_[distinct, y_sorted.size - 1]
    tp = np.cumsum(y_sorted == 1)[cut]
    fp = (cut + 1) - tp
    tpr = np.r_[0.0, tp / pos]
    fpr = np.r_[0.0, fp / neg]
    return float(np.trapezoid(tpr, fpr))
