"""ROC/AUC and the two-dimensional metric embedding."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .datagen import LabeledDataset
from .exceptions import DataError, DimensionError, NumericError
from .learners import GmlvqModel
from .linalg import sym_eigen

ROC_GRID_POINTS = 101


@dataclass(frozen=True)
class RocCurve:
    thresholds: np.ndarray  # descending; first entry is +inf
    tpr: np.ndarray
    fpr: np.ndarray
    auc: float


def roc_auc(scores, labels) -> RocCurve:
    """ROC by sweeping a threshold over the distinct scores (class 2 positive).

    Equal scores form a single step, so ties contribute half a concordant
    pair to the area.
    """
    s = np.asarray(scores, dtype=np.float64).ravel()
    y = np.asarray(labels).ravel()
    if s.shape != y.shape:
        raise DimensionError("scores and labels differ in length")
    if not np.all(np.isfinite(s)):
        raise NumericError("scores must be finite")
    pos = y == 2
    n_pos = int(pos.sum())
    n_neg = int(np.sum(y == 1))
    if n_pos + n_neg != y.size:
        raise DataError("labels must be 1 or 2")
    if n_pos == 0 or n_neg == 0:
        raise DataError("ROC needs both classes present")

    order = np.argsort(-s, kind="stable")
    s_sorted = s[order]
    pos_sorted = pos[order]
    # last index of each run of equal scores
    ends = np.r_[np.flatnonzero(np.diff(s_sorted) != 0), s.size - 1]
    tp = np.cumsum(pos_sorted)[ends]
    fp = (ends + 1) - tp
    tpr = np.r_[0.0, tp / n_pos]
    fpr = np.r_[0.0, fp / n_neg]
    thresholds = np.r_[np.inf, s_sorted[ends]]
    auc = float(np.sum(np.diff(fpr) * (tpr[1:] + tpr[:-1]) / 2.0))
    return RocCurve(thresholds, tpr, fpr, auc)


def mean_roc(curves, n_points: int = ROC_GRID_POINTS) -> tuple[np.ndarray, np.ndarray]:
    """Vertical average of several ROC curves on a fixed FPR grid."""
    grid = np.linspace(0.0, 1.0, n_points)
    rows = []
    for c in curves:
        # at a vertical jump keep the highest TPR reached at that FPR
        fpr, idx = np.unique(c.fpr[::-1], return_index=True)
        tpr = c.tpr[::-1][idx]
        rows.append(np.interp(grid, fpr, tpr))
    return grid, np.mean(rows, axis=0)


def embed2d(model: GmlvqModel, data: LabeledDataset) -> np.ndarray:
    """Project samples on the two leading eigenvectors of Lambda, each axis
    scaled by the square root of its eigenvalue."""
    if model.d < 2:
        raise DimensionError("embedding needs at least two features")
    if data.d != model.d:
        raise DimensionError(f"data has {data.d} features, model {model.d}")
    eig = sym_eigen(model.lambda_)
    vals = np.clip(eig.eigenvalues[:2], 0.0, None)
    return (data.features @ eig.eigenvectors[:, :2]) * np.sqrt(vals)
