"""Confusion matrices and mean IoU."""
from __future__ import annotations

import numpy as np

IGNORE_INDEX = 255


class UndefinedMetricError(ValueError):
    pass


def new_confusion(K: int) -> np.ndarray:
    return np.zeros((K, K), dtype=np.int64)


def accumulate(cm: np.ndarray, pred, truth) -> np.ndarray:
    """Add one prediction/truth pair; rows are truth, columns prediction."""
    pred = np.asarray(pred).reshape(-1).astype(np.int64)
    truth = np.asarray(truth).reshape(-1).astype(np.int64)
    if pred.shape != truth.shape:
        raise ValueError(f"shape mismatch: {np.shape(pred)} vs {np.shape(truth)}")
    K = cm.shape[0]
    keep = truth != IGNORE_INDEX
    pred, truth = pred[keep], truth[keep]
    if truth.size and (truth.min() < 0 or truth.max() >= K or pred.min() < 0 or pred.max() >= K):
        raise ValueError(f"labels must lie in [0, {K})")
    cm += np.bincount(truth * K + pred, minlength=K * K).reshape(K, K)
    return cm


def miou(cm: np.ndarray):
    """Per-class IoU (NaN where the union is empty) and the mean over defined classes."""
    cm = np.asarray(cm, dtype=np.float64)
    tp = np.diag(cm)
    union = cm.sum(axis=0) + cm.sum(axis=1) - tp
    present = union > 0
    if not present.any():
        raise UndefinedMetricError("no class appears in truth or prediction")
    iou = np.full(cm.shape[0], np.nan)
    iou[present] = tp[present] / union[present]
    return iou, float(iou[present].mean())


def report_csv(results: dict) -> str:
    """``results`` maps domain -> (per_class, mean)."""
    lines = ["domain,class_id,iou"]
    for d, (per_class, _) in results.items():
        for k, v in enumerate(per_class):
            lines.append(f"{d},{k},{v:.6f}")
    lines.append("domain,mean_miou")
    for d, (_, mean) in results.items():
        lines.append(f"{d},{mean:.6f}")
    return "\n".join(lines) + "\n"
