"""Confusion matrices, classification metrics and the paired t-test."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import betainc

from dcsl.errors import DegenerateSampleError, RejectedInputError

REPORT_KEYS = (
    "accuracy",
    "precision_macro",
    "sensitivity_macro",
    "f1_macro",
    "sensitivity_per_class",
    "confusion",
)


def confusion(predictions, labels, n_classes=None) -> np.ndarray:
    """Counts with rows = true class and columns = predicted class."""
    pred = np.asarray(predictions, dtype=np.int64).reshape(-1)
    true = np.asarray(labels, dtype=np.int64).reshape(-1)
    if pred.shape != true.shape:
        raise RejectedInputError(f"{pred.size} predictions for {true.size} labels")
    if n_classes is None:
        n_classes = int(max(pred.max(initial=-1), true.max(initial=-1))) + 1
    if pred.size and (min(pred.min(), true.min()) < 0 or max(pred.max(), true.max()) >= n_classes):
        raise RejectedInputError(f"class indices must lie in [0, {n_classes})")
    cm = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(cm, (true, pred), 1)
    return cm


@dataclass
class MetricsReport:
    accuracy: float
    precision_macro: float
    sensitivity_macro: float
    f1_macro: float
    precision_per_class: np.ndarray
    sensitivity_per_class: np.ndarray
    f1_per_class: np.ndarray
    precision_weighted: float
    sensitivity_weighted: float
    f1_weighted: float
    confusion: np.ndarray
    warnings: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "accuracy": float(self.accuracy),
            "precision_macro": float(self.precision_macro),
            "sensitivity_macro": float(self.sensitivity_macro),
            "f1_macro": float(self.f1_macro),
            "sensitivity_per_class": [float(v) for v in self.sensitivity_per_class],
            "confusion": self.confusion.tolist(),
            "precision_weighted": float(self.precision_weighted),
            "sensitivity_weighted": float(self.sensitivity_weighted),
            "f1_weighted": float(self.f1_weighted),
        }


def _safe_ratio(num, den):
    out = np.zeros_like(num, dtype=np.float64)
    ok = den > 0
    out[ok] = num[ok] / den[ok]
    return out, ~ok


def metrics(cm) -> MetricsReport:
    """Accuracy plus per-class and macro/weighted precision, sensitivity and F1.

    A zero denominator yields 0 for that class and a warning entry.
    """
    cm = np.asarray(cm)
    if cm.ndim != 2 or cm.shape[0] != cm.shape[1]:
        raise RejectedInputError("confusion matrix must be square")
    if np.any(cm < 0):
        raise RejectedInputError("confusion matrix has negative counts")
    total = cm.sum()
    if total <= 0:
        raise RejectedInputError("confusion matrix is empty")
    tp = np.diag(cm).astype(np.float64)
    support = cm.sum(axis=1).astype(np.float64)
    predicted = cm.sum(axis=0).astype(np.float64)
    precision, bad_p = _safe_ratio(tp, predicted)
    sensitivity, bad_s = _safe_ratio(tp, support)
    f1, bad_f = _safe_ratio(2 * precision * sensitivity, precision + sensitivity)
    warnings = []
    for j in np.flatnonzero(bad_p):
        warnings.append(f"class {j}: precision undefined (never predicted)")
    for j in np.flatnonzero(bad_s):
        warnings.append(f"class {j}: sensitivity undefined (no true examples)")
    share = support / total
    return MetricsReport(
        accuracy=float(tp.sum() / total),
        precision_macro=float(precision.mean()),
        sensitivity_macro=float(sensitivity.mean()),
        f1_macro=float(f1.mean()),
        precision_per_class=precision,
        sensitivity_per_class=sensitivity,
        f1_per_class=f1,
        precision_weighted=float(share @ precision),
        sensitivity_weighted=float(share @ sensitivity),
        f1_weighted=float(share @ f1),
        confusion=cm.astype(np.int64),
        warnings=warnings,
    )


def t_sf_two_sided(t, df) -> float:
    """Two-sided tail probability ``P(|T| >= |t|)`` of Student's t."""
    t = float(t)
    return float(betainc(df / 2.0, 0.5, df / (df + t * t)))


def paired_ttest(a, b):
    """Paired t-test on matched samples; returns ``(t, p_two_sided, df)``."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise RejectedInputError("paired samples must be 1-D and of equal length")
    k = a.size
    if k < 2:
        raise RejectedInputError("need at least two pairs")
    d = a - b
    sd = d.std(ddof=1)
    if not sd > 0:
        raise DegenerateSampleError("differences have zero variance; t is undefined")
    t = d.mean() / (sd / np.sqrt(k))
    df = k - 1
    return float(t), t_sf_two_sided(t, df), df
