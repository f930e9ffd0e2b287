"""Per-class feature centers and their mini-batch update rule."""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from dcsl.errors import RejectedInputError

WEIGHTING_MODES = ("none", "delta", "update", "both")


@dataclass(frozen=True)
class CenterBank:
    """Class centers ``c_j`` (one row per class) plus the update settings.

    ``weighting_mode`` says where a class weight enters the update: in the
    delta, in the step, in both (the literal composition, default) or nowhere.
    """

    centers: np.ndarray
    alpha: float = 1.0
    weighting_mode: str = "both"

    def __post_init__(self):
        c = np.array(self.centers, dtype=np.float64)
        if c.ndim != 2:
            raise RejectedInputError("centers must be a 2-D (n_classes, dim) array")
        if not np.all(np.isfinite(c)):
            raise RejectedInputError("centers must be finite")
        if not 0.0 < self.alpha <= 1.0:
            raise RejectedInputError(f"alpha must lie in (0, 1], got {self.alpha}")
        if self.weighting_mode not in WEIGHTING_MODES:
            raise RejectedInputError(f"weighting_mode must be one of {WEIGHTING_MODES}")
        c.setflags(write=False)
        object.__setattr__(self, "centers", c)

    @property
    def n_classes(self) -> int:
        return self.centers.shape[0]

    @property
    def dim(self) -> int:
        return self.centers.shape[1]


def init_centers(n, d, alpha=1.0, weighting_mode="both") -> CenterBank:
    if n < 1 or d < 1:
        raise RejectedInputError("need n >= 1 classes and d >= 1 dimensions")
    return CenterBank(np.zeros((n, d)), alpha, weighting_mode)


def _weights(class_weights, n):
    w = np.asarray(class_weights, dtype=np.float64)
    if w.shape != (n,) or not np.all(np.isfinite(w)):
        raise RejectedInputError(f"class weights must be a finite vector of length {n}")
    return w


def delta_centers(features, labels, bank: CenterBank, class_weights=None):
    """Mini-batch center displacement.

    ``delta_j = sum_{i: y_i = j} [w_j] (c_j - x_i) / (1 + #{i: y_i = j})``; the
    weight is used when given and the bank's mode is ``delta`` or ``both``.
    Classes with no example in the batch get an exact zero row.
    """
    x = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels)
    if x.ndim != 2 or x.shape[1] != bank.dim:
        raise RejectedInputError(f"features must be (m, {bank.dim}), got {x.shape}")
    if y.shape != (x.shape[0],):
        raise RejectedInputError("labels length does not match features")
    if y.size and (y.min() < 0 or y.max() >= bank.n_classes):
        raise RejectedInputError(f"labels must lie in [0, {bank.n_classes})")
    n = bank.n_classes
    c = bank.centers
    counts = np.bincount(y, minlength=n).astype(np.float64)
    sums = np.zeros_like(c)
    np.add.at(sums, y, c[y] - x)
    if class_weights is not None and bank.weighting_mode in ("delta", "both"):
        sums = _weights(class_weights, n)[:, None] * sums
    delta = sums / (1.0 + counts)[:, None]
    delta[counts == 0] = 0.0
    return delta


def update_centers(bank: CenterBank, deltas, class_weights=None) -> CenterBank:
    """``c_j <- c_j - alpha [w_j] delta_j``; returns a new bank."""
    d = np.asarray(deltas, dtype=np.float64)
    if d.shape != bank.centers.shape:
        raise RejectedInputError(f"deltas shape {d.shape} != centers shape {bank.centers.shape}")
    step = bank.alpha * d
    if class_weights is not None and bank.weighting_mode in ("update", "both"):
        step = _weights(class_weights, bank.n_classes)[:, None] * step
    return replace(bank, centers=bank.centers - step)
