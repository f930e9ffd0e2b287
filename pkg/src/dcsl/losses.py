"""Loss functions with analytic gradients.

Every loss returns ``(value, gradient)``. Gradients are taken with respect to
the logits for the cross-entropy family and with respect to the deep
features for the center family. Centers are treated as constants: they move
by the rule in :mod:`dcsl.centers`, never by backprop.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from dcsl.costs import LossCostMatrix, ScoreCostMatrix, apply_score_costs
from dcsl.errors import RejectedInputError

DEFAULT_LAMBDA_C = 0.05


@dataclass
class LabeledBatch:
    features: np.ndarray  # (m, d) deep features
    logits: np.ndarray  # (m, n)
    labels: np.ndarray  # (m,) ints in [0, n)

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.logits = np.asarray(self.logits, dtype=np.float64)
        self.labels = np.asarray(self.labels)
        if self.features.ndim != 2 or self.logits.ndim != 2:
            raise RejectedInputError("features and logits must be 2-D")
        m, n = self.logits.shape
        if self.features.shape[0] != m or self.labels.shape != (m,):
            raise RejectedInputError("features, logits and labels disagree on batch size")
        if m == 0:
            raise RejectedInputError("empty batch")
        if not np.issubdtype(self.labels.dtype, np.integer):
            raise RejectedInputError("labels must be integers")
        if np.any(self.labels < 0) or np.any(self.labels >= n):
            raise RejectedInputError(f"labels must lie in [0, {n})")
        if not (np.all(np.isfinite(self.features)) and np.all(np.isfinite(self.logits))):
            raise RejectedInputError("batch contains non-finite values")

    @property
    def m(self) -> int:
        return self.logits.shape[0]

    @property
    def n(self) -> int:
        return self.logits.shape[1]

    def onehot(self) -> np.ndarray:
        z = np.zeros_like(self.logits)
        z[np.arange(self.m), self.labels] = 1.0
        return z


def softmax(logits):
    """Row-wise softmax with max subtraction. Accepts a vector or a matrix."""
    z = np.asarray(logits, dtype=np.float64)
    if not np.all(np.isfinite(z)):
        raise RejectedInputError("softmax input contains non-finite values")
    shifted = z - z.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def log_softmax(logits):
    z = np.asarray(logits, dtype=np.float64)
    shifted = z - z.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def _class_weights(class_weights, n):
    if class_weights is None:
        return np.ones(n)
    w = np.asarray(class_weights, dtype=np.float64)
    if w.shape != (n,):
        raise RejectedInputError(f"class weights must have length {n}, got shape {w.shape}")
    if not np.all(np.isfinite(w)):
        raise RejectedInputError("class weights must be finite")
    return w


def _weighted_ce(logits, labels, per_example_weight):
    m = logits.shape[0]
    logp = log_softmax(logits)
    p = np.exp(logp)
    rows = np.arange(m)
    loss = -np.sum(per_example_weight * logp[rows, labels]) / m
    grad = p.copy()
    grad[rows, labels] -= 1.0
    grad *= per_example_weight[:, None] / m
    return loss, grad


def softmax_ce(batch: LabeledBatch, class_weights=None):
    """Mean (optionally class-weighted) cross-entropy; ``-(1/m) sum w_y log p_y``.

    Unit weights and ``None`` go through the same arithmetic, so they agree bitwise.
    """
    w = _class_weights(class_weights, batch.n)
    return _weighted_ce(batch.logits, batch.labels, w[batch.labels])


def _center_term(batch, centers, w):
    c = np.asarray(centers, dtype=np.float64)
    if c.shape != (batch.n, batch.features.shape[1]):
        raise RejectedInputError(
            f"centers shape {c.shape} != (n_classes, feature_dim) = {(batch.n, batch.features.shape[1])}"
        )
    diff = batch.features - c[batch.labels]
    wy = w[batch.labels]
    sq = np.sum(diff * diff, axis=1)
    loss = np.sum(wy * sq) / batch.m
    grad = (2.0 / batch.m) * wy[:, None] * diff
    return loss, grad


def center_loss(batch: LabeledBatch, centers):
    """``(1/m) sum ||x_i - c_{y_i}||^2`` and its gradient w.r.t. the features."""
    return _center_term(batch, centers, np.ones(batch.n))


def conditional_center_loss(batch: LabeledBatch, centers, class_weights):
    """Center loss with each example scaled by its class weight."""
    w = _class_weights(class_weights, batch.n)
    if np.any(w <= 0.0):
        raise RejectedInputError("conditional center loss needs strictly positive class weights")
    return _center_term(batch, centers, w)


def cost_weighted_ce(batch: LabeledBatch, loss_costs: LossCostMatrix, mode="argmax"):
    """Cross-entropy with each example scaled by a misclassification cost.

    ``argmax``: the cost of the decision the model would take, ``cost[y, argmax p]``
    (piecewise constant, so it carries no gradient). ``expected``: the posterior-
    averaged cost ``sum_q cost[y, q] p_q``, differentiated through ``p``.
    """
    costs = loss_costs.entries if isinstance(loss_costs, LossCostMatrix) else np.asarray(loss_costs, float)
    if costs.shape != (batch.n, batch.n):
        raise RejectedInputError(f"cost matrix shape {costs.shape} != ({batch.n}, {batch.n})")
    y = batch.labels
    rows = np.arange(batch.m)
    if mode == "argmax":
        pred = np.argmax(batch.logits, axis=1)
        return _weighted_ce(batch.logits, y, costs[y, pred])
    if mode == "expected":
        logp = log_softmax(batch.logits)
        p = np.exp(logp)
        cy = costs[y]  # (m, n) cost row of the true class
        s = np.sum(cy * p, axis=1)
        lpy = logp[rows, y]
        loss = -np.sum(s * lpy) / batch.m
        # d s / d z_k = p_k (cost[y, k] - s)
        grad = -(p * (cy - s[:, None])) * lpy[:, None]
        grad += s[:, None] * p
        grad[rows, y] -= s
        return loss, grad / batch.m
    raise RejectedInputError(f"unknown cost weighting mode {mode!r}")


def dcsl_loss(batch: LabeledBatch, centers, class_weights, score_costs: ScoreCostMatrix,
              lambda_c=DEFAULT_LAMBDA_C, transform="matrix"):
    """Joint objective: weighted CE on cost-transformed scores plus the weighted center term.

    Returns ``(loss, grad_logits, grad_features)`` where ``grad_logits`` is taken
    with respect to the *untransformed* network outputs.
    """
    if lambda_c < 0:
        raise RejectedInputError("lambda_c must be non-negative")
    xi = score_costs.entries if isinstance(score_costs, ScoreCostMatrix) else np.asarray(score_costs, float)
    if xi.shape != (batch.n, batch.n):
        raise RejectedInputError(f"score cost matrix shape {xi.shape} != ({batch.n}, {batch.n})")
    w = _class_weights(class_weights, batch.n)
    scores = apply_score_costs(batch.logits, xi, transform, batch.labels)
    ce, g_scores = _weighted_ce(scores, batch.labels, w[batch.labels])
    cc, g_feat = conditional_center_loss(batch, centers, w)
    if transform == "matrix":
        g_logits = g_scores @ xi.T
    else:
        g_logits = g_scores * xi[batch.labels]
    return ce + lambda_c * cc, g_logits, lambda_c * g_feat
