"""Joint training loop: forward, joint loss, center update, optimizer step."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from dcsl import centers as ctr
from dcsl.costs import SCORE_MODES, ScoreCostMatrix, apply_score_costs, default_clinical_matrix
from dcsl.data import Dataset
from dcsl.errors import RejectedInputError, TrainingDivergenceError
from dcsl.losses import (
    DEFAULT_LAMBDA_C,
    LabeledBatch,
    center_loss,
    conditional_center_loss,
    dcsl_loss,
    softmax,
    softmax_ce,
)
from dcsl.nncore import AdamState, Network, adam_step, as_matrix, backward, build_network, forward

log = logging.getLogger(__name__)

LOSS_MODES = ("softmax", "softmax_cl", "softmax_ccl", "dcsl")
CLASS_WEIGHT_MODES = ("frequency", "inverse_frequency", "unit")


@dataclass
class TrainConfig:
    loss_mode: str = "dcsl"
    lambda_c: float = DEFAULT_LAMBDA_C
    alpha: float = 1.0
    lr: float = 1e-3
    epochs: int = 40
    batch_size: int = 32
    seed: int = 0
    center_weighting_mode: str = "both"
    score_transform_mode: str = "matrix"
    costs_at_test: bool = True
    class_weight_mode: str = "inverse_frequency"
    hidden: tuple[int, ...] = (32,)
    feature_dim: int = 2
    feature_activation: str = "identity"
    # None means the clinical default for 3 classes
    score_costs: ScoreCostMatrix | None = None

    def __post_init__(self):
        if self.loss_mode not in LOSS_MODES:
            raise RejectedInputError(f"loss_mode must be one of {LOSS_MODES}")
        if self.lambda_c < 0:
            raise RejectedInputError("lambda_c must be >= 0")
        if not self.lr > 0:
            raise RejectedInputError("learning rate must be > 0")
        if int(self.epochs) < 1:
            raise RejectedInputError("epochs must be >= 1")
        if int(self.batch_size) < 1:
            raise RejectedInputError("batch_size must be >= 1")
        if not 0 < self.alpha <= 1:
            raise RejectedInputError("alpha must lie in (0, 1]")
        if self.center_weighting_mode not in ctr.WEIGHTING_MODES:
            raise RejectedInputError(f"center_weighting_mode must be one of {ctr.WEIGHTING_MODES}")
        if self.score_transform_mode not in SCORE_MODES:
            raise RejectedInputError(f"score_transform_mode must be one of {SCORE_MODES}")
        if self.class_weight_mode not in CLASS_WEIGHT_MODES:
            raise RejectedInputError(f"class_weight_mode must be one of {CLASS_WEIGHT_MODES}")
        self.hidden = tuple(int(h) for h in self.hidden)
        self.epochs = int(self.epochs)
        self.batch_size = int(self.batch_size)


@dataclass
class TrainState:
    config: TrainConfig
    network: Network
    centers: ctr.CenterBank
    optimizer: AdamState
    class_weights: np.ndarray
    score_costs: ScoreCostMatrix
    t: int = 0
    history: list[dict] = field(default_factory=list)


def class_weights(labels, mode="frequency", n_classes=None) -> np.ndarray:
    """Per-class weights from label counts.

    ``frequency``: ``n_j / N``. ``inverse_frequency``: ``(N / n_j)`` normalised to sum 1.
    ``unit``: all ones.
    """
    y = np.asarray(labels, dtype=np.int64)
    n = int(y.max()) + 1 if n_classes is None else n_classes
    counts = np.bincount(y, minlength=n).astype(np.float64)
    if np.any(counts == 0):
        raise RejectedInputError(f"classes {np.flatnonzero(counts == 0).tolist()} have no examples")
    if mode == "frequency":
        return counts / counts.sum()
    if mode == "inverse_frequency":
        inv = counts.sum() / counts
        return inv / inv.sum()
    if mode == "unit":
        return np.ones(n)
    raise RejectedInputError(f"unknown class weight mode {mode!r}")


def _resolve_score_costs(cfg: TrainConfig, n) -> ScoreCostMatrix:
    if cfg.score_costs is not None:
        if cfg.score_costs.n != n:
            raise RejectedInputError(f"score cost matrix is {cfg.score_costs.n}x{cfg.score_costs.n}, need {n}x{n}")
        return cfg.score_costs
    if n == 3:
        return default_clinical_matrix("score")
    return ScoreCostMatrix.identity(n)


def init_state(dataset: Dataset, cfg: TrainConfig) -> TrainState:
    n = dataset.n_classes
    init_seed, _ = np.random.SeedSequence(cfg.seed).spawn(2)
    net = build_network(
        dataset.in_dim, n, hidden=cfg.hidden, feature_dim=cfg.feature_dim,
        feature_activation=cfg.feature_activation, seed=init_seed,
    )
    return TrainState(
        config=cfg,
        network=net,
        centers=ctr.init_centers(n, net.feature_dim, cfg.alpha, cfg.center_weighting_mode),
        optimizer=AdamState.for_params(net.parameters()),
        class_weights=class_weights(dataset.labels, cfg.class_weight_mode, n),
        score_costs=_resolve_score_costs(cfg, n),
    )


def batch_objective(state: TrainState, features, logits, labels):
    """Loss and gradients for the configured mode: ``(loss, grad_logits, grad_features)``."""
    cfg = state.config
    batch = LabeledBatch(features, logits, labels)
    w = state.class_weights
    mode = cfg.loss_mode
    if mode == "dcsl":
        return dcsl_loss(batch, state.centers.centers, w, state.score_costs, cfg.lambda_c,
                         cfg.score_transform_mode)
    if mode == "softmax":
        loss, g = softmax_ce(batch)
        return loss, g, np.zeros_like(batch.features)
    if mode == "softmax_cl":
        ce, g = softmax_ce(batch)
        cc, gf = center_loss(batch, state.centers.centers)
    else:
        ce, g = softmax_ce(batch, w)
        cc, gf = conditional_center_loss(batch, state.centers.centers, w)
    return ce + cfg.lambda_c * cc, g, cfg.lambda_c * gf


def train_step(state: TrainState, xb, yb):
    """One iteration on a mini-batch. Returns the batch loss."""
    cfg = state.config
    features, logits, cache = forward(state.network, xb)
    if not (np.all(np.isfinite(logits)) and np.all(np.isfinite(features))):
        raise TrainingDivergenceError(f"non-finite network output at iteration {state.t + 1}")
    loss, g_logits, g_feat = batch_objective(state, features, logits, yb)
    if not np.isfinite(loss):
        raise TrainingDivergenceError(f"non-finite loss at iteration {state.t + 1}")
    if cfg.loss_mode != "softmax":
        weights = None if cfg.loss_mode == "softmax_cl" else state.class_weights
        delta = ctr.delta_centers(features, yb, state.centers, weights)
        state.centers = ctr.update_centers(state.centers, delta, weights)
    grads = backward(state.network, cache, g_logits, g_feat)
    adam_step(state.network.parameters(), grads, state.optimizer, cfg.lr)
    state.t += 1
    return loss


def fit(dataset: Dataset, config: TrainConfig | None = None) -> TrainState:
    """Train for a fixed number of epochs with a fresh permutation each epoch.

    Deterministic given ``config.seed``.
    """
    cfg = config or TrainConfig()
    if len(dataset) == 0:
        raise RejectedInputError("empty dataset")
    state = init_state(dataset, cfg)
    _, shuffle_seed = np.random.SeedSequence(cfg.seed).spawn(2)
    rng = np.random.default_rng(shuffle_seed)
    x, y = dataset.features, dataset.labels
    for epoch in range(cfg.epochs):
        order = rng.permutation(len(y))
        total, seen = 0.0, 0
        for b, start in enumerate(range(0, len(y), cfg.batch_size)):
            idx = order[start:start + cfg.batch_size]
            try:
                loss = train_step(state, x[idx], y[idx])
            except TrainingDivergenceError as exc:
                raise TrainingDivergenceError(f"epoch {epoch + 1}, batch {b + 1}: {exc}") from None
            total += loss * len(idx)
            seen += len(idx)
        pred, _ = predict(state, x)
        state.history.append({
            "epoch": epoch + 1,
            "loss": total / seen,
            "train_accuracy": float(np.mean(pred == y)),
        })
        log.debug("epoch %d loss %.5f acc %.4f", epoch + 1, total / seen, state.history[-1]["train_accuracy"])
    return state


def transformed_scores(state: TrainState, features_batch, costs_at_test=None):
    """Network outputs after the test-time score transform, if it applies."""
    flag = state.config.costs_at_test if costs_at_test is None else costs_at_test
    _, logits, _ = forward(state.network, as_matrix(features_batch, "features", cols=state.network.in_dim))
    # label_row scaling needs the true class, so it is a training-only transform
    if flag and state.config.loss_mode == "dcsl" and state.config.score_transform_mode == "matrix":
        logits = apply_score_costs(logits, state.score_costs, "matrix")
    return logits


def predict(state: TrainState, features_batch, costs_at_test=None):
    """Return ``(class indices, probability rows)``; ties go to the lowest index."""
    probs = softmax(transformed_scores(state, features_batch, costs_at_test))
    return np.argmax(probs, axis=1), probs


def embed(state: TrainState, features_batch) -> np.ndarray:
    """Deep features (input of the output layer) for a batch."""
    feats, _, _ = forward(state.network, features_batch)
    return feats


def with_overrides(cfg: TrainConfig, **kw) -> TrainConfig:
    return replace(cfg, **kw)
