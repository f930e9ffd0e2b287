"""Cost matrices, the score-level output transform and minimum-risk decisions.

Two matrix flavours are kept apart on purpose:

* ``ScoreCostMatrix`` -- non-negative with a positive diagonal, applied to the
  network outputs before the softmax. Larger off-diagonal entries mark more
  severe errors.
* ``LossCostMatrix`` -- zero diagonal, non-negative misclassification costs,
  used for loss weighting and expected risk.

Rows index the true class, columns the decided class.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from dcsl.errors import ParseError, RejectedInputError, UnsupportedConfigurationError

SCORE_MODES = ("matrix", "label_row")

# class index of each clinical role in the default 3-class layout
CLINICAL_ROLES = {"critical": 0, "confusable": 1, "normal": 2}


def _square(entries, name):
    arr = np.array(entries, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1] or arr.shape[0] == 0:
        raise RejectedInputError(f"{name} must be a non-empty square matrix, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise RejectedInputError(f"{name} has non-finite entries")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class ScoreCostMatrix:
    """Score-level costs. Off-diagonals may be zero so that ``c * I`` stays expressible."""

    entries: np.ndarray

    def __post_init__(self):
        arr = _square(self.entries, "score cost matrix")
        if np.any(arr < 0.0) or np.any(np.diag(arr) <= 0.0):
            raise RejectedInputError(
                "score cost matrix needs non-negative entries and a strictly positive diagonal"
            )
        object.__setattr__(self, "entries", arr)

    @property
    def n(self) -> int:
        return self.entries.shape[0]

    @property
    def strictly_positive(self) -> bool:
        return bool(np.all(self.entries > 0.0))

    @classmethod
    def identity(cls, n) -> "ScoreCostMatrix":
        return cls(np.eye(n))


@dataclass(frozen=True)
class LossCostMatrix:
    entries: np.ndarray

    def __post_init__(self):
        arr = _square(self.entries, "loss cost matrix")
        if np.any(np.diag(arr) != 0.0):
            raise RejectedInputError("loss cost matrix must have a zero diagonal")
        if np.any(arr < 0.0):
            raise RejectedInputError("loss cost matrix entries must be non-negative")
        object.__setattr__(self, "entries", arr)

    @property
    def n(self) -> int:
        return self.entries.shape[0]

    @classmethod
    def zero_one(cls, n) -> "LossCostMatrix":
        return cls(1.0 - np.eye(n))


def _entries(matrix):
    if isinstance(matrix, (ScoreCostMatrix, LossCostMatrix)):
        return matrix.entries
    return _square(matrix, "cost matrix")


def apply_score_costs(logits, xi, mode="matrix", labels=None):
    """Reshape class scores with a score-level cost matrix.

    ``matrix``: ``o_i = f(x_i) @ xi`` -- needs no labels, so it works at test time.
    ``label_row``: ``o_i = xi[y_i] * f(x_i)`` -- scales by the true-class row; training only.
    """
    f = np.asarray(logits, dtype=np.float64)
    e = _entries(xi)
    if f.ndim != 2 or f.shape[1] != e.shape[0]:
        raise RejectedInputError(f"logits shape {f.shape} incompatible with {e.shape} cost matrix")
    if mode == "matrix":
        return f @ e
    if mode == "label_row":
        if labels is None:
            raise RejectedInputError("label_row score transform needs labels")
        y = np.asarray(labels)
        if y.shape != (f.shape[0],):
            raise RejectedInputError("labels length does not match logits")
        return e[y] * f
    raise RejectedInputError(f"unknown score transform mode {mode!r}")


def _check_probs(probs, n):
    p = np.asarray(probs, dtype=np.float64)
    if p.shape != (n,):
        raise RejectedInputError(f"probability vector must have length {n}, got shape {p.shape}")
    if not np.all(np.isfinite(p)) or np.any(p < 0.0) or abs(p.sum() - 1.0) > 1e-9:
        raise RejectedInputError("probabilities must be non-negative and sum to 1")
    return p


def expected_risk(probs, loss_costs):
    """Risk of each candidate decision ``p``: ``sum_q cost[p, q] * P(q | x)``."""
    e = _entries(loss_costs)
    p = _check_probs(probs, e.shape[0])
    return e @ p


def min_risk_decision(probs, loss_costs) -> int:
    # np.argmin returns the first minimum, i.e. ties go to the lowest index
    return int(np.argmin(expected_risk(probs, loss_costs)))


_ORDER = (
    ("critical", "normal"),
    ("critical", "confusable"),
    ("confusable", "critical"),
    ("confusable", "normal"),
    ("normal", "critical"),
    ("normal", "confusable"),
)


def clinical_constraints(roles=None):
    """The six directed errors in strictly decreasing order of severity, as index pairs."""
    roles = CLINICAL_ROLES if roles is None else roles
    return [(roles[a], roles[b]) for a, b in _ORDER]


def validate_clinical_ordering(matrix, roles=None) -> list[str]:
    """Check the clinical severity ordering; returns the violated constraints (empty when ok).

    With C critical, P confusable and N normal the required chain is
    ``C->N > C->P > P->C > P->N > N->C > N->P`` on the off-diagonal entries.
    """
    e = _entries(matrix)
    roles = CLINICAL_ROLES if roles is None else dict(roles)
    if e.shape[0] != 3:
        raise UnsupportedConfigurationError("clinical ordering is defined for exactly 3 classes")
    if set(roles) != {"critical", "confusable", "normal"} or sorted(roles.values()) != [0, 1, 2]:
        raise RejectedInputError(f"roles must assign critical/confusable/normal to 0,1,2 uniquely: {roles}")
    pairs = clinical_constraints(roles)
    names = {v: k for k, v in roles.items()}
    violations = []
    for (a, b), (c, d) in zip(pairs, pairs[1:]):
        if not e[a, b] > e[c, d]:
            violations.append(
                f"cost({names[a]}->{names[b]})={e[a, b]:g} must exceed "
                f"cost({names[c]}->{names[d]})={e[c, d]:g}"
            )
    return violations


# severity-ranked off-diagonal values, most severe first
_LOSS_LADDER = (6.0, 5.0, 4.0, 3.0, 2.0, 1.0)
_SCORE_LADDER = (3.0, 2.6, 2.2, 1.8, 1.4, 1.2)


def default_clinical_matrix(kind="score", roles=None):
    """Hand-set 3x3 matrix that satisfies the clinical ordering.

    ``kind="loss"`` returns a ``LossCostMatrix`` (zero diagonal), ``kind="score"``
    a ``ScoreCostMatrix`` with unit diagonal.
    """
    pairs = clinical_constraints(roles)
    if kind == "loss":
        e = np.zeros((3, 3))
        for (a, b), v in zip(pairs, _LOSS_LADDER):
            e[a, b] = v
        return LossCostMatrix(e)
    if kind == "score":
        e = np.eye(3)
        for (a, b), v in zip(pairs, _SCORE_LADDER):
            e[a, b] = v
        return ScoreCostMatrix(e)
    raise RejectedInputError(f"kind must be 'score' or 'loss', got {kind!r}")


def load_cost_matrix(path, kind="score"):
    """Read an n x n comma-separated matrix (row = true class, column = decided class)."""
    path = Path(path)
    rows = []
    with path.open(newline="", encoding="utf-8") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or all(not c.strip() for c in row):
                continue
            try:
                rows.append([float(c) for c in row])
            except ValueError as exc:
                raise ParseError(f"non-numeric entry ({exc})", line=lineno, path=path) from None
            if len(rows[-1]) != len(rows[0]):
                raise ParseError(f"expected {len(rows[0])} values, got {len(rows[-1])}", line=lineno, path=path)
    if not rows:
        raise ParseError("empty cost matrix file", path=path)
    if len(rows) != len(rows[0]):
        raise ParseError(f"cost matrix is {len(rows)}x{len(rows[0])}, not square", path=path)
    return LossCostMatrix(rows) if kind == "loss" else ScoreCostMatrix(rows)


def save_cost_matrix(matrix, path):
    e = _entries(matrix)
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        for row in e:
            w.writerow([repr(float(v)) for v in row])
