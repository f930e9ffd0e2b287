"""Datasets: synthetic Gaussian classes, CSV I/O and stratified k-fold splits."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.optimize import Bounds, LinearConstraint, milp

from dcsl.errors import ParseError, RejectedInputError

DEFAULT_CLASS_NAMES = ("covid19", "pneumonia", "normal")


@dataclass
class Dataset:
    features: np.ndarray  # (N, in_dim)
    labels: np.ndarray  # (N,) int
    class_names: list[str] = field(default_factory=list)

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.features.ndim != 2 or self.labels.shape != (self.features.shape[0],):
            raise RejectedInputError("features must be (N, d) with one label per row")
        if not np.all(np.isfinite(self.features)):
            raise RejectedInputError("features contain non-finite values")
        if not self.class_names:
            n = int(self.labels.max()) + 1 if self.labels.size else 0
            self.class_names = [f"class{j}" for j in range(n)]
        n = len(self.class_names)
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= n):
            raise RejectedInputError(f"labels must lie in [0, {n})")
        missing = np.flatnonzero(np.bincount(self.labels, minlength=n) == 0)
        if missing.size:
            raise RejectedInputError(f"classes without examples: {[self.class_names[j] for j in missing]}")

    def __len__(self):
        return self.labels.shape[0]

    @property
    def n_classes(self) -> int:
        return len(self.class_names)

    @property
    def in_dim(self) -> int:
        return self.features.shape[1]

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.n_classes)

    def subset(self, idx) -> "Dataset":
        # a subset may legitimately miss a class, so skip validation
        out = object.__new__(Dataset)
        out.features = self.features[idx]
        out.labels = self.labels[idx]
        out.class_names = list(self.class_names)
        return out


@dataclass
class SynthConfig:
    n_classes: int = 3
    in_dim: int = 8
    class_counts: tuple[int, ...] = (24, 100, 100)
    class_separation: float = 2.0
    intra_spread: float = 1.5
    seed: int = 0

    def __post_init__(self):
        self.class_counts = tuple(int(c) for c in self.class_counts)
        if self.n_classes < 2:
            raise RejectedInputError("need at least two classes")
        if len(self.class_counts) != self.n_classes:
            raise RejectedInputError(f"got {len(self.class_counts)} counts for {self.n_classes} classes")
        if any(c <= 0 for c in self.class_counts):
            raise RejectedInputError(f"class counts must be positive, got {self.class_counts}")
        if self.in_dim < self.n_classes - 1:
            raise RejectedInputError("in_dim must be at least n_classes - 1 to hold a simplex")
        if not self.class_separation > 0:
            raise RejectedInputError("class_separation must be positive")
        if not self.intra_spread > 0:
            raise RejectedInputError("intra_spread must be positive")


def simplex_means(n, dim, separation) -> np.ndarray:
    """``n`` points in ``R^dim`` with every pairwise distance equal to ``separation``."""
    # centred scaled basis vectors of R^n form a regular simplex; rotate into n-1 coords
    verts = (separation / np.sqrt(2.0)) * (np.eye(n) - 1.0 / n)
    u, s, _ = np.linalg.svd(verts)
    coords = (u * s)[:, : n - 1]
    out = np.zeros((n, dim))
    out[:, : n - 1] = coords
    return out


def generate(cfg: SynthConfig | None = None) -> Dataset:
    """Isotropic Gaussian classes around simplex means, grouped by class.

    Each class draws from its own ``(seed, class)`` stream, so its samples do
    not depend on the other classes' counts.
    """
    cfg = cfg or SynthConfig()
    means = simplex_means(cfg.n_classes, cfg.in_dim, cfg.class_separation)
    xs, ys = [], []
    for j, count in enumerate(cfg.class_counts):
        rng = np.random.default_rng([cfg.seed, j])
        xs.append(means[j] + cfg.intra_spread * rng.standard_normal((count, cfg.in_dim)))
        ys.append(np.full(count, j))
    names = list(DEFAULT_CLASS_NAMES) if cfg.n_classes == 3 else [f"class{j}" for j in range(cfg.n_classes)]
    return Dataset(np.vstack(xs), np.concatenate(ys), names)


def _fold_counts(counts, k):
    """Per-fold class counts ``x_fc`` in ``{floor(c/k), ceil(c/k)}`` with ``|x_fc - s_f c / N| <= 1``.

    ``s_f`` is the fold size. Solved as a tiny integer program; returns None if infeasible.
    """
    counts = np.asarray(counts, dtype=np.float64)
    n_cls = counts.size
    total = counts.sum()
    nv = k * n_cls  # variable x[f, c] at f * n_cls + c
    rows, lo, hi = [], [], []
    for c in range(n_cls):
        r = np.zeros(nv)
        r[c::n_cls] = 1.0
        rows.append(r)
        lo.append(counts[c])
        hi.append(counts[c])
    for f in range(k):
        block = np.zeros(nv)
        block[f * n_cls:(f + 1) * n_cls] = 1.0
        rows.append(block)
        lo.append(np.floor(total / k))
        hi.append(np.ceil(total / k))
        for c in range(n_cls):
            r = -(counts[c] / total) * block
            r[f * n_cls + c] += 1.0
            rows.append(r)
            lo.append(-1.0)
            hi.append(1.0)
    per = np.tile(counts / k, k)
    res = milp(
        c=np.zeros(nv),
        constraints=LinearConstraint(np.array(rows), lo, hi),
        integrality=np.ones(nv),
        bounds=Bounds(np.floor(per), np.ceil(per)),
    )
    if not res.success:
        return None
    return np.rint(res.x).astype(np.int64).reshape(k, n_cls)


def kfold(dataset_or_labels, k=5, seed=0):
    """Stratified k-fold split; returns ``k`` pairs of sorted ``(train_idx, test_idx)``.

    Every fold holds each class within one example of ``count / k`` and within one
    example of its size-proportional share.
    """
    labels = dataset_or_labels.labels if isinstance(dataset_or_labels, Dataset) else np.asarray(dataset_or_labels)
    if k < 2:
        raise RejectedInputError("k must be at least 2")
    classes, counts = np.unique(labels, return_counts=True)
    if np.any(counts < k):
        small = classes[counts < k].tolist()
        raise RejectedInputError(f"classes {small} have fewer than k={k} examples")
    plan = _fold_counts(counts, k)
    if plan is None:
        # round-robin dealing keeps the per-class bound but not the proportional one
        plan = np.zeros((k, classes.size), dtype=np.int64)
        offset = 0
        for c, cnt in enumerate(counts):
            for f, size in enumerate(np.diff(np.linspace(0, cnt, k + 1).round().astype(int))):
                plan[(f + offset) % k, c] = size
            offset += cnt % k
    rng = np.random.default_rng(seed)
    buckets = [[] for _ in range(k)]
    for c, cls in enumerate(classes):
        idx = rng.permutation(np.flatnonzero(labels == cls))
        cuts = np.cumsum(plan[:, c])[:-1]
        for f, chunk in enumerate(np.split(idx, cuts)):
            buckets[f].append(chunk)
    all_idx = np.arange(len(labels))
    folds = []
    for b in buckets:
        test = np.sort(np.concatenate(b))
        folds.append((np.setdiff1d(all_idx, test), test))
    return folds


def save_csv(dataset: Dataset, path):
    """Header ``label,f0,f1,...``, preceded by a ``# classes:`` comment line."""
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        fh.write("# classes: " + ",".join(dataset.class_names) + "\n")
        w = csv.writer(fh)
        w.writerow(["label"] + [f"f{j}" for j in range(dataset.in_dim)])
        for y, row in zip(dataset.labels, dataset.features):
            w.writerow([int(y)] + [repr(float(v)) for v in row])


def load_csv(path) -> Dataset:
    """Parse a dataset file; an optional leading ``id`` column is accepted and dropped."""
    path = Path(path)
    names = None
    header = None
    skip = 0
    xs, ys = [], []
    with path.open(newline="", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            text = line.strip()
            if not text:
                continue
            if text.startswith("#"):
                body = text[1:].strip()
                if body.startswith("classes:") and header is None:
                    names = [s.strip() for s in body[len("classes:"):].split(",") if s.strip()]
                continue
            cells = next(csv.reader([text]))
            if header is None:
                skip = 1 if cells and cells[0].strip() == "id" else 0
                if len(cells) < skip + 2 or cells[skip].strip() != "label":
                    raise ParseError("header must be 'label,f0,f1,...'", line=lineno, path=path)
                header = cells
                continue
            if len(cells) != len(header):
                raise ParseError(f"expected {len(header)} fields, got {len(cells)}", line=lineno, path=path)
            cells = cells[skip:]
            try:
                y = int(cells[0])
            except ValueError:
                raise ParseError(f"label {cells[0]!r} is not an integer class index", line=lineno, path=path) from None
            if y < 0 or (names is not None and y >= len(names)):
                raise ParseError(f"unknown label {y}", line=lineno, path=path)
            try:
                row = [float(c) for c in cells[1:]]
            except ValueError as exc:
                raise ParseError(f"malformed feature value ({exc})", line=lineno, path=path) from None
            if not all(np.isfinite(row)):
                raise ParseError("non-finite feature value", line=lineno, path=path)
            xs.append(row)
            ys.append(y)
    if header is None or not xs:
        raise ParseError("file has no data rows", path=path)
    try:
        return Dataset(np.array(xs), np.array(ys), names or [])
    except RejectedInputError as exc:
        raise ParseError(str(exc), path=path) from None
