"""Command-line front end.

    dcsl gen-data | train | crossval | ablate | export-embeddings [flags]

Settings come from built-in defaults, then an optional ``--config`` file of
``key = value`` lines, then command-line flags (flags win).
Exit codes: 0 success, 1 validation error, 2 runtime or training error.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
import zipfile
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from dcsl.centers import CenterBank
from dcsl.costs import ScoreCostMatrix, load_cost_matrix
from dcsl.data import Dataset, SynthConfig, generate, kfold, load_csv, save_csv
from dcsl.errors import DCSLError, TrainingDivergenceError
from dcsl.evaluation import confusion, metrics, paired_ttest
from dcsl.nncore import AdamState, DenseLayer, Network
from dcsl.trainer import LOSS_MODES, TrainConfig, TrainState, embed, fit, predict

log = logging.getLogger("dcsl")

EXIT_OK, EXIT_VALIDATION, EXIT_RUNTIME = 0, 1, 2

_WEIGHT_ALIASES = {"frequency": "frequency", "inverse": "inverse_frequency",
                   "inverse_frequency": "inverse_frequency", "unit": "unit"}
_SYNTH_KEYS = ("counts", "in_dim", "separation", "spread", "data_seed")
_SCALAR_METRICS = ("accuracy", "precision_macro", "sensitivity_macro", "f1_macro",
                   "precision_weighted", "sensitivity_weighted", "f1_weighted")


class UsageError(DCSLError, ValueError):
    pass


@dataclass
class RunConfig:
    train: TrainConfig = field(default_factory=TrainConfig)
    data: str | None = None
    synth: SynthConfig | None = None
    cost_matrix: str = "clinical-default"
    out: Path = Path("dcsl_out")
    folds: int = 5
    model: str | None = None


def read_config_file(path) -> dict:
    """Flat ``key = value`` file; ``#`` starts a comment. Keys use the long flag names."""
    out = {}
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc.strerror}") from None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key.replace("-", "_")] = value
    return out


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    g = common.add_argument_group("common")
    g.add_argument("--config", help="key = value settings file (flags override it)")
    g.add_argument("--seed", type=int)
    g.add_argument("--out", help="output directory (gen-data: file or directory)")
    g.add_argument("--folds", type=int)
    g.add_argument("--loss-mode", choices=LOSS_MODES)
    g.add_argument("--cost-matrix", help="CSV path or 'clinical-default'")
    g.add_argument("--class-weights", choices=sorted(_WEIGHT_ALIASES))
    g.add_argument("--lambda-c", type=float)
    g.add_argument("--alpha", type=float)
    g.add_argument("--lr", type=float)
    g.add_argument("--epochs", type=int)
    g.add_argument("--batch", type=int)
    g.add_argument("--center-weighting", choices=("none", "delta", "update", "both"))
    g.add_argument("--score-transform", choices=("matrix", "label_row"))
    g.add_argument("--costs-at-test", choices=("on", "off"))
    g.add_argument("--hidden", help="comma-separated hidden widths, e.g. 32 or 64,32")
    g.add_argument("--feature-dim", type=int)
    d = common.add_argument_group("data")
    d.add_argument("--data", help="dataset CSV (otherwise a synthetic set is generated)")
    d.add_argument("--counts", help="synthetic class counts, e.g. 24,100,100")
    d.add_argument("--in-dim", type=int)
    d.add_argument("--separation", type=float)
    d.add_argument("--spread", type=float)
    d.add_argument("--data-seed", type=int)
    d.add_argument("--model", help="trained model .npz (export-embeddings)")
    d.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="dcsl", description="Discriminative cost-sensitive learning toolkit")
    sub = p.add_subparsers(dest="command", required=True)
    for name, help_ in (
        ("gen-data", "write a synthetic dataset CSV"),
        ("train", "fit one model on the whole dataset"),
        ("crossval", "stratified k-fold cross-validation"),
        ("ablate", "compare the four loss modes on identical folds"),
        ("export-embeddings", "write deep features for every example"),
    ):
        sub.add_parser(name, parents=[common], help=help_)
    return p


def _merged(args) -> dict:
    vals = read_config_file(args.config) if args.config else {}
    for k, v in vars(args).items():
        if v is not None and k not in ("config", "command"):
            vals[k] = v
    return vals


def _int_list(text, what):
    try:
        return tuple(int(s) for s in str(text).split(",") if s.strip())
    except ValueError:
        raise UsageError(f"{what} must be comma-separated integers, got {text!r}") from None


def run_config(vals: dict) -> RunConfig:
    def get(key, cast, default=None):
        if key not in vals:
            return default
        try:
            return cast(vals[key])
        except (TypeError, ValueError):
            raise UsageError(f"bad value for {key}: {vals[key]!r}") from None

    tc = {}
    mapping = {
        "seed": ("seed", int), "loss_mode": ("loss_mode", str), "lambda_c": ("lambda_c", float),
        "alpha": ("alpha", float), "lr": ("lr", float), "epochs": ("epochs", int),
        "batch": ("batch_size", int), "center_weighting": ("center_weighting_mode", str),
        "score_transform": ("score_transform_mode", str), "feature_dim": ("feature_dim", int),
    }
    for key, (name, cast) in mapping.items():
        v = get(key, cast)
        if v is not None:
            tc[name] = v
    if "class_weights" in vals:
        if vals["class_weights"] not in _WEIGHT_ALIASES:
            raise UsageError(f"class weights must be one of {sorted(_WEIGHT_ALIASES)}")
        tc["class_weight_mode"] = _WEIGHT_ALIASES[vals["class_weights"]]
    if "costs_at_test" in vals:
        tc["costs_at_test"] = str(vals["costs_at_test"]).lower() in ("on", "1", "true", "yes")
    if "hidden" in vals:
        tc["hidden"] = _int_list(vals["hidden"], "hidden")

    cost = str(vals.get("cost_matrix", "clinical-default"))
    if cost != "clinical-default":
        try:
            tc["score_costs"] = load_cost_matrix(cost, "score")
        except FileNotFoundError:
            raise UsageError(f"cost matrix not found: {cost}") from None

    data = vals.get("data")
    synth = None
    if data is not None and any(k in vals for k in _SYNTH_KEYS):
        raise UsageError("give either --data or synthetic-data flags, not both")
    if data is None:
        kw = {}
        if "counts" in vals:
            kw["class_counts"] = _int_list(vals["counts"], "counts")
            kw["n_classes"] = len(kw["class_counts"])
        for key, name, cast in (("in_dim", "in_dim", int), ("separation", "class_separation", float),
                                ("spread", "intra_spread", float), ("data_seed", "seed", int)):
            v = get(key, cast)
            if v is not None:
                kw[name] = v
        if "seed" not in kw and "seed" in tc:
            kw["seed"] = tc["seed"]
        synth = SynthConfig(**kw)

    return RunConfig(
        train=TrainConfig(**tc),
        data=data,
        synth=synth,
        cost_matrix=cost,
        out=Path(vals.get("out", "dcsl_out")),
        folds=get("folds", int, 5),
        model=vals.get("model"),
    )


def load_dataset(rc: RunConfig) -> Dataset:
    if rc.data is not None:
        try:
            return load_csv(rc.data)
        except FileNotFoundError:
            raise UsageError(f"dataset not found: {rc.data}") from None
    return generate(rc.synth)


def _ensure_dir(path: Path) -> Path:
    path.mkdir(parents=True, exist_ok=True)
    return path


def _write_json(path: Path, obj):
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _config_dict(cfg: TrainConfig) -> dict:
    d = asdict(cfg)
    d["hidden"] = list(cfg.hidden)
    d["score_costs"] = None if cfg.score_costs is None else cfg.score_costs.entries.tolist()
    return d


def save_state(state: TrainState, path):
    """Store a trained model as ``.npz`` (arrays) with the config embedded as JSON."""
    arrays = {}
    for i, layer in enumerate(state.network.layers):
        arrays[f"W{i}"] = layer.weights
        arrays[f"b{i}"] = layer.bias
    meta = {
        "config": _config_dict(state.config),
        "activations": [l.activation for l in state.network.layers],
        "alpha": state.centers.alpha,
        "weighting_mode": state.centers.weighting_mode,
        "t": state.t,
        "history": state.history,
    }
    arrays.update(centers=state.centers.centers, class_weights=state.class_weights,
                  score_costs=state.score_costs.entries, meta=np.array(json.dumps(meta, sort_keys=True)))
    _write_npz(path, arrays)


def _write_npz(path, arrays):
    # np.savez stamps entries with the current time; a fixed stamp keeps files bit-reproducible
    with zipfile.ZipFile(path, "w", compression=zipfile.ZIP_STORED) as zf:
        for name, arr in arrays.items():
            info = zipfile.ZipInfo(f"{name}.npy", date_time=(1980, 1, 1, 0, 0, 0))
            with zf.open(info, "w", force_zip64=True) as fh:
                np.lib.format.write_array(fh, np.asanyarray(arr), allow_pickle=False)


def load_state(path) -> TrainState:
    with np.load(path) as z:
        meta = json.loads(str(z["meta"]))
        layers = [DenseLayer(z[f"W{i}"], z[f"b{i}"], act) for i, act in enumerate(meta["activations"])]
        cfg = dict(meta["config"])
        cfg["hidden"] = tuple(cfg["hidden"])
        cfg["score_costs"] = None if cfg["score_costs"] is None else ScoreCostMatrix(cfg["score_costs"])
        net = Network(layers)
        return TrainState(
            config=TrainConfig(**cfg),
            network=net,
            centers=CenterBank(z["centers"], meta["alpha"], meta["weighting_mode"]),
            optimizer=AdamState.for_params(net.parameters()),
            class_weights=z["class_weights"],
            score_costs=ScoreCostMatrix(z["score_costs"]),
            t=meta["t"],
            history=meta["history"],
        )


def fold_seed(master, fold) -> int:
    return int(np.random.SeedSequence([master, fold]).generate_state(1)[0])


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("DCSL_THREADS", "1")))
    except ValueError:
        return 1


def run_folds(ds: Dataset, cfg: TrainConfig, k: int):
    """Train and evaluate each fold; returns a list of (MetricsReport | Exception) in fold order."""
    splits = kfold(ds, k, seed=cfg.seed)

    def one(f):
        tr, te = splits[f]
        fcfg = TrainConfig(**{**{fl.name: getattr(cfg, fl.name) for fl in fields(cfg)}, "seed": fold_seed(cfg.seed, f)})
        try:
            state = fit(ds.subset(tr), fcfg)
        except TrainingDivergenceError as exc:
            return TrainingDivergenceError(f"fold {f + 1}: {exc}")
        pred, _ = predict(state, ds.features[te])
        return metrics(confusion(pred, ds.labels[te], ds.n_classes))

    with ThreadPoolExecutor(max_workers=_threads()) as pool:
        return list(pool.map(one, range(k)))


def aggregate(reports) -> dict:
    """Mean of each metric across folds (flat report keys) plus ``*_sd`` and the summed confusion."""
    out = {}
    for key in _SCALAR_METRICS:
        vals = np.array([getattr(r, key) for r in reports])
        out[key] = float(vals.mean())
        out[f"{key}_sd"] = float(vals.std(ddof=1)) if len(vals) > 1 else 0.0
    sens = np.array([r.sensitivity_per_class for r in reports])
    out["sensitivity_per_class"] = sens.mean(axis=0).tolist()
    out["sensitivity_per_class_sd"] = (sens.std(axis=0, ddof=1) if len(reports) > 1 else 0 * sens[0]).tolist()
    out["confusion"] = np.sum([r.confusion for r in reports], axis=0).tolist()
    out["folds"] = len(reports)
    return out


def _write_confusion(path: Path, cm):
    with path.open("w", newline="", encoding="utf-8") as fh:
        csv.writer(fh).writerows(np.asarray(cm).tolist())


def minority_class(ds: Dataset) -> int:
    return int(np.argmin(ds.class_counts()))


def cmd_gen_data(rc: RunConfig) -> int:
    if rc.synth is None:
        raise UsageError("gen-data generates synthetic data; --data is not accepted")
    ds = generate(rc.synth)
    out = rc.out if rc.out.suffix == ".csv" else _ensure_dir(rc.out) / "dataset.csv"
    out.parent.mkdir(parents=True, exist_ok=True)
    save_csv(ds, out)
    for name, count in zip(ds.class_names, ds.class_counts()):
        print(f"{name}\t{count}")
    print(f"wrote {len(ds)} rows to {out}")
    return EXIT_OK


def cmd_train(rc: RunConfig) -> int:
    ds = load_dataset(rc)
    out = _ensure_dir(rc.out)
    state = fit(ds, rc.train)
    save_state(state, out / "model.npz")
    pred, _ = predict(state, ds.features)
    report = metrics(confusion(pred, ds.labels, ds.n_classes))
    _write_json(out / "train_metrics.json", report.to_dict())
    _write_json(out / "history.json", state.history)
    print(f"trained {rc.train.loss_mode} for {rc.train.epochs} epochs; "
          f"train accuracy {report.accuracy:.4f}; model at {out / 'model.npz'}")
    return EXIT_OK


def cmd_crossval(rc: RunConfig) -> int:
    ds = load_dataset(rc)
    out = _ensure_dir(rc.out)
    results = run_folds(ds, rc.train, rc.folds)
    failed = False
    for f, r in enumerate(results, start=1):
        if isinstance(r, Exception):
            log.error("%s", r)
            failed = True
            continue
        _write_json(out / f"fold_{f}.json", r.to_dict())
        _write_confusion(out / f"fold_{f}_confusion.csv", r.confusion)
    if failed:
        return EXIT_RUNTIME
    agg = aggregate(results)
    _write_json(out / "aggregate.json", agg)
    _write_confusion(out / "aggregate_confusion.csv", agg["confusion"])
    print(f"{rc.folds}-fold {rc.train.loss_mode}: accuracy {agg['accuracy']:.4f} ± {agg['accuracy_sd']:.4f}, "
          f"f1 {agg['f1_macro']:.4f}")
    return EXIT_OK


ABLATION_COLUMNS = ("accuracy", "precision", "sensitivity", "f1", "minority_sensitivity")


def cmd_ablate(rc: RunConfig) -> int:
    ds = load_dataset(rc)
    out = _ensure_dir(rc.out)
    minority = minority_class(ds)
    rows, per_fold = [], {}
    for mode in LOSS_MODES:
        cfg = TrainConfig(**{**{fl.name: getattr(rc.train, fl.name) for fl in fields(rc.train)}, "loss_mode": mode})
        results = run_folds(ds, cfg, rc.folds)
        errors = [r for r in results if isinstance(r, Exception)]
        if errors:
            for e in errors:
                log.error("%s: %s", mode, e)
            return EXIT_RUNTIME
        agg = aggregate(results)
        _write_json(out / f"{mode}_aggregate.json", agg)
        _write_confusion(out / f"{mode}_confusion.csv", agg["confusion"])
        per_fold[mode] = [float(r.sensitivity_per_class[minority]) for r in results]
        rows.append([mode, agg["accuracy"], agg["precision_macro"], agg["sensitivity_macro"], agg["f1_macro"],
                     float(np.mean(per_fold[mode]))])
    with (out / "ablation.csv").open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(("mode",) + ABLATION_COLUMNS)
        for row in rows:
            w.writerow([row[0]] + [repr(float(v)) for v in row[1:]])
    with (out / "ablation_folds.csv").open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(("fold",) + LOSS_MODES)
        for f in range(rc.folds):
            w.writerow([f + 1] + [repr(per_fold[m][f]) for m in LOSS_MODES])
    try:
        t, p, df = paired_ttest(per_fold["dcsl"], per_fold["softmax"])
        test = {"t": t, "p": p, "df": df}
    except DCSLError as exc:
        test = {"error": str(exc)}
    _write_json(out / "ablation_ttest.json", {"metric": "minority_sensitivity", "minority_class": minority,
                                              "a": "dcsl", "b": "softmax", **test})
    print(f"{'mode':<12}" + "".join(f"{c:>22}" for c in ABLATION_COLUMNS))
    for row in rows:
        print(f"{row[0]:<12}" + "".join(f"{v:>22.4f}" for v in row[1:]))
    return EXIT_OK


def cmd_export_embeddings(rc: RunConfig) -> int:
    ds = load_dataset(rc)
    out = _ensure_dir(rc.out)
    if rc.model:
        try:
            state = load_state(rc.model)
        except FileNotFoundError:
            raise UsageError(f"model not found: {rc.model}") from None
    else:
        state = fit(ds, rc.train)
        save_state(state, out / "model.npz")
    feats = embed(state, ds.features)
    path = out / "embeddings.csv"
    with path.open("w", newline="", encoding="utf-8") as fh:
        fh.write("# classes: " + ",".join(ds.class_names) + "\n")
        w = csv.writer(fh)
        w.writerow(["id", "label"] + [f"f{j}" for j in range(feats.shape[1])])
        for i, (y, row) in enumerate(zip(ds.labels, feats)):
            w.writerow([i, int(y)] + [repr(float(v)) for v in row])
    print(f"wrote {len(ds)} embeddings of dimension {feats.shape[1]} to {path}")
    return EXIT_OK


COMMANDS = {
    "gen-data": cmd_gen_data,
    "train": cmd_train,
    "crossval": cmd_crossval,
    "ablate": cmd_ablate,
    "export-embeddings": cmd_export_embeddings,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO, format="%(levelname)s %(message)s")
    try:
        rc = run_config(_merged(args))
        return COMMANDS[args.command](rc)
    except TrainingDivergenceError as exc:
        log.error("training diverged: %s", exc)
        return EXIT_RUNTIME
    except DCSLError as exc:
        log.error("%s", exc)
        return EXIT_VALIDATION
    except OSError as exc:
        log.error("I/O error on %s: %s", exc.filename, exc.strerror)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
