"""Run-directory based experiment protocol: training runs, sweeps, ensembles, embeddings.

A run unit is a directory holding ``config.json``, ``checkpoint.json``,
``history.csv`` and ``metrics.json``. A unit whose ``metrics.json`` exists is
complete and is never retrained.
"""
from __future__ import annotations

import csv
import hashlib
import json
import logging
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import augment as A
from .checkpoint import save_checkpoint, load_checkpoint, load_norm
from .data import (Dataset, GeneratorConfig, NormStats, fit_normalization, generate_synthetic,
                   parse_csv, stratified_split, subsample_fraction, write_csv)
from .ensemble import META_KINDS, fit_meta, meta_predict
from .metrics import (METRIC_NAMES, confusion, embedding_distance_stats, evaluate_scores, mcc)
from .models import KINDS, SUB_KINDS, Model, build_model, ConfigurationError
from .training import TrainConfig, train

log = logging.getLogger(__name__)

SEEDS = (1, 2, 3)
BATCH_GRID = (1, 2, 4, 8, 16, 32, 64, 128)
FRACTION_GRID = (0.25, 0.5, 0.75, 1.0)
TABLE2_LOSSES = ("contrastive", "npairs", "triplet_hard", "triplet_semihard")


def config_hash(config: dict) -> str:
    blob = json.dumps(config, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:12]


def write_json(path, obj) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")
    os.replace(tmp, path)


def read_json(path) -> dict:
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def write_table(path, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_cell(v) for v in row])
    os.replace(tmp, path)
    return path


def _cell(v):
    if isinstance(v, float):
        return f"{v:.6f}"
    return v


@dataclass
class Splits:
    train: Dataset
    val: Dataset
    test: Dataset
    norm: NormStats

    def x(self, name: str) -> np.ndarray:
        return self.norm.apply(getattr(self, name).temps)

    def y(self, name: str) -> np.ndarray:
        return getattr(self, name).labels


def prepare_splits(dataset: Dataset, split_seed: int = 1, fraction: float = 1.0,
                   fraction_seed: int = 1) -> Splits:
    """Stratified 60/20/20 split; normalization fitted on the (possibly subsampled) training split."""
    train_ds, val_ds, test_ds = stratified_split(dataset, (0.6, 0.2, 0.2), split_seed)
    train_ds = subsample_fraction(train_ds, fraction, fraction_seed)
    return Splits(train_ds, val_ds, test_ds, fit_normalization(train_ds))


def load_or_generate(data_path: str | Path | None, gen: GeneratorConfig | None = None) -> Dataset:
    if data_path:
        return parse_csv(data_path)
    return generate_synthetic(gen or GeneratorConfig())


# ---------------------------------------------------------------------------
# single runs

def run_is_complete(run_dir) -> bool:
    return (Path(run_dir) / "metrics.json").exists()


def train_run(kind: str, splits: Splits, config: TrainConfig, run_dir,
              sub_checkpoints: dict | None = None, extra_config: dict | None = None) -> dict:
    """Train one model into ``run_dir`` (skipped when already complete) and return its metrics."""
    run_dir = Path(run_dir)
    if run_is_complete(run_dir):
        return read_json(run_dir / "metrics.json")
    run_dir.mkdir(parents=True, exist_ok=True)
    persisted = {"train": config.to_dict(), **(extra_config or {})}
    if kind == "jmwr":
        if not sub_checkpoints or any(not sub_checkpoints.get(k) for k in SUB_KINDS):
            raise ConfigurationError("J-MWR training needs lmwr, rmwr and gmwr checkpoints")
        persisted["sub_checkpoints"] = {k: os.path.relpath(sub_checkpoints[k], run_dir)
                                        for k in SUB_KINDS}
        subs = {k: load_checkpoint(sub_checkpoints[k], expect_kind=k)[0] for k in SUB_KINDS}
        model = build_model("jmwr", config.seed, subs)
    else:
        model = build_model(kind, config.seed)
    write_json(run_dir / "config.json", persisted)

    model, history = train(model, splits.x("train"), splits.y("train"),
                           splits.x("val"), splits.y("val"), config,
                           class_counts=splits.train.class_counts)
    save_checkpoint(model, run_dir / "checkpoint.json", seed=config.seed, config=persisted,
                    norm=splits.norm)
    history.write_csv(run_dir / "history.csv")
    metrics = evaluate_model(model, splits.x("test"), splits.y("test"))
    metrics.update({"model": kind, "seed": config.seed, "config_hash": config_hash(persisted),
                    "best_epoch": history.best_epoch, "epochs": len(history.rows)})
    write_json(run_dir / "metrics.json", metrics)
    return metrics


def evaluate_model(model: Model, x, y) -> dict:
    return evaluate_scores(model.predict(x), y)


def evaluate_checkpoint(checkpoint, dataset: Dataset, norm: NormStats | None = None) -> dict:
    model, doc = load_checkpoint(checkpoint)
    norm = norm or load_norm(doc)
    if norm is None:
        raise ConfigurationError(f"{checkpoint} carries no normalization statistics")
    metrics = evaluate_model(model, norm.apply(dataset.temps), dataset.labels)
    metrics.update({"model": model.kind, "seed": doc.get("seed")})
    return metrics


# ---------------------------------------------------------------------------
# protocol pieces

def _run_name(kind, seed, loss="none", batch=None, fraction=None):
    parts = [kind, loss]
    if batch is not None:
        parts.append(f"b{batch}")
    if fraction is not None:
        parts.append(f"f{int(round(fraction * 100))}")
    parts.append(f"s{seed}")
    return "-".join(parts)


def train_model_set(splits: Splits, base_config: TrainConfig, root, seed: int,
                    models: Sequence[str] = KINDS, loss: str = "none", batch: int | None = None,
                    fraction: float | None = None) -> dict:
    """Train the requested kinds for one seed; J-MWR reuses the sub-models trained here.

    Sub-models carry the batch-wise loss; the J-MWR fine-tune never does.
    """
    root = Path(root)
    results = {}
    needed = list(models)
    if "jmwr" in needed:
        needed = [k for k in KINDS if k in needed or k in SUB_KINDS]
    dirs = {}
    for kind in needed:
        overrides = {"model": kind, "seed": seed, "lr": None,
                     "contrastive": "none" if kind == "jmwr" else loss}
        if batch is not None:
            overrides["batch_size"] = batch
        cfg = TrainConfig.from_dict({**base_config.to_dict(), **overrides})
        run_dir = root / _run_name(kind, seed, loss, batch, fraction)
        dirs[kind] = run_dir
        subs = {k: dirs[k] / "checkpoint.json" for k in SUB_KINDS} if kind == "jmwr" else None
        extra = {"fraction": fraction} if fraction is not None else None
        metrics = train_run(kind, splits, cfg, run_dir, subs, extra)
        if kind in models:
            results[kind] = {"metrics": metrics, "dir": run_dir}
    return results


def _mean_std(values) -> tuple[float, float]:
    return float(np.mean(values)), float(np.std(values))


def table1(results_by_seed: dict, models: Sequence[str], path) -> Path:
    rows = []
    for kind in models:
        runs = [results_by_seed[s][kind]["metrics"] for s in sorted(results_by_seed)]
        row = [kind]
        for m in METRIC_NAMES:
            mu, sd = _mean_std([r[m] for r in runs])
            row += [mu, sd]
        rows.append(row)
    header = ["model"] + [f"{m}_{s}" for m in METRIC_NAMES for s in ("mean", "std")]
    return write_table(path, header, rows)


def sweep_batch(splits: Splits, base_config: TrainConfig, root, out_csv, models=KINDS,
                seeds=SEEDS, batches=BATCH_GRID) -> Path:
    rows = []
    per = {}
    for bs in batches:
        for seed in seeds:
            # the default batch size is the main run; reuse it instead of retraining
            b = None if bs == base_config.batch_size else bs
            res = train_model_set(splits, base_config, Path(root), seed, models, batch=b)
            for kind in models:
                per.setdefault((kind, bs), []).append(res[kind]["metrics"])
    for kind in models:
        for bs in batches:
            row = [kind, bs]
            for m in METRIC_NAMES:
                row += list(_mean_std([r[m] for r in per[(kind, bs)]]))
            rows.append(row)
    header = ["model", "batch_size"] + [f"{m}_{s}" for m in METRIC_NAMES for s in ("mean", "std")]
    return write_table(out_csv, header, rows)


def sweep_fraction(dataset: Dataset, base_config: TrainConfig, root, out_csv, models=KINDS,
                   seeds=SEEDS, fractions=FRACTION_GRID, split_seed: int = 1) -> Path:
    rows = []
    per = {}
    for frac in fractions:
        splits = prepare_splits(dataset, split_seed, fraction=frac)
        for seed in seeds:
            f = None if frac == 1.0 else frac
            res = train_model_set(splits, base_config, Path(root), seed, models, fraction=f)
            for kind in models:
                per.setdefault((kind, frac), []).append(res[kind]["metrics"])
    for kind in models:
        for frac in fractions:
            row = [kind, frac, len(prepare_splits(dataset, split_seed, fraction=frac).train)]
            for m in METRIC_NAMES:
                row += list(_mean_std([r[m] for r in per[(kind, frac)]]))
            rows.append(row)
    header = ["model", "fraction", "n_train"] + [f"{m}_{s}" for m in METRIC_NAMES for s in ("mean", "std")]
    return write_table(out_csv, header, rows)


def robustness_sweep(model: Model, test: Dataset, norm: NormStats, kind: str,
                     grid: Sequence[float] | None = None, seed: int = 0) -> list[tuple[float, float]]:
    """MCC of a frozen model on the test split under each perturbation of one kind."""
    grid = A.DEFAULT_GRIDS[kind] if grid is None else grid
    out = []
    for i, mag in enumerate(grid):
        spec = A.AugmentationSpec(kind, mag, seed=seed * 1000 + i)
        x = A.augment(test.temps, spec, norm)
        out.append((mag, mcc(confusion(model.predict(x), test.labels))))
    return out


def robustness_tables(run_dirs_by_model: dict, test: Dataset, out_dir, grids: dict | None = None,
                      prefix: str = "") -> list[Path]:
    """One CSV per augmentation kind: model, magnitude, MCC mean/std over the given runs."""
    grids = grids or A.DEFAULT_GRIDS
    paths = []
    for aug_kind in A.AUG_KINDS:
        rows = []
        for kind, dirs in run_dirs_by_model.items():
            per_run = []
            for d in dirs:
                model, doc = load_checkpoint(Path(d) / "checkpoint.json")
                per_run.append(robustness_sweep(model, test, load_norm(doc), aug_kind, grids[aug_kind]))
            for j, mag in enumerate(grids[aug_kind]):
                mu, sd = _mean_std([r[j][1] for r in per_run])
                rows.append([kind, mag, mu, sd])
        paths.append(write_table(Path(out_dir) / f"{prefix}robustness_{aug_kind}.csv",
                                 ["model", "magnitude", "mcc_mean", "mcc_std"], rows))
    return paths


def sub_model_scores(sub_models: dict, x) -> np.ndarray:
    return np.column_stack([sub_models[k].predict(x) for k in SUB_KINDS])


def ensemble_study(runs_by_seed: dict, splits: Splits, out_csv, out_root=None) -> Path:
    """Five meta strategies on frozen sub-models plus the fine-tuned J-MWR, MCC mean/std over seeds.

    ``runs_by_seed[seed]`` maps lmwr/rmwr/gmwr (and optionally jmwr) to run directories.
    """
    per = {k: [] for k in META_KINDS}
    jm, jpaths = [], []
    base = Path(out_root) if out_root else Path(out_csv).parent
    for seed in sorted(runs_by_seed):
        dirs = runs_by_seed[seed]
        subs = {k: load_checkpoint(Path(dirs[k]) / "checkpoint.json", expect_kind=k)[0] for k in SUB_KINDS}
        s_train = sub_model_scores(subs, splits.x("train"))
        s_test = sub_model_scores(subs, splits.x("test"))
        for kind in META_KINDS:
            clf = fit_meta(kind, s_train, splits.y("train"), seed=seed)
            per[kind].append(mcc(confusion(meta_predict(clf, s_test), splits.y("test"))))
        if "jmwr" in dirs:
            jm.append(read_json(Path(dirs["jmwr"]) / "metrics.json")["mcc"])
            jpaths.append(os.path.relpath(Path(dirs["jmwr"]) / "checkpoint.json", base))
    rows = []
    if jm:
        rows.append(["jmwr", *_mean_std(jm), ";".join(jpaths)])
    for kind in META_KINDS:
        rows.append([kind, *_mean_std(per[kind]), ""])
    return write_table(out_csv, ["method", "mcc_mean", "mcc_std", "checkpoint"], rows)


def export_embeddings(checkpoint, dataset: Dataset, out_dir, norm: NormStats | None = None) -> dict:
    """Write ``embeddings.csv`` (id, label, correct, e0..) and ``embedding_stats.json``."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    model, doc = load_checkpoint(checkpoint)
    norm = norm or load_norm(doc)
    x = norm.apply(dataset.temps)
    scores = model.predict(x)
    emb = model.embed(x)
    pred = (scores >= 0.5).astype(int)
    correct = (pred == dataset.labels).astype(int)
    header = ["id", "label", "correct"] + [f"e{i}" for i in range(emb.shape[1])]
    rows = ([dataset.ids[i], int(dataset.labels[i]), int(correct[i])] + [repr(float(v)) for v in emb[i]]
            for i in range(len(dataset)))
    write_table(out_dir / "embeddings.csv", header, rows)
    stats = embedding_distance_stats(emb, dataset.labels).to_dict()
    stats.update({"model": model.kind, "dim": int(emb.shape[1]), "n": len(dataset)})
    write_json(out_dir / "embedding_stats.json", stats)
    return stats
