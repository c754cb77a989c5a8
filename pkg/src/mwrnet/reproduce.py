"""Full experiment suite on synthetic data, written as a report tree.

Layout under ``out_dir``::

    data/synthetic.csv, data/synthetic.json
    runs/<kind>-<loss>[-bN][-fP]-s<seed>/      one run unit each
    table1.csv  table2.csv
    fig5_batch.csv  fig5_fraction.csv
    fig6_robustness_<aug>.csv
    fig7_ensemble.csv
    summary.md

Every step is resumable because run units with a ``metrics.json`` are skipped,
so a second invocation only rebuilds the tables.
"""
from __future__ import annotations

import csv
import logging
from pathlib import Path
from typing import Sequence

from . import experiments as X
from .data import GeneratorConfig, generate_synthetic, parse_csv, write_csv
from .models import KINDS, SUB_KINDS
from .training import TrainConfig

log = logging.getLogger(__name__)


def _dataset(out_dir: Path, gen: GeneratorConfig | None, data_path):
    if data_path:
        return parse_csv(data_path)
    gen = gen or GeneratorConfig()
    path = out_dir / "data" / "synthetic.csv"
    if path.exists():
        return parse_csv(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    ds = generate_synthetic(gen)
    write_csv(ds, path)
    X.write_json(path.with_suffix(".json"), {"generator": gen.to_dict(), "n_cases": len(ds),
                                             "n_positive": int(ds.labels.sum())})
    return ds


def _table2(results: dict, models: Sequence[str], path: Path) -> Path:
    rows = []
    for kind in models:
        for loss in X.TABLE2_LOSSES:
            runs = [results[loss][s][kind]["metrics"] for s in sorted(results[loss])]
            row = [kind, loss]
            for m in X.METRIC_NAMES:
                row += list(X._mean_std([r[m] for r in runs]))
            rows.append(row)
    header = ["model", "loss"] + [f"{m}_{s}" for m in X.METRIC_NAMES for s in ("mean", "std")]
    return X.write_table(path, header, rows)


def _markdown(path: Path) -> list[str]:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    lines = ["| " + " | ".join(rows[0]) + " |", "|" + "---|" * len(rows[0])]
    lines += ["| " + " | ".join(r) + " |" for r in rows[1:]]
    return lines


def write_summary(out_dir: Path, tables: dict, settings: dict) -> Path:
    lines = ["# Synthetic reproduction report", "",
             "Scores are on synthetic data and say nothing about clinical performance.", "",
             "## Settings", ""]
    lines += [f"- {k}: {settings[k]}" for k in sorted(settings)]
    for title, p in tables.items():
        lines += ["", f"## {title}", "", f"Source: `{p.name}`", ""]
        lines += _markdown(p)
    path = out_dir / "summary.md"
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text("\n".join(lines) + "\n", encoding="utf-8")
    tmp.replace(path)
    return path


def reproduce_all(out_dir, gen: GeneratorConfig | None = None, data_path=None,
                  base_config: TrainConfig | None = None, models: Sequence[str] = KINDS,
                  seeds: Sequence[int] = X.SEEDS, batches: Sequence[int] = X.BATCH_GRID,
                  fractions: Sequence[float] = X.FRACTION_GRID, split_seed: int = 1,
                  sweeps: bool = True, contrastive: bool = True) -> Path:
    """Run (or resume) the whole suite and return the path of ``summary.md``."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    base = base_config or TrainConfig()
    models = [k for k in KINDS if k in models]
    if len(seeds) < 2:
        raise ValueError("reproduce-all aggregates over seeds; pass at least two")
    dataset = _dataset(out_dir, gen, data_path)
    splits = X.prepare_splits(dataset, split_seed)
    runs = out_dir / "runs"
    tables = {}

    log.info("main runs: %s x seeds %s", models, list(seeds))
    main = {s: X.train_model_set(splits, base, runs, s, models) for s in seeds}
    tables["Model comparison"] = X.table1(main, models, out_dir / "table1.csv")

    if contrastive:
        res = {loss: {s: X.train_model_set(splits, base, runs, s, models, loss=loss) for s in seeds}
               for loss in X.TABLE2_LOSSES}
        tables["Batch-wise contrastive losses"] = _table2(res, models, out_dir / "table2.csv")

    if sweeps:
        tables["Batch size sweep"] = X.sweep_batch(splits, base, runs, out_dir / "fig5_batch.csv",
                                                   models, seeds, batches)
        tables["Training fraction sweep"] = X.sweep_fraction(
            dataset, base, runs, out_dir / "fig5_fraction.csv", models, seeds, fractions, split_seed)

    dirs = {k: [main[s][k]["dir"] for s in seeds] for k in models}
    for p in X.robustness_tables(dirs, splits.test, out_dir, prefix="fig6_"):
        tables[f"Robustness: {p.stem.split('_', 2)[-1]}"] = p

    if all(k in models for k in SUB_KINDS):
        by_seed = {s: {k: main[s][k]["dir"] for k in SUB_KINDS + (("jmwr",) if "jmwr" in models else ())}
                   for s in seeds}
        tables["Ensemble comparison"] = X.ensemble_study(by_seed, splits, out_dir / "fig7_ensemble.csv",
                                                         out_dir)

    settings = {"models": ",".join(models), "seeds": ",".join(map(str, seeds)),
                "n_cases": len(dataset), "max_epochs": base.max_epochs,
                "batch_size": base.batch_size, "split_seed": split_seed,
                "data": str(data_path) if data_path else "data/synthetic.csv"}
    return write_summary(out_dir, tables, settings)
