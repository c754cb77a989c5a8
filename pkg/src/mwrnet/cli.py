"""Command-line entry point: ``mwrnet <command> [options]``.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numeric failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import augment as A
from . import experiments as X
from .checkpoint import CheckpointError, load_checkpoint, load_norm
from .data import DataError, GeneratorConfig, generate_synthetic, parse_csv, write_csv
from .engine import NumericError
from .losses import CONTRASTIVE_KINDS
from .models import KINDS, SUB_KINDS, ConfigurationError
from .training import TrainConfig

log = logging.getLogger("mwrnet")

EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 2, 3, 4

DEFAULTS = {
    "seed": 1, "out_dir": None, "n": None, "positive_fraction": GeneratorConfig.positive_fraction,
    "sigma_sym": GeneratorConfig.sigma_sym, "sigma_meas": GeneratorConfig.sigma_meas,
    "amplitude_min": GeneratorConfig.amplitude_min, "amplitude_max": GeneratorConfig.amplitude_max,
    "data": None, "data_seed": 1, "split_seed": 1, "model": "base", "lr": None, "head_lr": 1e-4,
    "batch_size": 4, "max_epochs": 150, "early_stop": 15, "contrastive": "none",
    "contrastive_weight": 0.1, "margin": 1.0, "fraction": 1.0, "gate_mode": "soft",
    "lmwr": None, "rmwr": None, "gmwr": None, "checkpoint": None, "split": "test",
    "models": ",".join(KINDS), "seeds": "1,2,3", "batches": "1,2,4,8,16,32,64,128",
    "fractions": "0.25,0.5,0.75,1.0", "skip_sweeps": False, "skip_contrastive": False,
    "out": None, "verbose": False,
}


class UsageError(Exception):
    pass


def _add_common(p):
    p.add_argument("--config", help="JSON file of option values (flags take precedence)")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out-dir", default=None)
    p.add_argument("-v", "--verbose", action="store_true", default=None)


def _add_data(p):
    p.add_argument("--data", default=None, help="dataset CSV; synthetic data is generated when omitted")
    p.add_argument("--n", type=int, default=None, help="synthetic cases when --data is omitted")
    p.add_argument("--data-seed", type=int, default=None)
    p.add_argument("--split-seed", type=int, default=None)


def _add_train(p):
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--head-lr", type=float, default=None)
    p.add_argument("--batch-size", type=int, default=None)
    p.add_argument("--max-epochs", type=int, default=None)
    p.add_argument("--early-stop", type=int, default=None)
    p.add_argument("--contrastive", choices=CONTRASTIVE_KINDS, default=None)
    p.add_argument("--contrastive-weight", type=float, default=None)
    p.add_argument("--margin", type=float, default=None)
    p.add_argument("--gate-mode", choices=("soft", "hard"), default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mwrnet", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="write a synthetic MWR dataset CSV")
    _add_common(p)
    p.add_argument("--n", type=int, default=None)
    p.add_argument("--positive-fraction", type=float, default=None)
    p.add_argument("--sigma-sym", type=float, default=None)
    p.add_argument("--sigma-meas", type=float, default=None)
    p.add_argument("--amplitude-min", type=float, default=None)
    p.add_argument("--amplitude-max", type=float, default=None)
    p.add_argument("--out", default=None, help="CSV path (default <out-dir>/synthetic.csv)")

    p = sub.add_parser("train", help="train one model into a run directory")
    _add_common(p)
    _add_data(p)
    _add_train(p)
    p.add_argument("--model", choices=KINDS, default=None)
    p.add_argument("--fraction", type=float, default=None)
    for k in SUB_KINDS:
        p.add_argument(f"--{k}", default=None, help=f"{k} checkpoint (J-MWR only)")

    p = sub.add_parser("eval", help="evaluate a checkpoint on a data split")
    _add_common(p)
    _add_data(p)
    p.add_argument("--checkpoint", default=None)
    p.add_argument("--split", choices=("train", "val", "test", "all"), default=None)

    p = sub.add_parser("sweep", help="batch-size, training-fraction or robustness sweep")
    _add_common(p)
    _add_data(p)
    _add_train(p)
    p.add_argument("kind", choices=("batch", "fraction", "robustness"))
    p.add_argument("--models", default=None)
    p.add_argument("--seeds", default=None)
    p.add_argument("--batches", default=None)
    p.add_argument("--fractions", default=None)

    p = sub.add_parser("ensemble", help="compare meta-classifiers and J-MWR over three sub-models")
    _add_common(p)
    _add_data(p)
    _add_train(p)
    for k in SUB_KINDS:
        p.add_argument(f"--{k}", default=None, help=f"{k} checkpoint")

    p = sub.add_parser("export-embeddings", help="dump embedding hooks and distance statistics")
    _add_common(p)
    _add_data(p)
    p.add_argument("--checkpoint", default=None)
    p.add_argument("--split", choices=("train", "val", "test", "all"), default=None)

    p = sub.add_parser("reproduce-all", help="run the full experiment suite on synthetic data")
    _add_common(p)
    _add_data(p)
    _add_train(p)
    p.add_argument("--models", default=None)
    p.add_argument("--seeds", default=None)
    p.add_argument("--batches", default=None)
    p.add_argument("--fractions", default=None)
    p.add_argument("--skip-sweeps", action="store_true", default=None)
    p.add_argument("--skip-contrastive", action="store_true", default=None)
    return parser


def merge_options(args: argparse.Namespace) -> dict:
    """defaults < config file < explicit flags."""
    opts = dict(DEFAULTS)
    if args.config:
        try:
            with open(args.config, encoding="utf-8") as fh:
                file_opts = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"--config: cannot read {args.config}: {exc}") from None
        if not isinstance(file_opts, dict):
            raise UsageError("--config: expected a JSON object")
        for k, v in file_opts.items():
            key = k.replace("-", "_")
            if key not in DEFAULTS:
                raise UsageError(f"--config: unknown option {k!r}")
            opts[key] = v
    for k, v in vars(args).items():
        if v is not None and k not in ("config", "command"):
            opts[k] = v
    opts["command"] = args.command
    return opts


def _ints(text: str, flag: str) -> list[int]:
    try:
        return [int(t) for t in str(text).split(",") if t.strip()]
    except ValueError:
        raise UsageError(f"{flag}: expected comma-separated integers, got {text!r}") from None


def _floats(text: str, flag: str) -> list[float]:
    try:
        return [float(t) for t in str(text).split(",") if t.strip()]
    except ValueError:
        raise UsageError(f"{flag}: expected comma-separated numbers, got {text!r}") from None


def _models(text: str) -> list[str]:
    kinds = [t.strip().lower() for t in str(text).split(",") if t.strip()]
    bad = [k for k in kinds if k not in KINDS]
    if bad:
        raise UsageError(f"--models: unknown kind(s) {bad}")
    return [k for k in KINDS if k in kinds]


def _out_dir(opts) -> Path:
    if not opts["out_dir"]:
        raise UsageError("--out-dir is required")
    path = Path(opts["out_dir"])
    path.mkdir(parents=True, exist_ok=True)
    return path


def _generator_config(opts, default_n: int) -> GeneratorConfig:
    n = opts["n"] if opts["n"] is not None else default_n
    cfg = GeneratorConfig(n_cases=n, positive_fraction=opts["positive_fraction"],
                          sigma_sym=opts["sigma_sym"], sigma_meas=opts["sigma_meas"],
                          amplitude_min=opts["amplitude_min"], amplitude_max=opts["amplitude_max"],
                          seed=opts.get("data_seed", 1))
    if not 0.0 <= cfg.positive_fraction <= 1.0:
        raise UsageError(f"--positive-fraction must be in [0, 1], got {cfg.positive_fraction}")
    if cfg.n_cases < 10:
        raise UsageError(f"--n must be at least 10, got {cfg.n_cases}")
    try:
        cfg.validate()
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    return cfg


def _dataset(opts, default_n: int = 2000):
    if opts["data"]:
        return parse_csv(opts["data"])
    return generate_synthetic(_generator_config(opts, default_n))


def _train_config(opts, model: str) -> TrainConfig:
    try:
        return TrainConfig(model=model, lr=opts["lr"], head_lr=opts["head_lr"],
                           batch_size=opts["batch_size"], max_epochs=opts["max_epochs"],
                           early_stop_patience=opts["early_stop"], seed=opts["seed"],
                           contrastive=opts["contrastive"],
                           contrastive_weight=opts["contrastive_weight"], margin=opts["margin"],
                           gate_mode=opts["gate_mode"])
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _select(splits: X.Splits, dataset, name: str):
    return dataset if name == "all" else getattr(splits, name)


# ---------------------------------------------------------------------------
# commands

def cmd_gen_data(opts) -> int:
    cfg = _generator_config(opts, 4932)
    cfg.seed = opts["seed"]
    if opts["out"]:
        out = Path(opts["out"])
        out.parent.mkdir(parents=True, exist_ok=True)
    else:
        out = _out_dir(opts) / "synthetic.csv"
    ds = generate_synthetic(cfg)
    write_csv(ds, out)
    X.write_json(out.with_suffix(".json"), {"generator": cfg.to_dict(), "n_cases": len(ds),
                                            "n_positive": int(ds.labels.sum())})
    print(f"wrote {len(ds)} exams ({int(ds.labels.sum())} positive) to {out}")
    return 0


def cmd_train(opts) -> int:
    run_dir = _out_dir(opts)
    model = opts["model"]
    subs = None
    if model == "jmwr":
        subs = {k: opts[k] for k in SUB_KINDS}
        missing = [k for k in SUB_KINDS if not subs[k]]
        if missing:
            raise ConfigurationError("J-MWR needs " + ", ".join(f"--{k}" for k in missing))
    dataset = _dataset(opts)
    splits = X.prepare_splits(dataset, opts["split_seed"], fraction=opts["fraction"])
    cfg = _train_config(opts, model)
    extra = {"run": {k: opts[k] for k in ("data", "n", "data_seed", "split_seed", "fraction")}}
    metrics = X.train_run(model, splits, cfg, run_dir, subs, extra)
    print(json.dumps({k: metrics[k] for k in ("model", "seed", "mcc", "accuracy", "roc_auc")}))
    return 0


def cmd_eval(opts) -> int:
    if not opts["checkpoint"]:
        raise UsageError("--checkpoint is required")
    dataset = _dataset(opts)
    splits = X.prepare_splits(dataset, opts["split_seed"])
    part = _select(splits, dataset, opts["split"])
    metrics = X.evaluate_checkpoint(opts["checkpoint"], part)
    metrics["split"] = opts["split"]
    if opts["out_dir"]:
        X.write_json(_out_dir(opts) / "metrics.json", metrics)
    print(json.dumps({k: metrics[k] for k in ("model", "mcc", "accuracy", "roc_auc")}))
    return 0


def cmd_sweep(opts) -> int:
    out = _out_dir(opts)
    dataset = _dataset(opts)
    models = _models(opts["models"])
    seeds = _ints(opts["seeds"], "--seeds")
    base = _train_config(opts, "base")
    kind = opts["kind"]
    if kind == "batch":
        splits = X.prepare_splits(dataset, opts["split_seed"])
        path = X.sweep_batch(splits, base, out / "runs", out / "sweep_batch.csv", models, seeds,
                             _ints(opts["batches"], "--batches"))
    elif kind == "fraction":
        fractions = _floats(opts["fractions"], "--fractions")
        if any(not 0 < f <= 1 for f in fractions):
            raise UsageError("--fractions must lie in (0, 1]")
        path = X.sweep_fraction(dataset, base, out / "runs", out / "sweep_fraction.csv", models,
                                seeds, fractions, opts["split_seed"])
    else:
        splits = X.prepare_splits(dataset, opts["split_seed"])
        dirs = {k: [] for k in models}
        for seed in seeds:
            res = X.train_model_set(splits, base, out / "runs", seed, models)
            for k in models:
                dirs[k].append(res[k]["dir"])
        paths = X.robustness_tables(dirs, splits.test, out)
        path = ", ".join(str(p) for p in paths)
    print(f"wrote {path}")
    return 0


def cmd_ensemble(opts) -> int:
    out = _out_dir(opts)
    missing = [k for k in SUB_KINDS if not opts[k]]
    if missing:
        raise ConfigurationError("ensemble needs " + ", ".join(f"--{k}" for k in missing))
    for k in SUB_KINDS:
        if not Path(opts[k]).exists():
            raise ConfigurationError(f"--{k}: checkpoint {opts[k]} not found")
    dataset = _dataset(opts)
    splits = X.prepare_splits(dataset, opts["split_seed"])
    cfg = _train_config(opts, "jmwr")
    subs = {k: Path(opts[k]) for k in SUB_KINDS}
    X.train_run("jmwr", splits, cfg, out / "jmwr", subs)
    runs = {opts["seed"]: {**{k: subs[k].parent for k in SUB_KINDS}, "jmwr": out / "jmwr"}}
    path = X.ensemble_study(runs, splits, out / "ensemble.csv", out)
    print(f"wrote {path}")
    return 0


def cmd_export_embeddings(opts) -> int:
    if not opts["checkpoint"]:
        raise UsageError("--checkpoint is required")
    out = _out_dir(opts)
    dataset = _dataset(opts)
    splits = X.prepare_splits(dataset, opts["split_seed"])
    stats = X.export_embeddings(opts["checkpoint"], _select(splits, dataset, opts["split"]), out)
    print(json.dumps(stats))
    return 0


def cmd_reproduce_all(opts) -> int:
    from .reproduce import reproduce_all
    seeds = _ints(opts["seeds"], "--seeds")
    if len(seeds) < 2:
        raise UsageError("--seeds needs at least two seeds to aggregate over")
    out = _out_dir(opts)
    reproduce_all(
        out,
        gen=_generator_config(opts, 2000) if not opts["data"] else None,
        data_path=opts["data"],
        base_config=_train_config(opts, "base"),
        models=_models(opts["models"]),
        seeds=seeds,
        batches=_ints(opts["batches"], "--batches"),
        fractions=_floats(opts["fractions"], "--fractions"),
        split_seed=opts["split_seed"],
        sweeps=not opts["skip_sweeps"],
        contrastive=not opts["skip_contrastive"],
    )
    print(f"report written to {out}")
    return 0


COMMANDS = {
    "gen-data": cmd_gen_data, "train": cmd_train, "eval": cmd_eval, "sweep": cmd_sweep,
    "ensemble": cmd_ensemble, "export-embeddings": cmd_export_embeddings,
    "reproduce-all": cmd_reproduce_all,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        opts = merge_options(args)
        logging.basicConfig(level=logging.INFO if opts["verbose"] else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        return COMMANDS[args.command](opts)
    except (UsageError, ConfigurationError, CheckpointError) as exc:
        print(f"mwrnet {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"mwrnet {args.command}: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericError as exc:
        print(f"mwrnet {args.command}: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"mwrnet {args.command}: I/O error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
