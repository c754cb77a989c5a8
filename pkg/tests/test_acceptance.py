"""Acceptance suite: one test per criterion, each reporting a PASS/FAIL line.

Run on its own with ``pytest tests/test_acceptance.py -v`` (the summary lines
appear at the end of the session) or ``python tests/test_acceptance.py``.
Criteria 5 and 7 train real models and take several minutes.
"""
import filecmp
import itertools
import json
import time
from pathlib import Path

import numpy as np
import pytest

from conftest import criterion
from mwrnet import augment as A
from mwrnet import cli
from mwrnet import layout as L
from mwrnet.checkpoint import load_checkpoint, load_norm, save_checkpoint
from mwrnet.data import (GeneratorConfig, fit_normalization, generate_synthetic, parse_csv,
                         write_csv)
from mwrnet.engine import grad_check, make_rng
from mwrnet.experiments import (BATCH_GRID, FRACTION_GRID, evaluate_model, prepare_splits,
                                robustness_sweep, train_model_set)
from mwrnet.losses import class_weights
from mwrnet.metrics import ConfusionMatrix, accuracy, confusion, mcc, roc_auc
from mwrnet.models import KINDS, SUB_KINDS, build_model
from mwrnet.optim import PlateauScheduler
from mwrnet.training import TrainConfig, batch_loss

# tolerances and budgets, all fixed by the acceptance criteria
GRAD_REL_TOL = 1e-4
GRAD_BUDGET_S = 120.0
SYMMETRY_TOL = 1e-9
N_SYMMETRY_EXAMS = 100
METRIC_TOL = 1e-12
N_METRIC_SETS = 200
E2E_BUDGET_S = 15 * 60.0
MCC_FLOOR = {"base": 0.5, "rmwr": 0.5, "gmwr": 0.5, "lmwr": 0.3}
JMWR_SLACK = 0.02

# five-point stencil: truncation O(FD_EPS**4) stays negligible at this step,
# while roundoff (about 1e-15 / FD_EPS, far worse when log(1 - p) cancels on
# a saturated score) stays below the tolerance
FD_EPS = 1e-4
FD_ORDER = 4
FD_COORDS = 8
# gradients below this are compared in absolute terms (|a - n| < 1e-9), since
# their relative error is set by roundoff rather than by the backward pass
FD_FLOOR = 1e-5
# probes whose perturbed evaluations change the sign of any relu/abs/gate/clamp
# argument straddle a kink and are skipped; at most this share may be
# (L-MWR runs its trunk on 18 rows per case, so its kinks are dense)
MAX_SKIPPED_SHARE = 0.5


# ---------------------------------------------------------------------------
# 1. gradient correctness

def _batch(y, rng):
    """Two positive and two negative cases."""
    pos, neg = np.flatnonzero(y == 1), np.flatnonzero(y == 0)
    return np.concatenate([rng.choice(pos, 2, replace=False), rng.choice(neg, 2, replace=False)])


def test_criterion_1_gradient_check():
    with criterion(1, "full-model finite-difference gradients, all 5 architectures"):
        ds = generate_synthetic(GeneratorConfig(n_cases=200, seed=3))
        x = fit_normalization(ds).apply(ds.temps)
        counts = ds.class_counts
        t0 = time.perf_counter()
        errors, skipped = {}, {}
        for kind in KINDS:
            subs = {k: build_model(k, 1) for k in SUB_KINDS} if kind == "jmwr" else None
            model = build_model(kind, 1, subs)
            rng = make_rng(0, "acceptance-gc", kind)
            cfg = TrainConfig(model=kind)
            idx = _batch(ds.labels, rng)
            xb, yb = x[idx], ds.labels[idx]
            stats = {}
            errors[kind] = grad_check(lambda: batch_loss(model, xb, yb, counts, cfg),
                                      list(model.params().values()), eps=FD_EPS,
                                      max_coords=FD_COORDS, rng=rng, floor=FD_FLOOR,
                                      skip_kinks=True, stats=stats, order=FD_ORDER)
            skipped[kind] = stats["skipped"] / stats["probed"]
        elapsed = time.perf_counter() - t0
        print("max relative error:", {k: f"{v:.2e}" for k, v in errors.items()},
              f"({elapsed:.1f}s)")
        print("share of probes skipped at kinks:", {k: f"{v:.3f}" for k, v in skipped.items()})
        bad = {k: v for k, v in errors.items() if not v < GRAD_REL_TOL}
        assert not bad, f"relative error above {GRAD_REL_TOL}: {bad}"
        assert max(skipped.values()) <= MAX_SKIPPED_SHARE, skipped
        assert elapsed < GRAD_BUDGET_S, f"gradient checks took {elapsed:.0f}s"


# ---------------------------------------------------------------------------
# 2. exact symmetries

def test_criterion_2_symmetry_suite():
    with criterion(2, "G-MWR swap, R-MWR argument swap, L-MWR permutation invariance"):
        ds = generate_synthetic(GeneratorConfig(n_cases=N_SYMMETRY_EXAMS, positive_fraction=0.5,
                                                seed=11))
        x = fit_normalization(ds).apply(ds.temps)
        rng = make_rng(0, "acceptance-sym")

        g = build_model("gmwr", 2)
        d_g = np.abs(g.predict(x) - g.predict(L.breast_swap(x))).max()

        r = build_model("rmwr", 2)
        left, right = L.layout_regional(x)
        s_lr = r.forward_layout(left, right)[0].data
        s_rl = r.forward_layout(right, left)[0].data
        d_r = np.abs(s_lr - s_rl).max()

        lm = build_model("lmwr", 2)
        pts = L.layout_local(x)
        base = lm.forward_layout(pts)[0].data.ravel()
        d_l = 0.0
        for i in range(len(pts)):
            perm = rng.permutation(L.N_LOCAL)
            shuffled = lm.forward_layout(pts[i, perm])[0].data[0, 0]
            d_l = max(d_l, abs(shuffled - base[i]))

        print(f"max |dscore|: gmwr {d_g:.2e}, rmwr {d_r:.2e}, lmwr {d_l:.2e}")
        assert d_g < SYMMETRY_TOL and d_r < SYMMETRY_TOL and d_l < SYMMETRY_TOL


# ---------------------------------------------------------------------------
# 3. metric oracles

def _brute_mcc(pred, y):
    tp = sum(1 for p, t in zip(pred, y) if p and t)
    tn = sum(1 for p, t in zip(pred, y) if not p and not t)
    fp = sum(1 for p, t in zip(pred, y) if p and not t)
    fn = sum(1 for p, t in zip(pred, y) if not p and t)
    d = (tp + fp) * (tp + fn) * (tn + fp) * (tn + fn)
    return 0.0 if d == 0 else (tp * tn - fp * fn) / d ** 0.5, (tp + tn) / len(y)


def _brute_auc(scores, y):
    pos = [s for s, t in zip(scores, y) if t == 1]
    neg = [s for s, t in zip(scores, y) if t == 0]
    wins = sum(1.0 if p > n else 0.5 if p == n else 0.0 for p, n in itertools.product(pos, neg))
    return wins / (len(pos) * len(neg))


def test_criterion_3_metric_oracles():
    with criterion(3, "mcc/accuracy/roc_auc equal brute force; worked examples exact"):
        rng = np.random.default_rng(3)
        worst = 0.0
        for _ in range(N_METRIC_SETS):
            n = int(rng.integers(4, 60))
            y = rng.integers(0, 2, size=n)
            y[:2] = [0, 1]
            # coarse scores produce ties, which the brute force counts as 1/2
            scores = np.round(rng.random(n), int(rng.integers(1, 4)))
            cm = confusion(scores, y)
            m_ref, a_ref = _brute_mcc(scores >= 0.5, y)
            worst = max(worst, abs(mcc(cm) - m_ref), abs(accuracy(cm) - a_ref),
                        abs(roc_auc(scores, y) - _brute_auc(scores, y)))
        print(f"worst deviation from brute force: {worst:.1e}")
        assert worst <= METRIC_TOL
        assert mcc(ConfusionMatrix(tp=9, tn=85, fp=3, fn=3)) == 756 / 1056
        assert roc_auc([0.1, 0.4, 0.35, 0.8], [0, 0, 1, 1]) == 0.75


# ---------------------------------------------------------------------------
# 4. protocol fidelity

def test_criterion_4_protocol(tmp_path):
    with criterion(4, "plateau trace, balanced class weights, persisted default hyperparameters"):
        sched = PlateauScheduler(lr=1e-4)
        trace = [sched.update(v) for v in [1.0, 0.9, 0.9, 0.95, 0.9, 0.91, 0.9, 0.8]]
        # five non-improving epochs after the 0.9 best, then exactly one cut
        assert trace[:6] == [1e-4] * 6
        assert trace[6] == 1e-4 * 0.1 and trace[7] == 1e-4 * 0.1

        # the clinical cohort, the default synthetic splits and some awkward ratios
        protocol_counts = [(4384, 548), (1778, 222), (1, 1), (7, 3), (999, 1), (31, 981)]
        splits = prepare_splits(generate_synthetic(GeneratorConfig()))
        protocol_counts += [part.class_counts for part in (splits.train, splits.val, splits.test)]
        for n_neg, n_pos in protocol_counts:
            w_neg, w_pos = class_weights(n_neg, n_pos)
            assert n_neg * w_neg == n_pos * w_pos, (n_neg, n_pos)

        data = tmp_path / "d.csv"
        assert cli.main(["gen-data", "--n", "80", "--seed", "2", "--out", str(data)]) == 0
        runs = {}
        for kind in ("lmwr", "rmwr", "gmwr"):
            runs[kind] = tmp_path / kind
            assert cli.main(["train", "--model", kind, "--data", str(data), "--max-epochs", "1",
                             "--out-dir", str(runs[kind])]) == 0
        subs = [f"--{k}={runs[k] / 'checkpoint.json'}" for k in SUB_KINDS]
        assert cli.main(["train", "--model", "jmwr", "--data", str(data), "--max-epochs", "1",
                         "--out-dir", str(tmp_path / "jmwr"), *subs]) == 0

        sub_cfg = json.loads((runs["rmwr"] / "config.json").read_text())["train"]
        assert sub_cfg["lr"] == 1e-4
        assert (sub_cfg["beta1"], sub_cfg["beta2"]) == (0.9, 0.999)
        assert sub_cfg["batch_size"] == 4
        assert sub_cfg["contrastive_weight"] == 0.1
        joint_cfg = json.loads((tmp_path / "jmwr" / "config.json").read_text())["train"]
        assert joint_cfg["lr"] == 1e-7


# ---------------------------------------------------------------------------
# 5. synthetic end-to-end sanity

def test_criterion_5_end_to_end(tmp_path):
    with criterion(5, "default synthetic data: MCC floors and J-MWR vs sub-models in budget"):
        t0 = time.perf_counter()
        splits = prepare_splits(generate_synthetic(GeneratorConfig()))
        res = train_model_set(splits, TrainConfig(), tmp_path, seed=1)
        elapsed = time.perf_counter() - t0
        scores = {k: res[k]["metrics"]["mcc"] for k in KINDS}
        print("test MCC:", {k: round(v, 4) for k, v in scores.items()}, f"({elapsed:.0f}s)")
        low = {k: v for k, v in scores.items() if k in MCC_FLOOR and not v >= MCC_FLOOR[k]}
        assert not low, f"below floor: {low}"
        best_sub = max(scores[k] for k in SUB_KINDS)
        assert scores["jmwr"] >= best_sub - JMWR_SLACK, \
            f"J-MWR {scores['jmwr']:.4f} < best sub-model {best_sub:.4f} - {JMWR_SLACK}"
        assert elapsed < E2E_BUDGET_S, f"took {elapsed:.0f}s"


# ---------------------------------------------------------------------------
# 6 and 7 share one scaled-down reproduce-all tree

REPRO_ARGS = ["--n", "120", "--max-epochs", "1", "--seeds", "1,2"]


@pytest.fixture(scope="module")
def repro_trees(tmp_path_factory):
    trees = []
    for name in ("first", "second"):
        out = tmp_path_factory.mktemp(name)
        assert cli.main(["reproduce-all", "--out-dir", str(out), *REPRO_ARGS]) == 0
        trees.append(out)
    return trees


def _csv_column(path, column):
    import csv
    with open(path, newline="") as fh:
        return [row[column] for row in csv.DictReader(fh)]


def test_criterion_6_augmentation_identities(repro_trees):
    with criterion(6, "identity perturbations keep clean MCC bitwise; sweep CSVs hold full grids"):
        root = repro_trees[0]
        splits = prepare_splits(parse_csv(root / "data" / "synthetic.csv"))
        for kind in KINDS:
            model, doc = load_checkpoint(root / "runs" / f"{kind}-none-s1" / "checkpoint.json")
            norm = load_norm(doc)
            clean = evaluate_model(model, norm.apply(splits.test.temps), splits.test.labels)["mcc"]
            for aug, zero in (("noise", 0.0), ("dropout", 0.0), ("shift", 0.0), ("rotation", 8)):
                got = robustness_sweep(model, splits.test, norm, aug, [zero], seed=4)[0][1]
                assert got == clean, f"{kind} {aug}={zero}: {got!r} != {clean!r}"

        batches = {int(b) for b in _csv_column(root / "fig5_batch.csv", "batch_size")}
        assert batches == set(BATCH_GRID) == {1, 2, 4, 8, 16, 32, 64, 128}
        fractions = {float(f) for f in _csv_column(root / "fig5_fraction.csv", "fraction")}
        assert fractions == set(FRACTION_GRID) == {0.25, 0.5, 0.75, 1.0}
        for aug in A.AUG_KINDS:
            mags = [float(m) for m in _csv_column(root / f"fig6_robustness_{aug}.csv", "magnitude")]
            assert sorted(set(mags)) == sorted(float(m) for m in A.DEFAULT_GRIDS[aug])


def test_criterion_7_determinism(repro_trees):
    with criterion(7, "reproduce-all twice gives bitwise-identical CSV outputs"):
        a, b = repro_trees
        names = sorted(p.relative_to(a) for p in a.rglob("*.csv"))
        assert names == sorted(p.relative_to(b) for p in b.rglob("*.csv"))
        # history.csv carries wall-clock seconds per epoch; compare all other columns
        differ = []
        for rel in names:
            if rel.name == "history.csv":
                same = _history_rows(a / rel) == _history_rows(b / rel)
            else:
                same = filecmp.cmp(a / rel, b / rel, shallow=False)
            if not same:
                differ.append(str(rel))
        print(f"{len(names)} CSV files compared")
        assert not differ, f"differing outputs: {differ[:5]}"
        assert (a / "summary.md").read_bytes() == (b / "summary.md").read_bytes()


def _history_rows(path):
    import csv
    with open(path, newline="") as fh:
        return [{k: v for k, v in row.items() if k != "seconds"} for row in csv.DictReader(fh)]


# ---------------------------------------------------------------------------
# 8. round-trips

def test_criterion_8_round_trips(tmp_path):
    with criterion(8, "checkpoint and CSV round-trips are bitwise"):
        ds = generate_synthetic(GeneratorConfig(n_cases=60, seed=9))
        write_csv(ds, tmp_path / "d.csv")
        back = parse_csv(tmp_path / "d.csv")
        assert back.ids == ds.ids
        assert np.array_equal(back.labels, ds.labels)
        assert back.temps.tobytes() == ds.temps.tobytes()

        norm = fit_normalization(ds)
        x = norm.apply(ds.temps)
        subs = {k: build_model(k, 4) for k in SUB_KINDS}
        models = {k: build_model(k, 4) for k in KINDS if k != "jmwr"}
        models["jmwr"] = build_model("jmwr", 4, subs)
        for kind, model in models.items():
            path = save_checkpoint(model, tmp_path / f"{kind}.json", seed=4, norm=norm)
            loaded, doc = load_checkpoint(path)
            assert loaded.predict(x).tobytes() == model.predict(x).tobytes(), kind
            assert loaded.embed(x).tobytes() == model.embed(x).tobytes(), kind
            assert load_norm(doc).apply(ds.temps).tobytes() == x.tobytes()


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-v"]))
