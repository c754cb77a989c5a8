"""Train all five models on one synthetic cohort and compare them on the test split.

The three comparison sub-models (L-MWR, R-MWR, G-MWR) are trained first.
J-MWR then loads their checkpoints, adds a small weighted head and fine-tunes
the whole stack. Runs land in ``--out-dir`` and completed runs are reused, so
a second invocation only prints the table (demo 04 reuses them too).

Defaults are scaled down to finish in a few minutes on one core; pass
``--n 2000 --max-epochs 150`` for the full-size setting.

Run:  python demos/03_train_and_compare.py [--out-dir demo_runs]
"""
import argparse
import csv
import time
from pathlib import Path

from mwrnet.data import GeneratorConfig, generate_synthetic
from mwrnet.experiments import prepare_splits, train_model_set
from mwrnet.models import KINDS
from mwrnet.training import TrainConfig

parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
parser.add_argument("--n", type=int, default=800)
parser.add_argument("--max-epochs", type=int, default=15)
parser.add_argument("--seed", type=int, default=1)
parser.add_argument("--out-dir", default="demo_runs")
args = parser.parse_args()

dataset = generate_synthetic(GeneratorConfig(n_cases=args.n, seed=1))
splits = prepare_splits(dataset)
print("train/val/test (negatives, positives):",
      splits.train.class_counts, splits.val.class_counts, splits.test.class_counts)

t0 = time.perf_counter()
results = train_model_set(splits, TrainConfig(max_epochs=args.max_epochs),
                          Path(args.out_dir), seed=args.seed)
print(f"trained (or reused) {len(results)} runs in {time.perf_counter() - t0:.0f}s\n")

print(f"{'model':6s} {'MCC':>7s} {'acc':>7s} {'AUC':>7s} {'best epoch':>11s}")
for kind in KINDS:
    m = results[kind]["metrics"]
    print(f"{kind:6s} {m['mcc']:7.3f} {m['accuracy']:7.3f} {m['roc_auc']:7.3f} "
          f"{m['best_epoch']:>11d}")

# The training history shows early stopping at work: the checkpoint keeps the
# epoch with the lowest class-balanced validation loss.
with open(results["rmwr"]["dir"] / "history.csv") as fh:
    rows = list(csv.DictReader(fh))
print("\nR-MWR history (val loss per epoch):")
print("  " + " ".join(f"{float(r['val_loss']):.3f}" for r in rows))
