"""A tour of the synthetic exam generator.

Each exam holds 44 temperatures: ten skin and ten internal points per breast
plus two reference points (T1, T2) at skin and depth. Healthy breasts are
near mirror images of each other; a tumour adds a local hotspot on one side.

Run:  python demos/01_synthetic_cohort.py [--n 600] [--out cohort.csv]
"""
import argparse

import numpy as np

from mwrnet import layout as L
from mwrnet.data import GeneratorConfig, generate_synthetic, stratified_split, write_csv

parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
parser.add_argument("--n", type=int, default=600)
parser.add_argument("--seed", type=int, default=1)
parser.add_argument("--out", default=None, help="optionally write the cohort as CSV")
args = parser.parse_args()

cfg = GeneratorConfig(n_cases=args.n, seed=args.seed)
ds, spots, amps = generate_synthetic(cfg, with_hotspots=True)
n_neg, n_pos = ds.class_counts
print(f"{len(ds)} exams, {n_pos} positive ({n_pos / len(ds):.1%})")
print("columns:", ", ".join(L.FEATURE_NAMES[:3]), "...", ", ".join(L.FEATURE_NAMES[-4:]))

# Left-minus-right internal differences carry the signal. For healthy exams
# they are small symmetric noise, for positive exams one point stands out.
diff = ds.temps[:, L.L_INT:L.L_INT + 10] - ds.temps[:, L.R_INT:L.R_INT + 10]
peak = np.abs(diff).max(axis=1)
print("\nlargest |left - right| internal difference (degC)")
print(f"  healthy : median {np.median(peak[ds.labels == 0]):.2f}")
print(f"  tumour  : median {np.median(peak[ds.labels == 1]):.2f}")

# The generator also reports where each hotspot sits and how strong it is.
pos = np.flatnonzero(ds.labels)
i = pos[0]
side = "left" if spots[i, 0] == 0 else "right"
print(f"\nexam {ds.ids[i]}: hotspot on the {side} breast at point {spots[i, 1]}, "
      f"amplitude {amps[i]:.2f} degC")
print("  internal, tumour side :", np.round(ds[i].side(side, "internal"), 2))
other = "right" if side == "left" else "left"
print("  internal, other side  :", np.round(ds[i].side(other, "internal"), 2))

# Swapping the breasts maps a valid exam onto another valid exam. Models that
# compare the two sides should not care which side is called "left".
swapped = L.breast_swap(ds.temps[:1])
print("\nbreast swap moves l_int_0 ->", L.FEATURE_NAMES[int(np.flatnonzero(L.SWAP_INDEX == L.L_INT)[0])])
assert np.array_equal(L.breast_swap(swapped), ds.temps[:1])

train, val, test = stratified_split(ds, seed=1)
print("\nstratified 60/20/20 split (negatives, positives):")
for name, part in (("train", train), ("val", val), ("test", test)):
    print(f"  {name:5s} {part.class_counts}")

if args.out:
    write_csv(ds, args.out)
    print(f"\nwrote {args.out}")
