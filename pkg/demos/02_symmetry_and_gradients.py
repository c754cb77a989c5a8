"""Why the comparison models are built the way they are.

R-MWR and G-MWR score the gated L1 distance between two views embedded by a
shared extractor. The distance is symmetric in its two views, and an exam
whose breasts read identically scores exactly zero. The
script shows this on freshly initialized models, then checks backward
gradients against finite differences.

Run:  python demos/02_symmetry_and_gradients.py
"""
import numpy as np

from mwrnet import layout as L
from mwrnet.data import GeneratorConfig, fit_normalization, generate_synthetic
from mwrnet.engine import grad_check, make_rng
from mwrnet.models import KINDS, SUB_KINDS, build_model
from mwrnet.training import TrainConfig, batch_loss

ds = generate_synthetic(GeneratorConfig(n_cases=200, seed=3))
norm = fit_normalization(ds)
x = norm.apply(ds.temps)

models = {k: build_model(k, 1) for k in SUB_KINDS}
models["base"] = build_model("base", 1)
models["jmwr"] = build_model("jmwr", 1, {k: models[k] for k in SUB_KINDS})

print("parameters per model")
for kind in KINDS:
    print(f"  {kind:5s} {models[kind].param_count():>8,d}")

# Breast swap in normalized feature space: left and right blocks exchanged,
# T1 <-> T2 as well.
x_swap = L.breast_swap(x)
print("\nmax |score(exam) - score(swapped exam)| on 200 exams")
for kind in KINDS:
    d = np.abs(models[kind].predict(x) - models[kind].predict(x_swap)).max()
    print(f"  {kind:5s} {d:.2e}")
print("G-MWR compares an exam with its own swapped copy through |a - b|, and L-MWR")
print("treats its 18 points as an unordered set, so both are exactly invariant.")
print("Base has no notion of sides.")

# R-MWR's symmetry is in its two arguments: each breast is described by its own
# 20 points plus the shared references, and the two views can be exchanged.
left, right = L.layout_regional(x)
r = models["rmwr"]
d = np.abs(r.forward_layout(left, right)[0].data - r.forward_layout(right, left)[0].data).max()
print(f"\nR-MWR with its two breast views exchanged: max |dscore| {d:.2e}")

# An exam whose two breasts read identically carries no asymmetry at all.
sym = x[:5].copy()
sym[:, L.R_SKIN:L.R_INT + 10] = sym[:, L.L_SKIN:L.L_INT + 10]
sym[:, L.T2_SKIN:L.T2_INT + 1] = sym[:, L.T1_SKIN:L.T1_INT + 1]
print("\nscores of perfectly symmetric exams")
for kind in ("rmwr", "gmwr"):
    print(f"  {kind:5s}", models[kind].predict(sym))

# Gradient check: backward pass against a five-point finite-difference stencil,
# discarding probes whose perturbation crosses a ReLU or clamp kink.
print("\nfinite-difference check (8 coordinates per parameter)")
for kind in KINDS:
    rng = make_rng(0, "demo", kind)
    pos = rng.choice(np.flatnonzero(ds.labels == 1), 2, replace=False)
    neg = rng.choice(np.flatnonzero(ds.labels == 0), 2, replace=False)
    idx = np.concatenate([pos, neg])
    cfg = TrainConfig(model=kind)
    model = models[kind]
    stats = {}
    err = grad_check(lambda: batch_loss(model, x[idx], ds.labels[idx], ds.class_counts, cfg),
                     list(model.params().values()), eps=1e-4, order=4, floor=1e-5,
                     max_coords=8, rng=rng, skip_kinks=True, stats=stats)
    print(f"  {kind:5s} max relative error {err:.1e}  "
          f"({stats['skipped']} of {stats['probed']} probes skipped at kinks)")
