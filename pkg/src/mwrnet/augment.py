"""Test-time perturbations used for robustness sweeps.

``noise`` acts on normalized features; ``dropout``, ``shift`` and
``rotation`` act on raw temperatures in degC before normalization.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .engine import make_rng
from . import layout as L
from .data import NormStats

AUG_KINDS = ("noise", "dropout", "shift", "rotation")

# site s -> (skin column, internal column); 0-9 left, 10-19 right, 20 T1, 21 T2
SITE_COLUMNS = np.array(
    [(L.L_SKIN + p, L.L_INT + p) for p in range(10)]
    + [(L.R_SKIN + p, L.R_INT + p) for p in range(10)]
    + [(L.T1_SKIN, L.T1_INT), (L.T2_SKIN, L.T2_INT)]
)

# plot-ready grids, one per kind
DEFAULT_GRIDS = {
    "noise": [round(0.05 * i, 2) for i in range(11)],
    "dropout": [round(0.1 * i, 1) for i in range(6)],
    "shift": [-2.0, -1.5, -1.0, -0.5, 0.0, 0.5, 1.0, 1.5, 2.0],
    "rotation": list(range(1, 9)),
}


@dataclass(frozen=True)
class AugmentationSpec:
    kind: str
    magnitude: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.kind not in AUG_KINDS:
            raise ValueError(f"unknown augmentation {self.kind!r}; choose from {AUG_KINDS}")
        m = self.magnitude
        if self.kind == "noise" and m < 0:
            raise ValueError(f"noise sigma must be >= 0, got {m}")
        if self.kind == "dropout" and not 0.0 <= m <= 1.0:
            raise ValueError(f"dropout rate must be in [0, 1], got {m}")
        if self.kind == "rotation" and (m != int(m) or not 1 <= m <= 8):
            raise ValueError(f"rotation k must be an integer in 1..8, got {m}")

    @property
    def is_identity(self) -> bool:
        if self.kind == "rotation":
            return int(self.magnitude) % 8 == 0
        return self.magnitude == 0


def point_dropout(temps, rate: float, rng: np.random.Generator) -> np.ndarray:
    """Replace randomly selected sites by the mean of the remaining sites, per mode."""
    temps = np.atleast_2d(np.asarray(temps, dtype=np.float64))
    out = temps.copy()
    if rate == 0:
        return out
    selected = rng.random((len(temps), len(SITE_COLUMNS))) < rate
    for mode in (0, 1):
        cols = SITE_COLUMNS[:, mode]
        vals = temps[:, cols]
        kept = ~selected
        n_kept = kept.sum(axis=1)
        fill = np.where(n_kept > 0,
                        (vals * kept).sum(axis=1) / np.maximum(n_kept, 1),
                        vals.mean(axis=1))
        out[:, cols] = np.where(selected, fill[:, None], vals)
    return out


def augment_raw(temps, spec: AugmentationSpec) -> np.ndarray:
    temps = np.atleast_2d(np.asarray(temps, dtype=np.float64))
    if spec.is_identity or spec.kind == "noise":
        return temps
    if spec.kind == "shift":
        return temps + spec.magnitude
    if spec.kind == "rotation":
        return L.rotate_ring(temps, int(spec.magnitude))
    return point_dropout(temps, spec.magnitude, make_rng(spec.seed, "dropout"))


def augment_normalized(x, spec: AugmentationSpec) -> np.ndarray:
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    if spec.kind != "noise" or spec.is_identity:
        return x
    return x + make_rng(spec.seed, "noise").normal(0.0, spec.magnitude, size=x.shape)


def augment(temps, spec: AugmentationSpec, stats: NormStats) -> np.ndarray:
    """Raw exams -> perturbed, normalized model inputs."""
    return augment_normalized(stats.apply(augment_raw(temps, spec)), spec)
