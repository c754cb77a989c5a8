"""Feature indexing for the 44-reading exam vector.

Column order everywhere (CSV, normalization, base model input)::

    l_skin_0..9, l_int_0..9, r_skin_0..9, r_int_0..9, t1_skin, t1_int, t2_skin, t2_int

Point 0 is the nipple, 1-8 the ring around it, 9 the axillary site.
"""
from __future__ import annotations

import numpy as np

N_POINTS = 10
N_FEATURES = 44
RING = tuple(range(1, 9))

L_SKIN, L_INT, R_SKIN, R_INT = 0, 10, 20, 30
T1_SKIN, T1_INT, T2_SKIN, T2_INT = 40, 41, 42, 43

FEATURE_NAMES: tuple[str, ...] = tuple(
    [f"l_skin_{i}" for i in range(N_POINTS)]
    + [f"l_int_{i}" for i in range(N_POINTS)]
    + [f"r_skin_{i}" for i in range(N_POINTS)]
    + [f"r_int_{i}" for i in range(N_POINTS)]
    + ["t1_skin", "t1_int", "t2_skin", "t2_int"]
)

# (skin, internal) column for left points 0-8 then right points 0-8
LOCAL_INDEX = np.array(
    [(L_SKIN + p, L_INT + p) for p in range(9)] + [(R_SKIN + p, R_INT + p) for p in range(9)]
)
N_LOCAL = len(LOCAL_INDEX)

_REFS = [T1_SKIN, T1_INT, T2_SKIN, T2_INT]
REGIONAL_LEFT = np.array(list(range(L_SKIN, L_SKIN + 10)) + list(range(L_INT, L_INT + 10)) + _REFS)
REGIONAL_RIGHT = np.array(list(range(R_SKIN, R_SKIN + 10)) + list(range(R_INT, R_INT + 10)) + _REFS)

# left/right breast blocks exchanged, T1 <-> T2
SWAP_INDEX = np.array(
    list(range(R_SKIN, R_INT + 10)) + list(range(L_SKIN, L_INT + 10))
    + [T2_SKIN, T2_INT, T1_SKIN, T1_INT]
)

# i < j lexicographic over the 18 local inputs
PAIRS = np.array([(i, j) for i in range(N_LOCAL) for j in range(i + 1, N_LOCAL)])


def pair_difference_matrix(n: int = N_LOCAL) -> np.ndarray:
    """``F @ D`` gives ``F[:, i] - F[:, j]`` for every pair i<j, in lexicographic order."""
    pairs = [(i, j) for i in range(n) for j in range(i + 1, n)]
    d = np.zeros((n, len(pairs)))
    for k, (i, j) in enumerate(pairs):
        d[i, k] = 1.0
        d[j, k] = -1.0
    return d


def _rows(x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != N_FEATURES:
        raise ValueError(f"expected {N_FEATURES} features, got shape {x.shape}")
    return x


def layout_base(x) -> np.ndarray:
    return _rows(x).copy()


def layout_local(x) -> np.ndarray:
    """(..., 18, 2) skin/internal pairs for left points 0-8 then right points 0-8."""
    return _rows(x)[..., LOCAL_INDEX]


def layout_regional(x) -> tuple[np.ndarray, np.ndarray]:
    """Per-side 24-vectors: points 0-9 skin, points 0-9 internal, then T1/T2 references."""
    x = _rows(x)
    return x[..., REGIONAL_LEFT], x[..., REGIONAL_RIGHT]


def breast_swap(x) -> np.ndarray:
    return _rows(x)[..., SWAP_INDEX]


def layout_global(x) -> tuple[np.ndarray, np.ndarray]:
    x = _rows(x)
    return x.copy(), x[..., SWAP_INDEX]


def rotate_ring(x, k: int) -> np.ndarray:
    """Cyclically move ring points 1-8 by ``k`` positions on both breasts and both modes."""
    orig = _rows(x)
    out = orig.copy()
    src = np.array(RING)
    dst = 1 + (src - 1 + k) % 8
    for base in (L_SKIN, L_INT, R_SKIN, R_INT):
        out[..., base + dst] = orig[..., base + src]
    return out
