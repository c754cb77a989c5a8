"""Classification and batch-wise metric-learning losses as fused graph ops.

Each loss computes its value with numpy and records a single node whose
backward is the hand-derived gradient; the test suite checks every one of
them against central differences.
"""
from __future__ import annotations

import numpy as np

from . import engine as E
from .engine import Tensor

CLAMP_LO = 1e-7
CLAMP_HI = 1.0 - 1e-7

CONTRASTIVE_KINDS = ("none", "contrastive", "npairs", "triplet_hard", "triplet_semihard")


_WEIGHT_ULPS = 16


def _ulp_neighbours(w: float):
    """``w`` first, then floats at growing ulp distance on either side."""
    yield w
    lo = hi = w
    for _ in range(_WEIGHT_ULPS):
        hi, lo = np.nextafter(hi, np.inf), np.nextafter(lo, 0.0)
        yield float(hi)
        yield float(lo)


def class_weights(n_neg: int, n_pos: int) -> tuple[float, float]:
    """(w_neg, w_pos) with w_c = N / (2 n_c).

    Both classes must carry the same total weight, ``n_neg * w_neg ==
    n_pos * w_pos``. Plain division only gets this to within an ulp, so the
    pair is picked among the floats a few ulps around the quotients for which
    the two products agree exactly.
    """
    if n_neg <= 0 or n_pos <= 0:
        raise ValueError(f"class counts must be positive, got ({n_neg}, {n_pos})")
    total = n_neg + n_pos
    w_neg, w_pos = total / (2.0 * n_neg), total / (2.0 * n_pos)
    for a in _ulp_neighbours(w_neg):
        for b in _ulp_neighbours(w_pos):
            if n_neg * a == n_pos * b:
                return a, b
    return w_neg, w_pos


def class_balanced_bce(preds: Tensor, labels, class_counts: tuple[int, int]) -> Tensor:
    """Mean class-weighted binary cross-entropy on predictions clamped to [1e-7, 1-1e-7].

    Outside the clamp interval the prediction receives no gradient.
    """
    labels = np.asarray(labels, dtype=np.float64).reshape(-1, 1)
    p = preds.data
    if p.size == 0:
        raise ValueError("empty batch")
    if p.shape != labels.shape:
        raise E.ShapeError(f"predictions {p.shape} vs labels {labels.shape}")
    w_neg, w_pos = class_weights(*class_counts)
    w = np.where(labels > 0.5, w_pos, w_neg)
    pc = np.clip(p, CLAMP_LO, CLAMP_HI)
    E.note_kink(np.minimum(p - CLAMP_LO, CLAMP_HI - p))
    n = p.shape[0]
    per = -(labels * np.log(pc) + (1.0 - labels) * np.log(1.0 - pc))
    value = np.array([[(w * per).sum() / n]])
    inside = (p > CLAMP_LO) & (p < CLAMP_HI)
    dp = w * (-labels / pc + (1.0 - labels) / (1.0 - pc)) * inside / n

    return E.custom_op("bce", [preds], value, lambda g: [g[0, 0] * dp])


def _pairwise(emb: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    diff = emb[:, None, :] - emb[None, :, :]
    return diff, np.sqrt((diff * diff).sum(axis=2))


def _unit(diff: np.ndarray, dist: np.ndarray) -> np.ndarray:
    # d||x||/dx with the convention 0 at x == 0
    safe = np.where(dist > 0, dist, 1.0)
    return np.where((dist > 0)[..., None], diff / safe[..., None], 0.0)


def contrastive_pair_loss(emb: Tensor, labels, margin: float = 1.0) -> Tensor:
    """Mean over unordered pairs of d^2 (same label) or max(0, margin - d)^2 (different)."""
    x = emb.data
    labels = np.asarray(labels).reshape(-1)
    n = x.shape[0]
    if n < 2:
        raise ValueError("contrastive loss needs at least two embeddings")
    diff, dist = _pairwise(x)
    same = labels[:, None] == labels[None, :]
    iu = np.triu(np.ones((n, n), dtype=bool), k=1)
    hinge = np.maximum(0.0, margin - dist)
    per = np.where(same, dist ** 2, hinge ** 2)
    n_pairs = n * (n - 1) / 2
    value = np.array([[per[iu].sum() / n_pairs]])
    # coefficient c_ij so that d(per_ij)/d(x_i) = c_ij * (x_i - x_j)
    unit = _unit(diff, dist)
    coef_same = 2.0
    coef = np.where(same, coef_same, 0.0)[..., None] * diff \
        + np.where(~same, -2.0 * hinge, 0.0)[..., None] * unit
    coef = coef * iu[..., None]
    grad = (coef.sum(axis=1) - coef.sum(axis=0)) / n_pairs

    return E.custom_op("contrastive", [emb], value, lambda g: [g[0, 0] * grad])


def _triplet_terms(x, labels, margin, semihard):
    n = x.shape[0]
    diff, dist = _pairwise(x)
    unit = _unit(diff, dist)
    same = labels[:, None] == labels[None, :]
    eye = np.eye(n, dtype=bool)
    pos_mask = same & ~eye
    neg_mask = ~same
    terms = []  # (anchor, positive, negative, hinge value)
    for a in range(n):
        negs = np.flatnonzero(neg_mask[a])
        poss = np.flatnonzero(pos_mask[a])
        if len(negs) == 0 or len(poss) == 0:
            continue
        hardest_neg = negs[np.argmin(dist[a, negs])]
        if semihard:
            for p in poss:
                farther = negs[dist[a, negs] > dist[a, p]]
                nn = farther[np.argmin(dist[a, farther])] if len(farther) else hardest_neg
                terms.append((a, p, nn, dist[a, p] - dist[a, nn] + margin))
        else:
            p = poss[np.argmax(dist[a, poss])]
            terms.append((a, p, hardest_neg, dist[a, p] - dist[a, hardest_neg] + margin))
    return terms, unit


def _triplet_loss(emb: Tensor, labels, margin: float, semihard: bool, name: str) -> Tensor:
    x = emb.data
    labels = np.asarray(labels).reshape(-1)
    terms, unit = _triplet_terms(x, labels, margin, semihard)
    grad = np.zeros_like(x)
    if not terms:
        return E.custom_op(name, [emb], np.zeros((1, 1)), lambda g: [g[0, 0] * grad])
    total = 0.0
    for a, p, nn, h in terms:
        if h > 0:
            total += h
            grad[a] += unit[a, p] - unit[a, nn]
            grad[p] -= unit[a, p]
            grad[nn] += unit[a, nn]
    k = len(terms)
    grad /= k
    return E.custom_op(name, [emb], np.array([[total / k]]), lambda g: [g[0, 0] * grad])


def triplet_hard_loss(emb: Tensor, labels, margin: float = 1.0) -> Tensor:
    """Batch-hard triplet loss: hardest positive and hardest negative per anchor."""
    return _triplet_loss(emb, labels, margin, semihard=False, name="triplet_hard")


def triplet_semihard_loss(emb: Tensor, labels, margin: float = 1.0) -> Tensor:
    """Per anchor-positive pair, the closest negative farther than the positive.

    Falls back to the closest negative when no such negative exists.
    """
    return _triplet_loss(emb, labels, margin, semihard=True, name="triplet_semihard")


def npairs_split(labels) -> tuple[np.ndarray, np.ndarray]:
    """Pair consecutive same-label samples into (anchor, positive) index arrays."""
    labels = np.asarray(labels).reshape(-1)
    anchors, positives = [], []
    for c in np.unique(labels):
        idx = np.flatnonzero(labels == c)
        for k in range(0, len(idx) - 1, 2):
            anchors.append(idx[k])
            positives.append(idx[k + 1])
    return np.array(anchors, dtype=int), np.array(positives, dtype=int)


def npairs_loss(emb: Tensor, labels) -> Tensor:
    """Softmax cross-entropy of anchor/positive inner products across all pairs.

    Targets are the same-label indicator, row normalized. Batches yielding
    fewer than two pairs, or pairs of a single class, give zero.
    """
    x = emb.data
    labels = np.asarray(labels).reshape(-1)
    ai, pi = npairs_split(labels)
    grad = np.zeros_like(x)
    if len(ai) < 2 or len(np.unique(labels[ai])) < 2:
        return E.custom_op("npairs", [emb], np.zeros((1, 1)), lambda g: [g[0, 0] * grad])
    a, p = x[ai], x[pi]
    logits = a @ p.T
    pair_labels = labels[ai]
    target = (pair_labels[:, None] == pair_labels[None, :]).astype(np.float64)
    target /= target.sum(axis=1, keepdims=True)
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_sm = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    k = len(ai)
    value = -(target * log_sm).sum() / k
    dlogits = (np.exp(log_sm) - target) / k
    np.add.at(grad, ai, dlogits @ p)
    np.add.at(grad, pi, dlogits.T @ a)
    return E.custom_op("npairs", [emb], np.array([[value]]), lambda g: [g[0, 0] * grad])


def contrastive_term(kind: str, emb: Tensor, labels, margin: float = 1.0) -> Tensor | None:
    if kind == "none":
        return None
    if kind == "contrastive":
        return contrastive_pair_loss(emb, labels, margin)
    if kind == "npairs":
        return npairs_loss(emb, labels)
    if kind == "triplet_hard":
        return triplet_hard_loss(emb, labels, margin)
    if kind == "triplet_semihard":
        return triplet_semihard_loss(emb, labels, margin)
    raise ValueError(f"unknown contrastive loss {kind!r}; choose from {CONTRASTIVE_KINDS}")
