import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mwrnet import engine as E
from mwrnet.engine import ShapeError, Tensor
from mwrnet.losses import (CLAMP_HI, CLAMP_LO, CONTRASTIVE_KINDS, class_balanced_bce,
                           class_weights, contrastive_pair_loss, contrastive_term, npairs_loss,
                           npairs_split, triplet_hard_loss, triplet_semihard_loss)


def param(a):
    return Tensor(np.asarray(a, dtype=np.float64), requires_grad=True, op="param")


# ---------------------------------------------------------------------------
# class weights

def test_class_weights_worked_example():
    # 3 negatives, 1 positive: N / (2 n_c)
    assert class_weights(3, 1) == (4 / 6, 2.0)
    assert class_weights(5, 5) == (1.0, 1.0)


@settings(max_examples=500, deadline=None)
@given(st.integers(1, 10**6), st.integers(1, 10**6))
def test_class_weights_balance_exactly(n_neg, n_pos):
    w_neg, w_pos = class_weights(n_neg, n_pos)
    assert n_neg * w_neg == n_pos * w_pos
    total = n_neg + n_pos
    assert math.isclose(w_neg, total / (2 * n_neg), rel_tol=1e-14)
    assert math.isclose(w_pos, total / (2 * n_pos), rel_tol=1e-14)


@pytest.mark.parametrize("counts", [(0, 3), (3, 0), (-1, 2)])
def test_class_weights_reject_empty_class(counts):
    with pytest.raises(ValueError):
        class_weights(*counts)


# ---------------------------------------------------------------------------
# class-balanced BCE

def test_bce_worked_example():
    loss = class_balanced_bce(Tensor([[0.9], [0.2]]), [1, 0], (1, 1))
    assert math.isclose(loss.item(), -(math.log(0.9) + math.log(0.8)) / 2, rel_tol=1e-15)


def test_bce_weights_minority_class():
    # one positive among four: the positive term is weighted 2, negatives 2/3
    p = Tensor([[0.5], [0.5], [0.5], [0.5]])
    loss = class_balanced_bce(p, [1, 0, 0, 0], (3, 1))
    expected = (2.0 + 3 * (2 / 3)) * math.log(2) / 4
    assert math.isclose(loss.item(), expected, rel_tol=1e-15)


def test_bce_gradient_matches_finite_differences(rng):
    p = param(rng.uniform(0.05, 0.95, size=(6, 1)))
    y = np.array([1, 0, 0, 1, 0, 0])
    err = E.grad_check(lambda: class_balanced_bce(p, y, (4, 2)), [p], eps=1e-6)
    assert err < 1e-6


def test_bce_clamp_bounds_value_and_cuts_gradient():
    p = param([[0.0], [1.0], [-0.3], [1.2]])
    y = [1, 0, 1, 0]
    loss = class_balanced_bce(p, y, (1, 1))
    assert math.isclose(loss.item(), -math.log(CLAMP_LO), rel_tol=1e-9)
    E.backward(loss)
    assert np.array_equal(p.grad, np.zeros((4, 1)))
    assert math.isfinite(class_balanced_bce(Tensor([[CLAMP_HI]]), [0], (1, 1)).item())


def test_bce_shape_errors():
    with pytest.raises(ShapeError):
        class_balanced_bce(Tensor([[0.5], [0.5]]), [1, 0, 1], (1, 1))
    with pytest.raises(ValueError):
        class_balanced_bce(Tensor(np.zeros((0, 1))), [], (1, 1))


def test_bce_reports_clamp_kinks():
    with E.track_kinks() as log:
        class_balanced_bce(Tensor([[0.5], [0.9]]), [1, 0], (1, 1))
    assert len(log) == 1
    assert math.isclose(log[0][0], 0.1 - 1e-7, rel_tol=1e-9)


# ---------------------------------------------------------------------------
# batch-wise losses

LABELS = np.array([0, 1, 0, 1, 1, 0, 0, 1])


@pytest.mark.parametrize("fn", [contrastive_pair_loss, triplet_hard_loss, triplet_semihard_loss,
                                npairs_loss])
def test_batch_loss_gradients(fn, rng):
    emb = param(rng.normal(size=(8, 5)))
    err = E.grad_check(lambda: fn(emb, LABELS), [emb], eps=1e-6, floor=1e-6)
    assert err < 1e-5


def test_contrastive_worked_example():
    # same-label pair at distance 1, different-label pair at 0.5 and 1.5 (margin 1)
    emb = Tensor([[0.0], [1.0], [0.5]])
    loss = contrastive_pair_loss(emb, [0, 0, 1], margin=1.0).item()
    # pairs: (0,1) same d=1 -> 1; (0,2) diff d=.5 -> .25; (1,2) diff d=.5 -> .25
    assert math.isclose(loss, (1 + 0.25 + 0.25) / 3, rel_tol=1e-15)


def test_contrastive_needs_two_embeddings():
    with pytest.raises(ValueError):
        contrastive_pair_loss(Tensor([[1.0, 2.0]]), [0])


def test_triplet_hard_worked_example():
    # anchor 0: hardest positive at 2, hardest negative at 1.5, margin 1 -> 1.5
    emb = Tensor([[0.0], [2.0], [1.5], [-1.5]])
    labels = [0, 0, 1, 1]
    value = triplet_hard_loss(emb, labels, margin=1.0).item()
    # anchors 0..3: 0: 2-1.5+1=1.5; 1: 2-0.5+1=2.5; 2: 3-0.5+1=3.5; 3: 3-1.5+1=2.5
    assert math.isclose(value, (1.5 + 2.5 + 3.5 + 2.5) / 4, rel_tol=1e-15)


def test_triplet_semihard_prefers_negative_beyond_positive():
    # anchor 0, positive 1 at d=1; negatives at d=0.5 (hard) and d=2 (semi-hard)
    emb = Tensor([[0.0], [1.0], [0.5], [2.0]])
    labels = np.array([0, 0, 1, 1])
    hard = triplet_hard_loss(emb, labels, margin=1.0).item()
    semi = triplet_semihard_loss(emb, labels, margin=1.0).item()
    assert semi < hard


def test_single_class_batches_give_zero():
    emb = param(np.arange(8.0).reshape(4, 2))
    for kind in ("triplet_hard", "triplet_semihard", "npairs"):
        loss = contrastive_term(kind, emb, [1, 1, 1, 1])
        assert loss.item() == 0.0, kind


def test_npairs_split_pairs_within_class():
    a, p = npairs_split([0, 1, 0, 1, 0])
    assert list(zip(a, p)) == [(0, 2), (1, 3)]


def test_contrastive_term_dispatch():
    emb = Tensor(np.eye(4))
    assert contrastive_term("none", emb, [0, 1, 0, 1]) is None
    for kind in CONTRASTIVE_KINDS[1:]:
        assert np.isfinite(contrastive_term(kind, emb, [0, 1, 0, 1]).item())
    with pytest.raises(ValueError):
        contrastive_term("arcface", emb, [0, 1, 0, 1])


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10**6))
def test_batch_losses_are_translation_invariant(seed):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(6, 3))
    labels = rng.integers(0, 2, size=6)
    shift = rng.normal(size=(1, 3))
    for fn in (contrastive_pair_loss, triplet_hard_loss, triplet_semihard_loss):
        a = fn(Tensor(x), labels).item()
        b = fn(Tensor(x + shift), labels).item()
        assert math.isclose(a, b, rel_tol=1e-9, abs_tol=1e-12)
