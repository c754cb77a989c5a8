import math

import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st
from hypothesis.extra.numpy import arrays
from sklearn.metrics import matthews_corrcoef, roc_auc_score

from mwrnet.metrics import (ConfusionMatrix, accuracy, aggregate_runs, confusion,
                            embedding_distance_stats, evaluate_scores, mcc, roc_auc)

counts = st.integers(0, 500)


def test_worked_examples():
    assert mcc(ConfusionMatrix(tp=9, tn=85, fp=3, fn=3)) == 756 / 1056
    assert roc_auc([0.1, 0.4, 0.35, 0.8], [0, 0, 1, 1]) == 0.75
    assert accuracy(ConfusionMatrix(tp=9, tn=85, fp=3, fn=3)) == 0.94


def test_threshold_is_inclusive():
    cm = confusion([0.5, 0.4999999], [1, 1])
    assert (cm.tp, cm.fn) == (1, 1)


def test_degenerate_mcc_is_zero():
    assert mcc(ConfusionMatrix(tp=0, tn=10, fp=0, fn=3)) == 0.0
    assert mcc(ConfusionMatrix(tp=5, tn=0, fp=5, fn=0)) == 0.0


@settings(max_examples=300, deadline=None)
@given(counts, counts, counts, counts)
def test_mcc_bounds_and_symmetry(tp, tn, fp, fn):
    m = mcc(ConfusionMatrix(tp, tn, fp, fn))
    assert -1.0 - 1e-12 <= m <= 1.0 + 1e-12
    # swapping the roles of the classes leaves MCC unchanged
    assert math.isclose(m, mcc(ConfusionMatrix(tn, tp, fn, fp)), abs_tol=1e-12)
    # inverting every prediction negates it
    assert math.isclose(m, -mcc(ConfusionMatrix(fn, fp, tn, tp)), abs_tol=1e-12)


@settings(max_examples=200, deadline=None)
@given(arrays(np.float64, st.integers(2, 80), elements=st.floats(0, 1)),
       st.integers(0, 2**31))
def test_agrees_with_sklearn(scores, seed):
    y = np.random.default_rng(seed).integers(0, 2, size=len(scores))
    y[:2] = [0, 1]
    pred = (scores >= 0.5).astype(int)
    assert math.isclose(mcc(confusion(scores, y)), matthews_corrcoef(y, pred), abs_tol=1e-12)
    assert math.isclose(roc_auc(scores, y), roc_auc_score(y, scores), abs_tol=1e-12)


@settings(max_examples=200, deadline=None)
@given(arrays(np.float64, st.integers(2, 60), elements=st.floats(-5, 5)), st.integers(0, 2**31))
def test_auc_invariant_under_monotone_maps(scores, seed):
    y = np.random.default_rng(seed).integers(0, 2, size=len(scores))
    y[:2] = [0, 1]
    a = roc_auc(scores, y)
    assert 0.0 <= a <= 1.0
    # doubling and negation are exact in floating point, so no ties are created or broken
    assert math.isclose(a, roc_auc(2.0 * scores, y), abs_tol=1e-12)
    assert math.isclose(a, 1.0 - roc_auc(-scores, y), abs_tol=1e-12)


def test_auc_perfect_and_all_tied():
    assert roc_auc([0.1, 0.2, 0.8, 0.9], [0, 0, 1, 1]) == 1.0
    assert roc_auc([0.3] * 6, [0, 1, 0, 1, 0, 1]) == 0.5


def test_input_validation():
    with pytest.raises(ValueError):
        confusion([0.1, 0.2], [1])
    with pytest.raises(ValueError):
        confusion([], [])
    with pytest.raises(ValueError):
        roc_auc([0.1, 0.2], [1, 1])


def test_evaluate_scores_bundle():
    r = evaluate_scores([0.9, 0.2, 0.6, 0.4], [1, 0, 0, 1])
    assert r["confusion"] == {"tp": 1, "tn": 1, "fp": 1, "fn": 1}
    assert r["mcc"] == 0.0 and r["accuracy"] == 0.5 and r["roc_auc"] == 0.75


def test_aggregation_uses_population_std():
    rep = aggregate_runs("rmwr", [{"mcc": 0.5, "accuracy": 0.9, "roc_auc": 0.9},
                                  {"mcc": 0.7, "accuracy": 0.9, "roc_auc": 0.9}])
    assert math.isclose(rep.mean("mcc"), 0.6)
    assert math.isclose(rep.std("mcc"), 0.1)
    assert rep.table_row()["mcc"] == "0.60 ± 0.100"
    with pytest.raises(ValueError):
        aggregate_runs("rmwr", [{"mcc": 0.5}])


def test_embedding_distance_stats():
    emb = np.array([[0.0, 0.0], [0.0, 1.0], [3.0, 0.0], [3.0, 1.0]])
    st_ = embedding_distance_stats(emb, [0, 0, 1, 1])
    assert st_.within_mean == 1.0 and st_.within_std == 0.0
    assert math.isclose(st_.between_mean, (3 + 3 + 2 * math.sqrt(10)) / 4)
    with pytest.raises(ValueError):
        embedding_distance_stats(emb[:3], [0, 0, 1])
