import math

import numpy as np
import pytest

from mwrnet import engine as E
from mwrnet.data import GeneratorConfig, generate_synthetic
from mwrnet.experiments import prepare_splits
from mwrnet.losses import class_balanced_bce
from mwrnet.models import SUB_KINDS, build_model
from mwrnet.training import (TrainConfig, TrainingAborted, _param_groups, batch_loss, bce_value,
                             train)


@pytest.fixture(scope="module")
def splits():
    return prepare_splits(generate_synthetic(GeneratorConfig(n_cases=100, positive_fraction=0.3,
                                                             seed=2)))


def _fit(kind, splits, **kw):
    cfg = TrainConfig(model=kind, **kw)
    model = build_model(kind, cfg.seed)
    return train(model, splits.x("train"), splits.y("train"), splits.x("val"), splits.y("val"),
                 cfg, class_counts=splits.train.class_counts)


def test_defaults():
    cfg = TrainConfig()
    assert (cfg.lr, cfg.beta1, cfg.beta2, cfg.batch_size) == (1e-4, 0.9, 0.999, 4)
    assert cfg.contrastive_weight == 0.1 and cfg.plateau_factor == 0.1 and cfg.plateau_patience == 5
    assert TrainConfig(model="jmwr").lr == 1e-7
    assert TrainConfig(model="JMWR", lr=1e-3).lr == 1e-3


@pytest.mark.parametrize("kw", [{"model": "mlp"}, {"batch_size": 0}, {"lr": -1.0},
                                {"contrastive": "arcface"}, {"contrastive_weight": -0.1}])
def test_invalid_configs(kw):
    with pytest.raises(ValueError):
        TrainConfig(**kw)


def test_config_round_trip_ignores_unknown_keys():
    cfg = TrainConfig(model="rmwr", batch_size=8)
    assert TrainConfig.from_dict({**cfg.to_dict(), "note": "x"}) == cfg


def test_bce_value_matches_graph_loss(rng):
    p = rng.uniform(0.01, 0.99, 9)
    y = rng.integers(0, 2, 9)
    graph = class_balanced_bce(E.Tensor(p.reshape(-1, 1)), y, (5, 4)).item()
    assert math.isclose(bce_value(p, y, (5, 4)), graph, rel_tol=1e-14)


def test_contrastive_term_is_added_with_its_weight(splits):
    model = build_model("gmwr", 1)
    x, y = splits.x("train")[:6], splits.y("train")[:6]
    counts = splits.train.class_counts
    plain = batch_loss(model, x, y, counts, TrainConfig(model="gmwr")).item()
    with_c = batch_loss(model, x, y, counts, TrainConfig(model="gmwr", contrastive="contrastive",
                                                         contrastive_weight=0.5)).item()
    from mwrnet.losses import contrastive_pair_loss
    extra = contrastive_pair_loss(model.forward(x)[1], y).item()
    assert math.isclose(with_c, plain + 0.5 * extra, rel_tol=1e-12)


def test_training_reduces_training_loss_and_restores_best(splits):
    model, hist = _fit("rmwr", splits, max_epochs=4, early_stop_patience=10)
    tr = hist.column("train_loss")
    assert tr[-1] < tr[0]
    val = hist.column("val_loss")
    assert hist.best_epoch == int(np.argmin(val)) + 1
    restored = bce_value(model.predict(splits.x("val")), splits.y("val"), splits.train.class_counts)
    assert math.isclose(restored, min(val), rel_tol=1e-12)


def test_training_is_deterministic(splits):
    a, ha = _fit("lmwr", splits, max_epochs=2)
    b, hb = _fit("lmwr", splits, max_epochs=2)
    assert ha.column("val_loss") == hb.column("val_loss")
    for n, p in a.params().items():
        assert np.array_equal(p.data, b.params()[n].data), n


def test_early_stopping(splits):
    _, hist = _fit("base", splits, max_epochs=50, early_stop_patience=2)
    assert len(hist.rows) == hist.best_epoch + 2 or len(hist.rows) == 50


def test_non_finite_loss_aborts_with_history(splits):
    x = splits.x("train").copy()
    x[3, 0] = np.nan
    cfg = TrainConfig(model="base", max_epochs=2)
    with pytest.raises(TrainingAborted) as info:
        train(build_model("base", 1), x, splits.y("train"), splits.x("val"), splits.y("val"), cfg)
    assert isinstance(info.value, E.NumericError)
    assert info.value.history.rows == []


def test_empty_splits_rejected(splits):
    with pytest.raises(ValueError):
        train(build_model("base", 1), splits.x("train")[:0], splits.y("train")[:0],
              splits.x("val"), splits.y("val"), TrainConfig())


def test_joint_groups_give_head_its_own_rate():
    subs = {k: build_model(k, 1) for k in SUB_KINDS}
    j = build_model("jmwr", 1, subs)
    (sub_params, s1), (head_params, s2) = _param_groups(j, TrainConfig(model="jmwr"))
    assert s1 == 1.0 and math.isclose(s2, 1e-4 / 1e-7)
    assert len(head_params) == 8
    assert len(sub_params) + len(head_params) == len(j.params())
