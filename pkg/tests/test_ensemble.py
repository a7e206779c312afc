import json

import numpy as np
import pytest

from asen import data, ensemble, mlp
from asen.ensemble import ArchitectureRanges, PoolConfig
from asen.errors import ConfigError, DimensionError
from asen.mlp import TrainConfig

FAST = TrainConfig(max_epochs=4)


def _random_stack(rng, m, B, C):
    return rng.dirichlet(np.ones(C), size=(m, B))


@pytest.fixture(scope="module")
def tiny():
    spec = data.SyntheticSpec(counts=(40, 60, 30, 40, 30, 50))
    ds = data.generate_synthetic(spec, 2)
    split = data.stratified_split(ds.y, seed=2)
    return ds, split


def test_architecture_within_ranges():
    r = ArchitectureRanges()
    for s in range(50):
        cfg = ensemble.sample_architecture(r, s)
        assert 1 <= len(cfg.hidden) <= 3
        assert all(10 <= h <= 100 for h in cfg.hidden)
        assert 0.2 <= cfg.dropout <= 0.6
    assert ensemble.sample_architecture(r, 7) == ensemble.sample_architecture(r, 7)
    with pytest.raises(ConfigError):
        ArchitectureRanges(layers=(1, 4))
    with pytest.raises(ConfigError):
        ArchitectureRanges(dropout=(0.1, 0.6))
    with pytest.raises(ConfigError):
        PoolConfig(n_learners=1)


def test_pool_independent_of_worker_count(tiny):
    ds, split = tiny
    X, y = ds.X[split.train], ds.y[split.train]
    Xv, yv = ds.X[split.val], ds.y[split.val]
    cfg = PoolConfig(n_learners=3, train=FAST, seed=4)
    a = ensemble.train_pool(X, y, Xv, yv, cfg, n_classes=6, workers=1)
    b = ensemble.train_pool(X, y, Xv, yv, cfg, n_classes=6, workers=2)
    assert len(a) == 3
    for la, lb in zip(a.learners, b.learners):
        assert la.to_dict() == lb.to_dict()
    # learners differ from one another
    assert a.learners[0].bootstrap_seed != a.learners[1].bootstrap_seed
    P = ensemble.stack_predictions(a, Xv)
    assert P.shape == (len(Xv), 3, 6)


def test_asen_gradient_check(rng):
    asen = ensemble.init_asen(4, 3, seed=1, hidden=8)
    P = _random_stack(rng, 6, 4, 3)
    Y = mlp.one_hot(rng.integers(0, 3, 6), 3)
    _, analytic = ensemble.asen_loss_and_gradients(asen, P, Y)

    def loss_fn(params):
        q, _ = ensemble._attention_forward(params, P)
        return mlp.softmax_cross_entropy(q, Y)[0]

    numeric = mlp.numeric_gradients(loss_fn, asen.params, 1e-5)
    err = max(float(mlp.relative_error(a, n).max()) for a, n in zip(analytic, numeric))
    assert err < 1e-4


def test_attention_invariants(rng):
    asen = ensemble.init_asen(5, 4, seed=3)
    P = _random_stack(rng, 300, 5, 4)
    probs, w = ensemble.asen_forward(asen, P)
    assert np.all(w >= 0)
    np.testing.assert_allclose(w.sum(axis=1), 1.0, atol=1e-12)
    np.testing.assert_allclose(probs.sum(axis=1), 1.0, atol=1e-12)
    q = ensemble.combined_rows(asen, P)
    assert np.all(q >= P.min(axis=1) - 1e-12) and np.all(q <= P.max(axis=1) + 1e-12)


def test_zero_attention_is_mean_of_pool(rng):
    asen = ensemble.init_asen(3, 4, seed=0)
    asen.attention[:] = 0.0
    P = _random_stack(rng, 100, 3, 4)
    probs, w = ensemble.asen_forward(asen, P)
    np.testing.assert_allclose(w, 1 / 3)
    np.testing.assert_array_equal(probs.argmax(axis=1), P.mean(axis=1).argmax(axis=1))


def test_identical_learners_get_equal_weight(rng):
    asen = ensemble.init_asen(3, 4, seed=2)
    row = _random_stack(rng, 10, 1, 4)
    P = np.repeat(row, 3, axis=1)
    _, w = ensemble.asen_forward(asen, P)
    np.testing.assert_allclose(w, 1 / 3, atol=1e-15)


def test_stacked_shape_checked(rng):
    asen = ensemble.init_asen(3, 4)
    with pytest.raises(DimensionError):
        ensemble.asen_forward(asen, _random_stack(rng, 5, 2, 4))


def test_classifier_round_trip(tiny, tmp_path):
    ds, split = tiny
    clf = ensemble.fit_asen_classifier(ds.subset(split.train), ds.subset(split.val),
                                       PoolConfig(n_learners=2, train=FAST, seed=1), FAST,
                                       split_digest=split.digest())
    doc = json.loads(json.dumps(clf.to_dict()))
    clf2 = ensemble.AsenClassifier.from_dict(doc)
    X = ds.X[split.test]
    l1, p1, w1 = clf.predict(X)
    l2, p2, w2 = clf2.predict(X)
    np.testing.assert_array_equal(p1, p2)
    np.testing.assert_array_equal(w1, w2)
    assert clf2.split_digest == split.digest()
    assert doc["asen"]["hidden"] == ensemble.ATTENTION_WIDTH
    with pytest.raises(DimensionError):
        clf.predict(X[:, :3])


def test_grid_search_ranking(tiny):
    ds, split = tiny
    res = ensemble.grid_search(ds.X[split.train], ds.y[split.train], ds.X[split.val],
                               ds.y[split.val], (1, 2), (10, 20), (0.2,), FAST, seed=0)
    assert len(res) == 4
    keys = [(-r.val_accuracy, r.val_loss, r.param_count) for r in res]
    assert keys == sorted(keys)
