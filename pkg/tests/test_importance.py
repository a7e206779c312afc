import numpy as np
import pytest

from asen import data, importance
from asen.ensemble import PoolConfig
from asen.errors import ConfigError
from asen.mlp import TrainConfig

FAST = TrainConfig(max_epochs=4)


class _FirstColumnModel:
    """Predicts class 1 when feature 0 is positive; ignores all else."""

    def predict(self, X):
        labels = (X[:, 0] > 0).astype(int)
        return labels, np.eye(2)[labels]


def test_importance_finds_the_informative_column():
    rng = np.random.default_rng(0)
    X = rng.normal(size=(400, 4))
    y = (X[:, 0] > 0).astype(int)
    rep = importance.permutation_importance(_FirstColumnModel(), X, y, ["a", "b", "c", "d"],
                                            repeats=5, seed=1)
    assert rep.baseline == 1.0
    assert rep.ranked_names()[0] == "a"
    assert rep.mean[0] > 0.3
    np.testing.assert_array_equal(rep.mean[1:], 0.0)
    again = importance.permutation_importance(_FirstColumnModel(), X, y, ["a", "b", "c", "d"],
                                              repeats=5, seed=1)
    np.testing.assert_array_equal(rep.mean, again.mean)
    assert rep.to_csv().splitlines()[1].startswith("a,")


def test_select_top_k_keeps_original_order_and_breaks_ties_by_position():
    rep = importance.ImportanceReport(("w", "x", "y", "z"), np.array([0.1, 0.5, 0.1, 0.0]),
                                      np.zeros(4), 1.0)
    assert importance.select_top_k(rep, 2) == ("w", "x")
    assert importance.select_top_k(rep, 3) == ("w", "x", "y")
    with pytest.raises(ConfigError):
        importance.select_top_k(rep, 0)
    with pytest.raises(ConfigError):
        importance.select_top_k(rep, 5)


@pytest.fixture(scope="module")
def small():
    ds = data.generate_synthetic(data.SyntheticSpec(counts=(40, 60, 30, 40, 30, 50),
                                                    noise_features=2), 6)
    return ds, data.stratified_split(ds.y, seed=6)


def test_k_equal_to_feature_count_gives_identical_arms(small):
    ds, split = small
    res = importance.feature_selection_experiment(
        ds, split, PoolConfig(n_learners=2, train=FAST, seed=3), FAST, k=ds.n_features,
        seed=2, repeats=2)
    assert res.selected_features == ds.feature_names
    assert res.full.to_dict() == res.selected.to_dict()
    assert res.full_model.to_dict() == res.selected_model.to_dict()
    assert all(v == 0 for v in res.deltas().values())
    assert list(res.table()["columns"]) == ["Accuracy", "F1-Score", "Precision", "Recall", "AUC"]


def test_experiment_is_deterministic(small):
    ds, split = small
    cfg = PoolConfig(n_learners=2, train=FAST, seed=3)
    a = importance.feature_selection_experiment(ds, split, cfg, FAST, k=5, seed=2, repeats=2)
    b = importance.feature_selection_experiment(ds, split, cfg, FAST, k=5, seed=2, repeats=2)
    assert a.to_dict() == b.to_dict()
    assert len(a.selected_features) == 5
