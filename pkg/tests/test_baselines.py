import json

import numpy as np
import pytest

from asen import baselines, data, mlp
from asen.errors import DataError


def _blobs(seed, n=300):
    rng = np.random.default_rng(seed)
    centers = np.array([[0.0, 4.0], [4.0, 0.0], [-4.0, -4.0]])
    y = rng.integers(0, 3, size=n)
    return centers[y] + rng.normal(size=(n, 2)), y


@pytest.mark.parametrize("kind", ["logistic", "svm"])
def test_gradients_match_finite_differences(kind):
    rng = np.random.default_rng(0)
    X = rng.normal(size=(8, 3))
    Y = mlp.one_hot(rng.integers(0, 3, 8), 3)
    params = [rng.normal(size=(3, 3)), rng.normal(size=3)]
    fn = baselines.logreg_loss_and_gradients if kind == "logistic" else baselines.hinge_loss_and_gradients
    _, grads, _ = fn(params, X, Y, 0.01)
    numeric = mlp.numeric_gradients(lambda p: fn(p, X, Y, 0.01)[0], params)
    for a, n in zip(grads, numeric):
        np.testing.assert_allclose(a, n, atol=1e-6)


@pytest.mark.parametrize("trainer", [baselines.train_logreg, baselines.train_linear_svm])
def test_linear_models_separate_blobs(trainer):
    X, y = _blobs(1)
    Xv, yv = _blobs(2)
    model, rep = trainer(X, y, Xv, yv, seed=3)
    labels, scores = baselines.predict_linear(model, Xv)
    assert np.mean(labels == yv) > 0.95
    assert rep.stopped_epoch <= 100
    again, _ = trainer(X, y, Xv, yv, seed=3)
    np.testing.assert_array_equal(model.W, again.W)


def test_logistic_scores_are_probabilities():
    X, y = _blobs(1)
    model, _ = baselines.train_logreg(X, y, X, y, max_epochs=3)
    _, S = baselines.predict_linear(model, X)
    np.testing.assert_allclose(S.sum(axis=1), 1.0)


def test_single_class_rejected():
    X = np.ones((5, 2))
    with pytest.raises(DataError):
        baselines.train_logreg(X, np.zeros(5, dtype=int), X, np.zeros(5, dtype=int))


def test_classifier_round_trip():
    X, y = _blobs(1)
    norm = data.fit_normalizer(X)
    model, rep = baselines.train_linear_svm(data.apply_normalizer(norm, X), y,
                                            data.apply_normalizer(norm, X), y, max_epochs=3)
    clf = baselines.LinearClassifier(model, norm, ("a", "b"), ("x", "y", "z"), "abc", rep)
    clf2 = baselines.LinearClassifier.from_dict(json.loads(json.dumps(clf.to_dict())))
    np.testing.assert_array_equal(clf.predict(X)[1], clf2.predict(X)[1])
    assert clf2.split_digest == "abc"
