import numpy as np
import pytest
from scipy.optimize import approx_fprime, minimize

from imgcred.core.config import TrainConfig
from imgcred.core.errors import ShapeError
from imgcred.services.learners import LogRegLearner, as_instance_weights
from imgcred.services.logreg_service import (
    fine_tune_logreg,
    logreg_objective,
    logreg_proba,
    train_weighted_logreg,
)


@pytest.fixture
def problem():
    rng = np.random.default_rng(21)
    X = rng.standard_normal((40, 3)) * [1.0, 3.0, 0.5] + [0.0, 2.0, -1.0]
    y = (rng.random(40) < 1.0 / (1.0 + np.exp(-(X @ [1.0, -0.5, 2.0])))).astype(np.int64)
    w = rng.uniform(0.5, 2.0, 40)
    return X, y, w


def test_objective_gradient_matches_finite_differences(problem):
    X, y, w = problem
    theta = np.array([0.3, -0.2, 0.5, 0.1])
    _, grad = logreg_objective(theta, X, y, w, 0.1)
    numeric = approx_fprime(theta, lambda t: logreg_objective(t, X, y, w, 0.1)[0], 1e-7)
    np.testing.assert_allclose(grad, numeric, rtol=1e-5, atol=1e-7)


def test_reaches_the_optimum_of_an_independent_solver(problem):
    X, y, w = problem
    cfg = TrainConfig(weight_decay=0.1, tolerance=1e-10, max_epochs=50_000)
    model = train_weighted_logreg(X, y, w, cfg)
    Xs = model.standardize(X)
    reference = minimize(logreg_objective, np.zeros(4), args=(Xs, y, w, 0.1), jac=True, method="BFGS",
                         options={"gtol": 1e-12})
    np.testing.assert_allclose(np.append(model.weights, model.bias), reference.x, atol=1e-6)
    _, grad = logreg_objective(np.append(model.weights, model.bias), Xs, y, w, 0.1)
    assert np.linalg.norm(grad) < 1e-6


def test_zero_weights_keep_the_zero_initialization(problem):
    X, y, _ = problem
    model = train_weighted_logreg(X, y, np.zeros(len(y)), TrainConfig())
    assert not model.weights.any()
    assert model.bias == 0.0
    np.testing.assert_allclose(logreg_proba(model, X), 0.5)


def test_separable_direction():
    X = np.array([[-2.0], [-1.0], [1.0], [2.0]])
    model = train_weighted_logreg(X, [0, 0, 1, 1], np.ones(4), TrainConfig())
    assert model.weights[0] > 0.0
    np.testing.assert_array_equal(logreg_proba(model, X) >= 0.5, [False, False, True, True])


def test_deterministic(problem):
    first = train_weighted_logreg(*problem, TrainConfig())
    second = train_weighted_logreg(*problem, TrainConfig())
    np.testing.assert_array_equal(first.weights, second.weights)
    assert first.bias == second.bias


def test_constant_feature_gets_unit_scale():
    X = np.column_stack([np.ones(4), [0.0, 1.0, 2.0, 3.0]])
    model = train_weighted_logreg(X, [0, 0, 1, 1], np.ones(4), TrainConfig())
    assert model.scale[0] == 1.0


def test_fine_tune_keeps_the_source_standardization(problem):
    X, y, w = problem
    source = train_weighted_logreg(X, y, w, TrainConfig())
    tuned = fine_tune_logreg(source, X[:10] + 5.0, y[:10], w[:10], TrainConfig())
    np.testing.assert_array_equal(tuned.mean, source.mean)
    np.testing.assert_array_equal(tuned.scale, source.scale)


def test_shape_errors(problem):
    X, y, w = problem
    with pytest.raises(ShapeError):
        train_weighted_logreg(X, y[:-1], w, TrainConfig())
    with pytest.raises(ShapeError):
        train_weighted_logreg(X, y, -w, TrainConfig())
    model = train_weighted_logreg(X, y, w, TrainConfig())
    with pytest.raises(ShapeError):
        logreg_proba(model, X[:, :2])


def test_learner_rescales_a_distribution_to_unit_mean(problem):
    X, y, w = problem
    p = w / w.sum()
    np.testing.assert_allclose(as_instance_weights(p), w * len(w) / w.sum())
    learner = LogRegLearner(TrainConfig())
    direct = train_weighted_logreg(X, y, as_instance_weights(p), TrainConfig())
    np.testing.assert_array_equal(learner.fit(X, y, p).weights, direct.weights)
