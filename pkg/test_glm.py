import math

import numpy as np
import pytest
from scipy.special import expit

from pavi.errors import PaviError
from pavi.glm import (
    Dataset,
    SIGMA_FLOOR,
    diagnostics,
    fit_gaussian,
    fit_logistic,
    holdout_log_lik,
    predict,
    split_accuracy,
)
from pavi.measures import VariableSet


def logistic_data(rng, n=40, beta=(0.8, -1.2, 0.5), intercept=0.3):
    x = rng.standard_normal((n, len(beta)))
    y = (rng.random(n) < expit(intercept + x @ np.array(beta))).astype(float)
    return Dataset(x, y, "binomial")


def logistic_score(data, model):
    design = np.column_stack([np.ones(data.n), data.columns(model.support)])
    prob = predict(model, data.x)
    return design.T @ (data.y - prob)


# Dataset validation
def test_dataset_validation():
    with pytest.raises(PaviError) as err:
        Dataset(np.ones((3, 2)), np.ones(4))
    assert err.value.code == "dimension-mismatch"
    with pytest.raises(PaviError):
        Dataset(np.array([[1.0], [np.nan]]), np.ones(2))
    with pytest.raises(PaviError):
        Dataset(np.ones((3, 1)), np.array([0.0, 1.0, 2.0]), "binomial")
    with pytest.raises(PaviError):
        Dataset(np.ones((3, 1)), np.ones(3), "poisson")


# Gaussian fits
def test_gaussian_noiseless_recovery():
    x = np.linspace(-1, 1, 12).reshape(-1, 1)
    model = fit_gaussian(Dataset(x, 1.0 + 2.0 * x[:, 0]), VariableSet((1,)))
    assert model.intercept == pytest.approx(1.0, abs=1e-10)
    assert model.coefficients[0] == pytest.approx(2.0, abs=1e-10)
    assert model.sigma_hat == SIGMA_FLOOR
    assert math.isfinite(model.log_lik)


def test_gaussian_intercept_only(rng):
    y = rng.normal(3.0, 2.0, 50)
    model = fit_gaussian(Dataset(rng.standard_normal((50, 2)), y), VariableSet())
    assert model.intercept == pytest.approx(y.mean(), abs=1e-12)
    assert model.sigma_hat == pytest.approx(y.std(), abs=1e-12)
    assert model.coefficients.size == 0


def test_gaussian_matches_normal_equations(rng):
    x = rng.standard_normal((20, 3))
    y = 0.5 + x @ np.array([1.0, -2.0, 0.25]) + rng.standard_normal(20)
    model = fit_gaussian(Dataset(x, y), VariableSet((1, 2, 3)))

    design = np.column_stack([np.ones(20), x])
    expected = np.linalg.inv(design.T @ design) @ design.T @ y
    assert np.allclose(np.r_[model.intercept, model.coefficients], expected, atol=1e-8)


def test_gaussian_fit_minimizes_rss(rng):
    x = rng.standard_normal((30, 2))
    y = x[:, 0] + rng.standard_normal(30)
    data = Dataset(x, y)
    model = fit_gaussian(data, VariableSet((1, 2)))
    design = np.column_stack([np.ones(30), x])
    beta = np.r_[model.intercept, model.coefficients]
    rss = np.sum((y - design @ beta) ** 2)
    for _ in range(100):
        delta = rng.normal(scale=0.1, size=3)
        assert rss <= np.sum((y - design @ (beta + delta)) ** 2)


def test_gaussian_rank_deficient_design_flags_non_convergence(rng):
    x = rng.standard_normal((25, 1))
    data = Dataset(np.column_stack([x, x]), x[:, 0] + rng.standard_normal(25))
    model = fit_gaussian(data, VariableSet((1, 2)))
    assert not model.converged
    # minimal-norm solution splits the effect evenly
    assert model.coefficients[0] == pytest.approx(model.coefficients[1], rel=1e-8)


def test_capacity_and_family_errors(rng):
    data = Dataset(rng.standard_normal((5, 4)), rng.standard_normal(5))
    with pytest.raises(PaviError) as err:
        fit_gaussian(data, VariableSet((1, 2, 3, 4)))
    assert err.value.code == "capacity"
    assert "support exceeds capacity" in str(err.value)
    with pytest.raises(PaviError) as err:
        fit_logistic(data, VariableSet((1,)))
    assert err.value.code == "family-mismatch"


# Logistic fits
def test_logistic_intercept_only_balanced():
    y = np.array([0.0, 1.0] * 10)
    model = fit_logistic(Dataset(np.zeros((20, 1)) + np.arange(20)[:, None], y, "binomial"), VariableSet())
    assert model.intercept == pytest.approx(0.0, abs=1e-12)
    assert model.log_lik == pytest.approx(20 * math.log(0.5), abs=1e-10)
    assert np.allclose(predict(model, np.zeros((3, 1))), 0.5)


def test_logistic_separation_does_not_crash():
    x = np.linspace(-2, 2, 30).reshape(-1, 1)
    y = (x[:, 0] > 0).astype(float)
    model = fit_logistic(Dataset(x, y, "binomial"), VariableSet((1,)))
    assert not model.converged
    assert -1e-3 < model.log_lik <= 0.0


def test_logistic_score_vanishes_at_estimate(rng):
    for _ in range(10):
        data = logistic_data(rng)
        model = fit_logistic(data, VariableSet((1, 2, 3)))
        assert model.converged
        assert np.max(np.abs(logistic_score(data, model))) < 1e-6


def test_logistic_score_matches_finite_differences(rng):
    data = logistic_data(rng, n=60)
    model = fit_logistic(data, VariableSet((1, 3)))
    design = np.column_stack([np.ones(data.n), data.columns(model.support)])
    beta = np.r_[model.intercept, model.coefficients]

    def log_lik(b):
        prob = expit(design @ b)
        return np.sum(data.y * np.log(prob) + (1 - data.y) * np.log(1 - prob))

    h = 1e-5
    numeric = np.array([(log_lik(beta + h * e) - log_lik(beta - h * e)) / (2 * h) for e in np.eye(3)])
    assert np.max(np.abs(numeric)) < 1e-5


def test_irls_log_likelihood_never_decreases(rng):
    for _ in range(10):
        data = logistic_data(rng, n=50, beta=(2.0, -1.5, 1.0))
        history = fit_logistic(data, VariableSet((1, 2, 3))).history
        assert all(b >= a - 1e-12 for a, b in zip(history, history[1:]))


def test_logistic_rejects_oversized_support(rng):
    data = logistic_data(rng, n=4)
    with pytest.raises(PaviError) as err:
        fit_logistic(data, VariableSet((1, 2, 3)))
    assert err.value.code == "capacity"


# Holdout likelihood
def test_holdout_log_lik_half_probability():
    train = Dataset(np.zeros((10, 2)), np.array([0.0, 1.0] * 5), "binomial")
    model = fit_logistic(train, VariableSet())
    test = Dataset(np.ones((10, 2)), np.array([1.0] * 4 + [0.0] * 6), "binomial")
    assert holdout_log_lik(model, test) == pytest.approx(10 * math.log(0.5), abs=1e-10)


def test_holdout_log_lik_gaussian_unit_scale_perfect_fit():
    x = np.linspace(0, 1, 8).reshape(-1, 1)
    model = fit_gaussian(Dataset(x, 2.0 * x[:, 0]), VariableSet((1,)))
    model.sigma_hat = 1.0
    test = Dataset(x[:4], 2.0 * x[:4, 0])
    assert holdout_log_lik(model, test) == pytest.approx(0.0, abs=1e-12)


def test_holdout_log_lik_checks_shape_and_family(rng):
    model = fit_gaussian(Dataset(rng.standard_normal((10, 3)), rng.standard_normal(10)), VariableSet((1,)))
    with pytest.raises(PaviError) as err:
        holdout_log_lik(model, Dataset(rng.standard_normal((5, 2)), rng.standard_normal(5)))
    assert err.value.code == "dimension-mismatch"
    with pytest.raises(PaviError) as err:
        holdout_log_lik(model, Dataset(rng.standard_normal((4, 3)), np.array([0.0, 1.0, 1.0, 0.0]), "binomial"))
    assert err.value.code == "family-mismatch"


# Diagnostics
def test_diagnostics_separated_logistic_has_tiny_deviance():
    x = np.linspace(-2, 2, 30).reshape(-1, 1)
    data = Dataset(x, (x[:, 0] > 0).astype(float), "binomial")
    diag = diagnostics(fit_logistic(data, VariableSet((1,))), data)
    assert diag.deviance < 1e-2


def test_diagnostics_intercept_only_gaussian(rng):
    y = rng.standard_normal(40)
    y = (y - y.mean()) / y.std()
    data = Dataset(rng.standard_normal((40, 2)), y)
    model = fit_gaussian(data, VariableSet())
    diag = diagnostics(model, data)
    assert diag.deviance == pytest.approx(np.sum((y - y.mean()) ** 2), abs=1e-10)
    assert diag.log_lik == pytest.approx(model.log_lik, abs=1e-10)
    assert diag.aic - diag.bic == pytest.approx(2 * 1 - 1 * math.log(40), abs=1e-10)
    assert diag.n_params == 1


@pytest.mark.parametrize("family", ["gaussian", "binomial"])
def test_deviance_is_nested(rng, family):
    x = rng.standard_normal((60, 4))
    eta = x[:, 0] - 0.5 * x[:, 1]
    y = (rng.random(60) < expit(eta)).astype(float) if family == "binomial" else eta + rng.standard_normal(60)
    data = Dataset(x, y, family)
    fitter = fit_gaussian if family == "gaussian" else fit_logistic
    small = diagnostics(fitter(data, VariableSet((1,))), data).deviance
    large = diagnostics(fitter(data, VariableSet((1, 4))), data).deviance
    assert large <= small + 1e-6


# Repeated-split accuracy
def test_split_accuracy_is_reproducible(rng):
    data = logistic_data(rng, n=80, beta=(2.5, 0.0, 0.0))
    first = split_accuracy(data, VariableSet((1,)), reps=20, seed=3)
    second = split_accuracy(data, VariableSet((1,)), reps=20, seed=3)
    assert first.mean == second.mean
    assert 0.5 < first.mean <= 1.0
    assert first.se >= 0.0
    assert first.accuracies.shape == (20,)


def test_split_accuracy_needs_binomial_data(rng):
    data = Dataset(rng.standard_normal((20, 2)), rng.standard_normal(20))
    with pytest.raises(PaviError) as err:
        split_accuracy(data, VariableSet((1,)))
    assert err.value.code == "family-mismatch"
