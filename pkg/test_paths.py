import numpy as np
import pytest
from scipy.special import expit

from pavi.errors import PaviError
from pavi.glm import Dataset
from pavi.measures import VariableSet
from pavi.paths import (
    LambdaGrid,
    PenaltySpec,
    cv_select,
    fit_path,
    lambda_grid,
    penalty_derivative,
    select_support,
    soft_threshold,
    standardize,
    univariate_mcp_solution,
    univariate_scad_solution,
    weights_from_pilot,
)


def gaussian_data(rng, n=50, p=10, beta=(2.0, -1.5, 1.0), noise=1.0):
    x = rng.standard_normal((n, p))
    coef = np.zeros(p)
    coef[:len(beta)] = beta
    return Dataset(x, 0.5 + x @ coef + noise * rng.standard_normal(n))


def binomial_data(rng, n=100, p=8, beta=(1.0, -0.8)):
    x = rng.standard_normal((n, p))
    coef = np.zeros(p)
    coef[:len(beta)] = beta
    return Dataset(x, (rng.random(n) < expit(x @ coef)).astype(float), "binomial")


def mcp_value(t, lam, a):
    t = np.abs(t)
    return np.where(t <= a * lam, lam * t - t ** 2 / (2 * a), a * lam ** 2 / 2)


def scad_value(t, lam, a):
    t = np.abs(t)
    middle = (2 * a * lam * t - t ** 2 - lam ** 2) / (2 * (a - 1))
    return np.where(t <= lam, lam * t, np.where(t <= a * lam, middle, lam ** 2 * (a + 1) / 2))


# Scalar helpers
def test_soft_threshold():
    assert soft_threshold(3.0, 1.0) == 2.0
    assert soft_threshold(-3.0, 1.0) == -2.0
    assert soft_threshold(0.5, 1.0) == 0.0
    assert np.array_equal(soft_threshold(np.array([2.0, -0.2]), 0.5), np.array([1.5, 0.0]))


def test_penalty_derivative():
    lasso, scad, mcp = PenaltySpec("lasso"), PenaltySpec("scad"), PenaltySpec("mcp")
    assert penalty_derivative(lasso, 5.0, 1.0) == 1.0
    assert penalty_derivative(scad, 0.5, 1.0) == 1.0
    assert penalty_derivative(scad, 2.0, 1.0) == pytest.approx(1.7 / 2.7, abs=1e-12)
    assert penalty_derivative(scad, 4.0, 1.0) == 0.0
    assert penalty_derivative(mcp, 1.0, 1.0) == pytest.approx(2.0 / 3.0, abs=1e-12)
    assert penalty_derivative(mcp, 4.0, 1.0) == 0.0
    assert penalty_derivative(mcp, 0.0, 1.0) == 1.0


@pytest.mark.parametrize("z", [-6.0, -3.0, -1.5, -0.5, 0.0, 0.7, 1.8, 2.5, 3.2, 8.0])
def test_univariate_nonconvex_solutions_match_grid_scan(z):
    lam = 1.0
    grid = np.linspace(-10.0, 10.0, 2_000_001)

    a = 3.0
    objective = (z - grid) ** 2 / 2 + mcp_value(grid, lam, a)
    assert univariate_mcp_solution(z, lam, a) == pytest.approx(grid[np.argmin(objective)], abs=2e-5)

    a = 3.7
    objective = (z - grid) ** 2 / 2 + scad_value(grid, lam, a)
    assert univariate_scad_solution(z, lam, a) == pytest.approx(grid[np.argmin(objective)], abs=2e-5)


def test_penalty_spec_validation():
    assert PenaltySpec("adlasso").kind == "adaptive_lasso"
    assert PenaltySpec("scad").a == 3.7
    assert PenaltySpec("mcp").a == 3.0
    with pytest.raises(PaviError):
        PenaltySpec("scad", a=2.0)
    with pytest.raises(PaviError):
        PenaltySpec("mcp", a=1.0)
    with pytest.raises(PaviError):
        PenaltySpec("ridge")


def test_standardize_marks_constant_columns(rng):
    x = np.column_stack([rng.standard_normal(30), np.full(30, 4.0), rng.uniform(size=30)])
    xs, means, scales = standardize(x)
    assert scales[1] == 0.0
    assert np.all(xs[:, 1] == 0.0)
    assert np.allclose(xs[:, [0, 2]].mean(axis=0), 0.0, atol=1e-12)
    assert np.allclose((xs[:, [0, 2]] ** 2).mean(axis=0), 1.0, atol=1e-12)
    assert xs.flags["F_CONTIGUOUS"]


# Lambda grids
def test_lambda_grid_shape_and_scaling(rng):
    data = gaussian_data(rng)
    grid = lambda_grid(data, PenaltySpec("lasso"))
    assert len(grid) == 100
    assert np.all(np.diff(grid.values) < 0)
    assert grid.values[-1] / grid.values[0] == pytest.approx(1e-4, rel=1e-9)

    doubled = lambda_grid(Dataset(data.x, 2 * data.y), PenaltySpec("lasso"))
    assert doubled.lambda_max == pytest.approx(2 * grid.lambda_max, rel=1e-10)

    wide = gaussian_data(rng, n=20, p=40)
    wide_grid = lambda_grid(wide, PenaltySpec("lasso"), L=10)
    assert wide_grid.values[-1] / wide_grid.values[0] == pytest.approx(0.01, rel=1e-9)


def test_lambda_grid_rejects_bad_values():
    with pytest.raises(PaviError):
        LambdaGrid([1.0, 2.0])
    with pytest.raises(PaviError):
        LambdaGrid([1.0, 0.0])


@pytest.mark.parametrize("kind", ["lasso", "scad", "mcp"])
def test_path_starts_empty(rng, kind):
    for data in (gaussian_data(rng), binomial_data(rng)):
        path = fit_path(data, PenaltySpec(kind))
        assert path.supports[0] == VariableSet()
        assert len(path.supports[-1]) > 0


# Path solutions
def test_orthonormal_design_gives_soft_threshold(rng):
    n, p = 40, 5
    raw = rng.standard_normal((n, p))
    q, _ = np.linalg.qr(raw - raw.mean(axis=0))
    x = q * np.sqrt(n)
    y = x @ np.array([1.0, 0.5, -0.25, 0.0, 0.0]) + 0.1 * rng.standard_normal(n)
    data = Dataset(x, y)

    path = fit_path(data, PenaltySpec("lasso"), tol=1e-12)
    z = x.T @ (y - y.mean()) / n
    for i in (0, 10, 40, 99):
        expected = soft_threshold(z, path.grid.values[i])
        assert np.allclose(path.std_coefficients[i], expected, atol=1e-8)


@pytest.mark.parametrize("kind, solution", [("mcp", univariate_mcp_solution), ("scad", univariate_scad_solution)])
def test_orthonormal_design_gives_nonconvex_closed_form(rng, kind, solution):
    n, p = 40, 5
    raw = rng.standard_normal((n, p))
    q, _ = np.linalg.qr(raw - raw.mean(axis=0))
    x = q * np.sqrt(n)
    y = x @ np.array([1.0, 0.5, -0.25, 0.0, 0.0]) + 0.1 * rng.standard_normal(n)
    data = Dataset(x, y)

    penalty = PenaltySpec(kind)
    path = fit_path(data, penalty, tol=1e-12)
    z = x.T @ (y - y.mean()) / n
    assert path.converged.all()
    for i, lam in enumerate(path.grid.values):
        expected = [solution(zj, lam, penalty.a) for zj in z]
        assert np.allclose(path.std_coefficients[i], expected, atol=1e-9)


def test_unsettled_nonconvex_fit_is_flagged(rng, monkeypatch):
    monkeypatch.setattr("pavi.paths.LLA_MAX_STEPS", 1)
    n = 40
    raw = rng.standard_normal((n, 3))
    q, _ = np.linalg.qr(raw - raw.mean(axis=0))
    x = q * np.sqrt(n)
    data = Dataset(x, x @ np.array([1.0, 0.5, 0.0]))
    path = fit_path(data, PenaltySpec("mcp"), tol=1e-12)
    # the first point is empty and settles at once; later ones need several re-weightings
    assert path.converged[0]
    assert not path.converged[1:].all()


def penalized_objective(data, path, kind, lam):
    penalty = path.penalty
    beta = path.std_coefficients[0]
    residual = data.y - path.linear_predictor(data.x)[:, 0]
    if kind == "mcp":
        cost = mcp_value(beta, lam, penalty.a)
    elif kind == "scad":
        cost = scad_value(beta, lam, penalty.a)
    else:
        cost = lam * np.abs(beta)
    return residual @ residual / (2 * data.n) + float(np.sum(cost))


def test_lasso_objective_does_not_increase_across_sweeps(rng, monkeypatch):
    x = rng.standard_normal((60, 10))
    x[:, 1] = x[:, 0] + 0.3 * rng.standard_normal(60)
    data = Dataset(x, x[:, :3] @ np.array([2.0, -1.5, 1.0]) + rng.standard_normal(60))
    lam = lambda_grid(data, PenaltySpec("lasso")).values[40]

    values = []
    for sweeps in range(1, 9):
        monkeypatch.setattr("pavi.paths.MAX_SWEEPS", sweeps)
        path = fit_path(data, PenaltySpec("lasso"), LambdaGrid([lam]), tol=1e-14)
        values.append(penalized_objective(data, path, "lasso", lam))
    assert np.all(np.diff(values) <= 1e-12)
    assert values[-1] < values[0]


@pytest.mark.parametrize("kind", ["scad", "mcp"])
def test_nonconvex_objective_does_not_increase_across_reweightings(rng, monkeypatch, kind):
    x = rng.standard_normal((60, 10))
    x[:, 1] = x[:, 0] + 0.3 * rng.standard_normal(60)
    data = Dataset(x, x[:, :3] @ np.array([2.0, -1.5, 1.0]) + rng.standard_normal(60))
    penalty = PenaltySpec(kind)
    lam = lambda_grid(data, penalty).values[30]

    values = []
    for steps in range(1, 8):
        monkeypatch.setattr("pavi.paths.LLA_MAX_STEPS", steps)
        path = fit_path(data, penalty, LambdaGrid([lam]), tol=1e-13)
        values.append(penalized_objective(data, path, kind, lam))
    assert np.all(np.diff(values) <= 1e-10)


def test_gaussian_lasso_path_satisfies_kkt(rng):
    data = gaussian_data(rng)
    path = fit_path(data, PenaltySpec("lasso"), tol=1e-10)
    xs, _, _ = standardize(data.x)
    for i, lam in enumerate(path.grid.values):
        residual = data.y - path.intercepts[i] - data.x @ path.coefficients[i]
        gradient = xs.T @ residual / data.n
        beta = path.std_coefficients[i]
        active = beta != 0
        assert np.all(np.abs(gradient[active] - lam * np.sign(beta[active])) < 1e-6)
        assert np.all(np.abs(gradient[~active]) <= lam + 1e-6)
        assert abs(residual.mean()) < 1e-8


def test_binomial_lasso_path_satisfies_kkt(rng):
    data = binomial_data(rng)
    path = fit_path(data, PenaltySpec("lasso"), tol=1e-10)
    xs, _, _ = standardize(data.x)
    checked = 0
    for i, lam in enumerate(path.grid.values):
        if not path.converged[i]:
            continue
        eta = path.intercepts[i] + data.x @ path.coefficients[i]
        gradient = xs.T @ (data.y - expit(eta)) / data.n
        beta = path.std_coefficients[i]
        active = beta != 0
        assert np.all(np.abs(gradient[active] - lam * np.sign(beta[active])) < 1e-5)
        assert np.all(np.abs(gradient[~active]) <= lam + 1e-5)
        checked += 1
    assert checked > 50


def test_gaussian_lasso_matches_proximal_gradient(rng):
    data = gaussian_data(rng, n=60, p=8)
    path = fit_path(data, PenaltySpec("lasso"), tol=1e-12)
    xs, _, _ = standardize(data.x)
    yc = data.y - data.y.mean()
    gram = xs.T @ xs / data.n
    step = 1.0 / np.linalg.eigvalsh(gram).max()

    for i in (5, 30, 70):
        lam = path.grid.values[i]
        beta = np.zeros(data.p)
        momentum, t = beta.copy(), 1.0
        for _ in range(20000):
            gradient = gram @ momentum - xs.T @ yc / data.n
            updated = soft_threshold(momentum - step * gradient, step * lam)
            t_next = (1 + np.sqrt(1 + 4 * t * t)) / 2
            momentum = updated + (t - 1) / t_next * (updated - beta)
            beta, t = updated, t_next
        assert np.allclose(path.std_coefficients[i], beta, atol=1e-6)


def test_warm_start_matches_cold_start(rng):
    data = gaussian_data(rng)
    path = fit_path(data, PenaltySpec("lasso"), tol=1e-10)
    for i in (15, 60):
        single = fit_path(data, PenaltySpec("lasso"), LambdaGrid([path.grid.values[i]]), tol=1e-10)
        assert np.allclose(single.coefficients[0], path.coefficients[i], atol=1e-6)


def test_binomial_path_stops_refining_after_saturation():
    x = np.column_stack([np.linspace(-2, 2, 40), np.cos(np.arange(40))])
    data = Dataset(x, (x[:, 0] > 0).astype(float), "binomial")
    path = fit_path(data, PenaltySpec("lasso"))
    assert not path.converged[-1]
    assert np.array_equal(path.coefficients[-1], path.coefficients[-2])


def test_adaptive_weights_exclude_zero_pilot_variables(rng):
    data = gaussian_data(rng, p=3, beta=(1.0, 1.0, 1.0))
    penalty = PenaltySpec("adaptive_lasso", adaptive_weights=np.array([1.0, np.inf, 1.0]))
    path = fit_path(data, penalty)
    assert np.all(path.coefficients[:, 1] == 0.0)
    assert np.any(path.coefficients[:, 0] != 0.0)


def test_weights_from_pilot():
    pilot = np.array([2.0, 0.0, -0.5])
    assert np.array_equal(weights_from_pilot(pilot, 1.0), np.array([0.5, np.inf, 2.0]))
    assert np.array_equal(weights_from_pilot(pilot, 2.0), np.array([0.25, np.inf, 4.0]))


# Cross-validation
def test_cv_is_deterministic_for_a_seed(rng):
    data = gaussian_data(rng)
    first = cv_select(data, PenaltySpec("lasso"), seed=7)
    second = cv_select(data, PenaltySpec("lasso"), seed=7)
    assert first.chosen_index == second.chosen_index
    assert np.array_equal(first.cv_losses, second.cv_losses)
    assert np.array_equal(first.fold_assignment, second.fold_assignment)
    assert sorted(set(first.fold_assignment)) == [0, 1, 2, 3, 4]


def test_leave_one_out_losses_match_manual_refits(rng):
    data = gaussian_data(rng, n=12, p=3, beta=(1.0,))
    penalty = PenaltySpec("lasso")
    grid = lambda_grid(data, penalty, L=5)
    cv = cv_select(data, penalty, folds=12, grid=grid)

    manual = np.zeros(len(grid))
    for i in range(data.n):
        keep = np.arange(data.n) != i
        path = fit_path(data.subset(keep), penalty, grid)
        manual += (data.y[i] - path.linear_predictor(data.x[i:i + 1])[0]) ** 2
    assert np.allclose(cv.cv_losses, manual / data.n, atol=1e-10)


def test_cv_ties_go_to_largest_lambda(rng):
    data = Dataset(rng.standard_normal((20, 3)), np.full(20, 3.0))
    cv = cv_select(data, PenaltySpec("lasso"))
    assert cv.chosen_index == 0
    assert np.all(cv.cv_losses == 0.0)


def test_cv_needs_two_of_each_class(rng):
    y = np.zeros(20)
    y[3] = 1.0
    with pytest.raises(PaviError) as err:
        cv_select(Dataset(rng.standard_normal((20, 2)), y, "binomial"), PenaltySpec("lasso"))
    assert err.value.code == "invalid-input"


def test_binomial_cv_rejects_more_folds_than_class_members(rng):
    y = np.tile([0.0, 1.0], 6)
    data = Dataset(rng.standard_normal((12, 2)), y, "binomial")
    with pytest.raises(PaviError) as err:
        cv_select(data, PenaltySpec("lasso"), folds=12)
    assert err.value.code == "invalid-input"
    assert "folds=12" in str(err.value)


def test_select_support_finds_strong_signal(rng):
    data = gaussian_data(rng, n=100, beta=(3.0, -3.0, 2.0), noise=0.5)
    for kind in ("lasso", "adaptive_lasso", "scad", "mcp"):
        support, cv, path = select_support(data, PenaltySpec(kind), seed=11)
        assert {1, 2, 3} <= set(support)
        assert support == path.supports[cv.chosen_index]


@pytest.mark.slow
def test_pure_noise_selects_large_lambda():
    top_quartile = 0
    for r in range(100):
        local = np.random.default_rng(r)
        data = Dataset(local.standard_normal((100, 20)), local.standard_normal(100))
        cv = cv_select(data, PenaltySpec("lasso"), seed=r)
        top_quartile += int(cv.chosen_index < len(cv.grid) // 4)
    assert top_quartile >= 90


def test_lasso_support_sizes_mostly_grow_along_the_path(rng):
    steps = grows = 0
    for _ in range(10):
        sizes = [len(s) for s in fit_path(gaussian_data(rng, n=80, p=12), PenaltySpec("lasso")).supports]
        diffs = np.diff(sizes)
        steps += diffs.size
        grows += int(np.sum(diffs >= 0))
    assert grows >= 0.95 * steps
