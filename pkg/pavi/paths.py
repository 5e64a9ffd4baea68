"""
Penalized solution paths (Lasso, adaptive Lasso, SCAD, MCP) for gaussian and
binomial data by cyclic coordinate descent, with lambda grids and k-fold
cross-validation.
"""

import math
import logging
from dataclasses import dataclass, replace
from typing import List, Optional, Tuple

import numpy as np
from scipy.special import expit
from sklearn.model_selection import KFold, StratifiedKFold

from pavi.errors import PaviError, INVALID_INPUT, DIMENSION_MISMATCH
from pavi.glm import Dataset, PROB_CLAMP
from pavi.measures import VariableSet
from pavi.utils import DEFAULT_SEED

logger = logging.getLogger(__name__)

PENALTY_KINDS = ("lasso", "adaptive_lasso", "scad", "mcp")
PENALTY_ALIASES = {"adlasso": "adaptive_lasso", "adaptive": "adaptive_lasso"}
DEFAULT_A = {"scad": 3.7, "mcp": 3.0}

# Solver settings
PATH_LENGTH = 100
CD_TOL = 1e-7
MAX_SWEEPS = 1000
MAX_OUTER = 100
# Local linear approximation runs to a fixed point, capped at this many re-weightings
LLA_MAX_STEPS = 200
BINOMIAL_WEIGHT_FLOOR = 1e-5
# Binomial paths stop refining once this share of the null deviance is explained
SATURATION = 0.999
CONSTANT_SCALE = 1e-10


@dataclass
class PenaltySpec:
    """Penalty family with its shape parameter and optional adaptive weights"""

    kind: str = "lasso"
    a: Optional[float] = None
    gamma: float = 1.0
    adaptive_weights: Optional[np.ndarray] = None

    def __post_init__(self):
        self.kind = PENALTY_ALIASES.get(self.kind, self.kind)
        if self.kind not in PENALTY_KINDS:
            raise PaviError(INVALID_INPUT, "unknown penalty", str(self.kind))
        if self.a is None:
            self.a = DEFAULT_A.get(self.kind, 3.7)
        if self.kind == "scad" and not self.a > 2:
            raise PaviError(INVALID_INPUT, "SCAD requires a > 2", f"a={self.a}")
        if self.kind == "mcp" and not self.a > 1:
            raise PaviError(INVALID_INPUT, "MCP requires a > 1", f"a={self.a}")
        if not self.gamma > 0:
            raise PaviError(INVALID_INPUT, "adaptive Lasso exponent must be positive", f"gamma={self.gamma}")
        if self.adaptive_weights is not None:
            self.adaptive_weights = np.asarray(self.adaptive_weights, dtype=float)
            if np.any(np.isnan(self.adaptive_weights)) or np.any(self.adaptive_weights <= 0):
                raise PaviError(INVALID_INPUT, "adaptive weights must be positive")

    @property
    def nonconvex(self) -> bool:
        return self.kind in ("scad", "mcp")

    def with_weights(self, weights: np.ndarray) -> "PenaltySpec":
        return replace(self, adaptive_weights=np.asarray(weights, dtype=float))

    def variable_weights(self, p: int) -> np.ndarray:
        """Per-variable multipliers of lambda; +inf excludes a variable"""
        if self.kind != "adaptive_lasso" or self.adaptive_weights is None:
            return np.ones(p)
        if self.adaptive_weights.shape != (p,):
            raise PaviError(DIMENSION_MISMATCH, "adaptive weights do not match predictors",
                            f"{self.adaptive_weights.shape[0]} vs p={p}")
        return self.adaptive_weights


@dataclass
class LambdaGrid:
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float).reshape(-1)
        if self.values.size == 0 or np.any(self.values <= 0):
            raise PaviError(INVALID_INPUT, "lambda grid must hold positive values")
        if np.any(np.diff(self.values) >= 0):
            raise PaviError(INVALID_INPUT, "lambda grid must be strictly decreasing")

    @property
    def lambda_max(self) -> float:
        return float(self.values[0])

    def __len__(self) -> int:
        return self.values.size


@dataclass
class PathSolution:
    """Per-lambda intercepts and coefficients on the original scale"""

    grid: LambdaGrid
    intercepts: np.ndarray
    coefficients: np.ndarray
    supports: List[VariableSet]
    family: str
    penalty: PenaltySpec
    converged: np.ndarray
    means: np.ndarray
    scales: np.ndarray

    def __len__(self) -> int:
        return len(self.grid)

    @property
    def std_coefficients(self) -> np.ndarray:
        return self.coefficients * self.scales

    def linear_predictor(self, x: np.ndarray) -> np.ndarray:
        """Linear predictor for every lambda, shape (n, L)"""
        return self.intercepts[None, :] + np.asarray(x, dtype=float) @ self.coefficients.T


@dataclass
class CvResult:
    chosen_lambda: float
    chosen_index: int
    cv_losses: np.ndarray
    fold_assignment: np.ndarray
    grid: LambdaGrid


def soft_threshold(z, t):
    """sign(z) * max(|z| - t, 0)"""
    result = np.sign(z) * np.maximum(np.abs(z) - t, 0.0)
    return float(result) if np.ndim(result) == 0 else result


def penalty_derivative(spec: PenaltySpec, u, lam: float):
    """Derivative of the penalty at |beta| = u"""
    u = np.asarray(u, dtype=float)
    a = spec.a
    if spec.kind == "scad":
        result = np.where(u <= lam, lam, np.maximum(a * lam - u, 0.0) / (a - 1.0))
    elif spec.kind == "mcp":
        result = np.maximum(a * lam - u, 0.0) / a
    else:
        result = np.full_like(u, lam)
    return float(result) if result.ndim == 0 else result


def univariate_mcp_solution(z: float, lam: float, a: float) -> float:
    """Minimizer of (z - b)^2 / 2 + MCP(|b|) for a unit-variance coordinate"""
    if abs(z) <= a * lam:
        return soft_threshold(z, lam) / (1.0 - 1.0 / a)
    return float(z)


def univariate_scad_solution(z: float, lam: float, a: float) -> float:
    """Minimizer of (z - b)^2 / 2 + SCAD(|b|) for a unit-variance coordinate"""
    if abs(z) <= 2.0 * lam:
        return soft_threshold(z, lam)
    if abs(z) <= a * lam:
        return ((a - 1.0) * z - math.copysign(a * lam, z)) / (a - 2.0)
    return float(z)


def standardize(x: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Center columns and scale to unit (1/n) variance; constant columns become zero

    Returns the standardized matrix in Fortran order, the column means and the
    scales, with scale 0 marking a constant column.
    """
    x = np.asarray(x, dtype=float)
    means = x.mean(axis=0)
    scales = x.std(axis=0)
    constant = scales <= CONSTANT_SCALE * np.maximum(1.0, np.abs(means))
    scales = np.where(constant, 0.0, scales)
    xs = np.asfortranarray((x - means) / np.where(constant, 1.0, scales))
    xs[:, constant] = 0.0
    return xs, means, scales


def _null_gradient(xs: np.ndarray, y: np.ndarray) -> np.ndarray:
    return np.abs(xs.T @ (y - y.mean())) / y.shape[0]


def lambda_grid(data: Dataset, penalty: PenaltySpec, L: int = PATH_LENGTH,
                ratio: Optional[float] = None) -> LambdaGrid:
    """Log-spaced grid from the smallest lambda giving an empty model"""
    if L < 2:
        raise PaviError(INVALID_INPUT, "grid length must be at least 2", f"L={L}")
    xs, _, scales = standardize(data.x)
    if not np.any(scales > 0):
        raise PaviError(INVALID_INPUT, "design has only constant columns")

    gradient = _null_gradient(xs, data.y)
    weights = penalty.variable_weights(data.p)
    eligible = (scales > 0) & np.isfinite(weights)
    if np.any(eligible):
        lam_max = float(np.max(gradient[eligible] / weights[eligible]))
    else:
        lam_max = float(np.max(gradient))
    # Slightly above the boundary so round-off cannot activate a variable at the first point
    lam_max = max(lam_max, np.finfo(float).eps) * (1.0 + 1e-9)

    if ratio is None:
        ratio = 0.01 if data.n < data.p else 1e-4
    return LambdaGrid(np.geomspace(lam_max, lam_max * ratio, L))


def _weighted_cd(xs, target, w, state, thresholds, eligible, tol, max_sweeps) -> bool:
    """Coordinate descent for (1/2n) sum w (target - b0 - xs b)^2 + sum t_j |b_j|

    `state` is [intercept, beta] and is updated in place. Alternates full
    sweeps with cycling over the active set.
    """
    n = xs.shape[0]
    beta = state[1]
    residual = target - state[0] - xs @ beta
    w_sum = float(np.sum(w))
    colnorm = np.zeros(xs.shape[1])
    colnorm[eligible] = (w @ xs[:, eligible] ** 2) / n

    def sweep(columns) -> float:
        max_change = 0.0
        shift = float(w @ residual) / w_sum
        if shift != 0.0:
            state[0] += shift
            residual[:] -= shift
            max_change = abs(shift)
        for j in columns:
            old = beta[j]
            col = xs[:, j]
            z = float((w * col) @ residual) / n + colnorm[j] * old
            new = soft_threshold(z, thresholds[j]) / colnorm[j]
            if new != old:
                residual[:] -= (new - old) * col
                beta[j] = new
                max_change = max(max_change, abs(new - old))
        return max_change

    all_columns = np.flatnonzero(eligible)
    sweeps = 0
    while sweeps < max_sweeps:
        sweeps += 1
        if sweep(all_columns) < tol:
            return True
        active = np.flatnonzero(eligible & (beta != 0))
        while sweeps < max_sweeps:
            sweeps += 1
            if sweep(active) < tol:
                break
    return False


def _solve_at_lambda(xs, y, family, state, thresholds, eligible, tol) -> bool:
    if family == "gaussian":
        return _weighted_cd(xs, y, np.ones(y.shape[0]), state, thresholds, eligible, tol, MAX_SWEEPS)

    # Outer quadratic approximation of the binomial log-likelihood
    for _ in range(MAX_OUTER):
        eta = state[0] + xs @ state[1]
        prob = expit(eta)
        w = np.maximum(prob * (1.0 - prob), BINOMIAL_WEIGHT_FLOOR)
        working = eta + (y - prob) / w
        before_b0, before = state[0], state[1].copy()
        inner = _weighted_cd(xs, working, w, state, thresholds, eligible, tol, MAX_SWEEPS)
        change = max(abs(state[0] - before_b0), float(np.max(np.abs(state[1] - before), initial=0.0)))
        if change < tol:
            return inner
    return False


def _binomial_deviance(y: np.ndarray, eta: np.ndarray) -> float:
    prob = np.clip(expit(eta), PROB_CLAMP, 1.0 - PROB_CLAMP)
    return float(-2.0 * np.sum(y * np.log(prob) + (1.0 - y) * np.log1p(-prob)))


def fit_path(data: Dataset, penalty: PenaltySpec, grid: Optional[LambdaGrid] = None,
             tol: float = CD_TOL, seed: int = DEFAULT_SEED) -> PathSolution:
    """Penalized fits over a decreasing lambda grid with warm starts

    Non-convex penalties are handled by local linear approximation: each
    lambda repeats weighted-Lasso solves, up to LLA_MAX_STEPS, whose thresholds are
    the penalty derivative at the current iterate.
    """
    if penalty.kind == "adaptive_lasso" and penalty.adaptive_weights is None:
        penalty = penalty.with_weights(adaptive_weights(data, penalty.gamma, seed=seed))
    if grid is None:
        grid = lambda_grid(data, penalty)

    xs, means, scales = standardize(data.x)
    y = data.y
    p = data.p
    var_weights = penalty.variable_weights(p)
    eligible = (scales > 0) & np.isfinite(var_weights)

    L = len(grid)
    std_coefs = np.zeros((L, p))
    std_intercepts = np.zeros(L)
    converged = np.zeros(L, dtype=bool)

    ybar = float(np.mean(y))
    if data.family == "binomial":
        ybar = min(max(ybar, PROB_CLAMP), 1.0 - PROB_CLAMP)
        state = [math.log(ybar / (1.0 - ybar)), np.zeros(p)]
        null_deviance = _binomial_deviance(y, np.full(y.shape[0], state[0]))
    else:
        state = [ybar, np.zeros(p)]
        null_deviance = 0.0

    saturated_at = None
    for i, lam in enumerate(grid.values):
        if saturated_at is not None:
            std_intercepts[i], std_coefs[i] = state[0], state[1]
            continue

        ok = True
        settled = not penalty.nonconvex
        steps = LLA_MAX_STEPS if penalty.nonconvex else 1
        for _ in range(steps):
            if penalty.nonconvex:
                thresholds = penalty_derivative(penalty, np.abs(state[1]), lam)
            else:
                thresholds = lam * var_weights
            before = state[1].copy()
            ok = _solve_at_lambda(xs, y, data.family, state, thresholds, eligible, tol)
            if np.max(np.abs(state[1] - before), initial=0.0) < tol:
                settled = True
                break

        std_intercepts[i], std_coefs[i] = state[0], state[1]
        # A non-convex fit still moving after the last re-weighting is not stationary
        converged[i] = ok and settled
        if not ok:
            logger.debug(f"{penalty.kind} path did not converge at lambda index {i} ({lam:.4g})")

        if data.family == "binomial" and null_deviance > 0:
            deviance = _binomial_deviance(y, state[0] + xs @ state[1])
            if 1.0 - deviance / null_deviance >= SATURATION:
                saturated_at = i
                logger.debug(f"{penalty.kind} binomial path saturated at lambda index {i}")

    # Back to the original scale
    safe_scales = np.where(scales > 0, scales, 1.0)
    coefficients = np.where(scales > 0, std_coefs / safe_scales, 0.0)
    intercepts = std_intercepts - coefficients @ means
    supports = [VariableSet.from_mask(row != 0) for row in coefficients]

    return PathSolution(
        grid=grid,
        intercepts=intercepts,
        coefficients=coefficients,
        supports=supports,
        family=data.family,
        penalty=penalty,
        converged=converged,
        means=means,
        scales=scales,
    )


def weights_from_pilot(pilot: np.ndarray, gamma: float) -> np.ndarray:
    """1 / |pilot|^gamma, with +inf where the pilot coefficient is zero"""
    pilot = np.abs(np.asarray(pilot, dtype=float))
    weights = np.full(pilot.shape, np.inf)
    nonzero = pilot > 0
    weights[nonzero] = 1.0 / pilot[nonzero] ** gamma
    return weights


def adaptive_weights(data: Dataset, gamma: float = 1.0, folds: int = 5,
                     seed: int = DEFAULT_SEED) -> np.ndarray:
    """Adaptive-Lasso weights from a cross-validated Lasso pilot on the standardized scale"""
    support, cv, path = select_support(data, PenaltySpec("lasso"), folds, seed)
    pilot = path.std_coefficients[cv.chosen_index]
    if not len(support):
        logger.info("Adaptive Lasso pilot selected no variables; adaptive path is intercept-only")
    return weights_from_pilot(pilot, gamma)


def _fold_splitter(data: Dataset, folds: int, seed: int):
    if data.family == "binomial":
        counts = np.bincount(data.y.astype(int), minlength=2)
        if counts.min() < 2:
            raise PaviError(INVALID_INPUT, "cannot stratify folds: a class has fewer than two observations",
                            f"class counts {counts.tolist()}")
        if counts.min() < folds:
            raise PaviError(INVALID_INPUT, "cannot stratify folds: more folds than members of a class",
                            f"folds={folds}, class counts {counts.tolist()}")
        return StratifiedKFold(n_splits=folds, shuffle=True, random_state=seed)
    return KFold(n_splits=folds, shuffle=True, random_state=seed)


def _prediction_loss(family: str, y: np.ndarray, eta: np.ndarray) -> np.ndarray:
    """Per-observation loss for every lambda column of `eta`"""
    if family == "gaussian":
        return (y[:, None] - eta) ** 2
    prob = np.clip(expit(eta), PROB_CLAMP, 1.0 - PROB_CLAMP)
    return -2.0 * (y[:, None] * np.log(prob) + (1.0 - y[:, None]) * np.log1p(-prob))


def cv_select(data: Dataset, penalty: PenaltySpec, folds: int = 5, seed: int = DEFAULT_SEED,
              grid: Optional[LambdaGrid] = None) -> CvResult:
    """K-fold cross-validation over the full-data lambda grid

    Loss is squared error (gaussian) or binomial deviance, averaged over all
    held-out observations. Ties go to the largest lambda.
    """
    if folds < 2 or data.n < folds:
        raise PaviError(INVALID_INPUT, "need 2 <= folds <= n", f"folds={folds}, n={data.n}")
    if penalty.kind == "adaptive_lasso" and penalty.adaptive_weights is None:
        penalty = penalty.with_weights(adaptive_weights(data, penalty.gamma, folds, seed))
    if grid is None:
        grid = lambda_grid(data, penalty)

    splitter = _fold_splitter(data, folds, seed)
    fold_assignment = np.empty(data.n, dtype=int)
    losses = np.zeros((data.n, len(grid)))
    for k, (train_rows, test_rows) in enumerate(splitter.split(data.x, data.y)):
        fold_assignment[test_rows] = k
        path = fit_path(data.subset(train_rows), penalty, grid, seed=seed)
        eta = path.linear_predictor(data.x[test_rows])
        losses[test_rows] = _prediction_loss(data.family, data.y[test_rows], eta)

    cv_losses = losses.mean(axis=0)
    # argmin returns the first minimizer, i.e. the largest lambda
    chosen = int(np.argmin(cv_losses))
    logger.debug(f"CV {penalty.kind}: chose lambda index {chosen} ({grid.values[chosen]:.4g})")
    return CvResult(
        chosen_lambda=float(grid.values[chosen]),
        chosen_index=chosen,
        cv_losses=cv_losses,
        fold_assignment=fold_assignment,
        grid=grid,
    )


def select_support(data: Dataset, penalty: PenaltySpec, folds: int = 5,
                   seed: int = DEFAULT_SEED) -> Tuple[VariableSet, CvResult, PathSolution]:
    """CV-tuned selection: the support of the full-data path at the chosen lambda"""
    if penalty.kind == "adaptive_lasso" and penalty.adaptive_weights is None:
        penalty = penalty.with_weights(adaptive_weights(data, penalty.gamma, folds, seed))
    cv = cv_select(data, penalty, folds, seed)
    path = fit_path(data, penalty, cv.grid, seed=seed)
    return path.supports[cv.chosen_index], cv, path
