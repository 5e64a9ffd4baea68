"""
Unpenalized Gaussian and logistic fits restricted to a support, holdout
likelihoods and AIC/BIC/deviance diagnostics.
"""

import math
import logging
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np
from scipy import linalg
from scipy.special import expit
from sklearn.model_selection import train_test_split

from pavi.errors import (
    PaviError,
    INVALID_INPUT,
    CAPACITY,
    FAMILY_MISMATCH,
    DIMENSION_MISMATCH,
)
from pavi.measures import VariableSet
from pavi.utils import FAMILIES, DEFAULT_SEED, child_random_state

logger = logging.getLogger(__name__)

# Numerical settings
SIGMA_FLOOR = 1e-8
PROB_CLAMP = 1e-10
IRLS_TOL = 1e-8
IRLS_MAX_ITER = 100
MAX_HALVINGS = 20
WEIGHT_FLOOR = 1e-12
# Fitted probabilities this close to 0 or 1 signal separation
SEPARATION_ETA = math.log(1e8)


@dataclass
class Dataset:
    """Design matrix and response with a family tag."""

    x: np.ndarray
    y: np.ndarray
    family: str = "gaussian"
    column_names: Optional[List[str]] = None

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=float)
        self.y = np.asarray(self.y, dtype=float).reshape(-1)
        if self.x.ndim == 1:
            self.x = self.x.reshape(-1, 1)
        if self.x.ndim != 2:
            raise PaviError(DIMENSION_MISMATCH, "design matrix must be two-dimensional", str(self.x.shape))
        if self.x.shape[0] != self.y.shape[0]:
            raise PaviError(DIMENSION_MISMATCH, "design rows and response length differ",
                            f"{self.x.shape[0]} vs {self.y.shape[0]}")
        if self.family not in FAMILIES:
            raise PaviError(INVALID_INPUT, "unknown family", str(self.family))
        if not (np.all(np.isfinite(self.x)) and np.all(np.isfinite(self.y))):
            raise PaviError(INVALID_INPUT, "non-finite entries in data")
        if self.family == "binomial" and not np.all(np.isin(self.y, (0.0, 1.0))):
            raise PaviError(INVALID_INPUT, "binomial response must be 0/1",
                            f"values {sorted(set(np.unique(self.y)) - {0.0, 1.0})[:5]}")
        if self.column_names is not None and len(self.column_names) != self.x.shape[1]:
            raise PaviError(DIMENSION_MISMATCH, "column names do not match predictors",
                            f"{len(self.column_names)} names for p={self.x.shape[1]}")

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def p(self) -> int:
        return self.x.shape[1]

    def subset(self, rows) -> "Dataset":
        rows = np.asarray(rows)
        return Dataset(self.x[rows], self.y[rows], self.family, self.column_names)

    def columns(self, support: VariableSet) -> np.ndarray:
        support.validate(self.p)
        return self.x[:, support.zero_based()]


@dataclass
class FittedModel:
    support: VariableSet
    family: str
    intercept: float
    coefficients: np.ndarray
    log_lik: float
    converged: bool
    n_obs: int
    n_features: int
    sigma_hat: Optional[float] = None
    history: List[float] = field(default_factory=list)


@dataclass
class FitDiagnostics:
    """Information criteria of one refit.

    `deviance` is the unit-scale deviance: the residual sum of squares for
    gaussian fits, not 2 * (saturated - fitted) log-likelihood under the
    estimated scale. For binomial fits it is -2 * log_lik.
    """

    aic: float
    bic: float
    deviance: float
    log_lik: float
    n_params: int


@dataclass
class AccuracySummary:
    """Repeated-split test accuracy of a logistic refit."""

    mean: float
    se: float
    accuracies: np.ndarray


def _check_family(data: Dataset, family: str):
    if data.family != family:
        raise PaviError(FAMILY_MISMATCH, f"{family} fit requested on {data.family} data")


def _check_capacity(data: Dataset, support: VariableSet):
    if len(support) > data.n - 2:
        raise PaviError(CAPACITY, "support exceeds capacity", f"|support|={len(support)}, n={data.n}")


def _design(data: Dataset, support: VariableSet) -> np.ndarray:
    return np.column_stack([np.ones(data.n), data.columns(support)])


def gaussian_log_lik(residuals: np.ndarray, sigma: float) -> float:
    n = residuals.shape[0]
    return -0.5 * n * math.log(2 * math.pi) - n * math.log(sigma) - float(residuals @ residuals) / (2 * sigma ** 2)


def bernoulli_log_lik(y: np.ndarray, prob: np.ndarray) -> float:
    prob = np.clip(prob, PROB_CLAMP, 1.0 - PROB_CLAMP)
    return float(np.sum(y * np.log(prob) + (1.0 - y) * np.log1p(-prob)))


def fit_gaussian(data: Dataset, support: VariableSet) -> FittedModel:
    """Least squares with an intercept on the columns in `support`"""
    _check_family(data, "gaussian")
    _check_capacity(data, support)
    design = _design(data, support)

    # gelsd is rank revealing and returns the minimal-norm solution
    beta, _, rank, _ = linalg.lstsq(design, data.y, lapack_driver="gelsd")
    residuals = data.y - design @ beta
    sigma = max(math.sqrt(float(residuals @ residuals) / data.n), SIGMA_FLOOR)
    converged = rank == design.shape[1]
    if not converged:
        logger.debug(f"Rank-deficient gaussian design for support {support}: rank {rank} < {design.shape[1]}")

    return FittedModel(
        support=support,
        family="gaussian",
        intercept=float(beta[0]),
        coefficients=beta[1:].copy(),
        log_lik=gaussian_log_lik(residuals, sigma),
        converged=bool(converged),
        n_obs=data.n,
        n_features=data.p,
        sigma_hat=sigma,
    )


def _irls_step(design: np.ndarray, y: np.ndarray, beta: np.ndarray):
    eta = design @ beta
    prob = expit(eta)
    weights = np.maximum(prob * (1.0 - prob), WEIGHT_FLOOR)
    working = eta + (y - prob) / weights
    root = np.sqrt(weights)
    target, _, rank, _ = linalg.lstsq(design * root[:, None], working * root, lapack_driver="gelsd")
    return target, rank


def fit_logistic(data: Dataset, support: VariableSet) -> FittedModel:
    """Logistic maximum likelihood by IRLS with step-halving.

    Reports converged=False when fitted probabilities run into 0 or 1
    (separation) or when the design is rank deficient.
    """
    _check_family(data, "binomial")
    _check_capacity(data, support)
    design = _design(data, support)
    y = data.y

    ybar = min(max(float(np.mean(y)), PROB_CLAMP), 1.0 - PROB_CLAMP)
    beta = np.zeros(design.shape[1])
    beta[0] = math.log(ybar / (1.0 - ybar))
    log_lik = bernoulli_log_lik(y, expit(design @ beta))
    history = [log_lik]
    converged = False
    full_rank = True

    for iteration in range(IRLS_MAX_ITER):
        target, rank = _irls_step(design, y, beta)
        full_rank = rank == design.shape[1]
        step = target - beta

        # Step-halving keeps the log-likelihood non-decreasing
        t = 1.0
        candidate = beta + step
        new_log_lik = bernoulli_log_lik(y, expit(design @ candidate))
        halvings = 0
        while new_log_lik < log_lik and halvings < MAX_HALVINGS:
            t *= 0.5
            candidate = beta + t * step
            new_log_lik = bernoulli_log_lik(y, expit(design @ candidate))
            halvings += 1
        if new_log_lik < log_lik:
            logger.debug(f"IRLS stalled after {iteration} iterations for support {support}")
            break

        change = abs(new_log_lik - log_lik) / (abs(new_log_lik) + 0.1)
        beta, log_lik = candidate, new_log_lik
        history.append(log_lik)

        if change < IRLS_TOL:
            converged = True
            break

    if np.max(np.abs(design @ beta)) > SEPARATION_ETA:
        logger.debug(f"Separation detected for support {support}")
        converged = False

    if converged:
        # One polishing Newton step drives the score to round-off
        target, _ = _irls_step(design, y, beta)
        polished = bernoulli_log_lik(y, expit(design @ target))
        if polished >= log_lik:
            beta, log_lik = target, polished
            history.append(log_lik)

    return FittedModel(
        support=support,
        family="binomial",
        intercept=float(beta[0]),
        coefficients=beta[1:].copy(),
        log_lik=log_lik,
        converged=bool(converged and full_rank),
        n_obs=data.n,
        n_features=data.p,
        history=history,
    )


def fit(data: Dataset, support: VariableSet) -> FittedModel:
    """Dispatch on the data family"""
    if data.family == "gaussian":
        return fit_gaussian(data, support)
    return fit_logistic(data, support)


def linear_predictor(model: FittedModel, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim != 2 or x.shape[1] != model.n_features:
        raise PaviError(DIMENSION_MISMATCH, "predictor count differs from the fitted model",
                        f"{x.shape[-1]} vs {model.n_features}")
    return model.intercept + x[:, model.support.zero_based()] @ model.coefficients


def predict(model: FittedModel, x: np.ndarray) -> np.ndarray:
    """Fitted mean for gaussian models, probability for logistic ones"""
    eta = linear_predictor(model, x)
    return eta if model.family == "gaussian" else expit(eta)


def holdout_log_lik(model: FittedModel, test: Dataset) -> float:
    """Log-likelihood of held-out data under a model fitted elsewhere.

    The gaussian version drops the shared -log(2 pi)/2 constant and uses the
    training scale estimate.
    """
    if test.family != model.family:
        raise PaviError(FAMILY_MISMATCH, "holdout family differs from the fitted model",
                        f"{test.family} vs {model.family}")
    if test.p != model.n_features:
        raise PaviError(DIMENSION_MISMATCH, "holdout predictor count differs from the fitted model",
                        f"{test.p} vs {model.n_features}")
    fitted = predict(model, test.x)
    if model.family == "binomial":
        return bernoulli_log_lik(test.y, fitted)
    sigma = model.sigma_hat
    residuals = test.y - fitted
    return float(-test.n * math.log(sigma) - (residuals @ residuals) / (2 * sigma ** 2))


def diagnostics(model: FittedModel, data: Dataset) -> FitDiagnostics:
    """AIC, BIC and deviance on `data`; the intercept counts as a parameter.

    Gaussian deviance is the residual sum of squares (unit-scale deviance);
    binomial deviance is -2 log-likelihood since the saturated model has
    log-likelihood 0.
    """
    fitted = predict(model, data.x)
    if model.family == "binomial":
        log_lik = bernoulli_log_lik(data.y, fitted)
        deviance = max(-2.0 * log_lik, 0.0)
    else:
        residuals = data.y - fitted
        log_lik = gaussian_log_lik(residuals, model.sigma_hat)
        deviance = float(residuals @ residuals)
    n_params = len(model.support) + 1
    return FitDiagnostics(
        aic=-2.0 * log_lik + 2 * n_params,
        bic=-2.0 * log_lik + n_params * math.log(data.n),
        deviance=deviance,
        log_lik=log_lik,
        n_params=n_params,
    )


def split_accuracy(data: Dataset, support: VariableSet, test_fraction: float = 0.2,
                   reps: int = 100, seed: int = DEFAULT_SEED) -> AccuracySummary:
    """Mean and standard error of test accuracy over repeated stratified splits"""
    _check_family(data, "binomial")
    if not 0.0 < test_fraction < 1.0:
        raise PaviError(INVALID_INPUT, "test fraction must lie in (0, 1)", str(test_fraction))
    n_train = data.n - int(math.ceil(data.n * test_fraction))
    if len(support) > n_train - 2:
        raise PaviError(CAPACITY, "support exceeds capacity", f"|support|={len(support)}, n_train={n_train}")

    rows = np.arange(data.n)
    accuracies = np.empty(reps)
    for r in range(reps):
        try:
            train_rows, test_rows = train_test_split(
                rows, test_size=test_fraction, random_state=child_random_state(seed, r), stratify=data.y
            )
        except ValueError as e:
            raise PaviError(INVALID_INPUT, "cannot stratify accuracy splits", str(e))
        model = fit_logistic(data.subset(train_rows), support)
        test = data.subset(test_rows)
        accuracies[r] = float(np.mean((predict(model, test.x) >= 0.5) == (test.y == 1.0)))

    se = float(np.std(accuracies, ddof=1) / math.sqrt(reps)) if reps > 1 else 0.0
    return AccuracySummary(mean=float(np.mean(accuracies)), se=se, accuracies=accuracies)
