"""
Simulation harness: the five benchmark designs for both families, the four
CV-tuned selectors as models-under-check, and aggregation of true versus
estimated measures over seeded replications.
"""

import math
import logging
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from joblib import Parallel, delayed
from scipy import linalg
from scipy.special import expit

from pavi.errors import PaviError, INVALID_INPUT, UNKNOWN_EXAMPLE, FAMILY_MISMATCH
from pavi.ensemble import WeightingConfig, collect_candidates, compute_weights
from pavi.glm import Dataset
from pavi.measures import VariableSet, assess, f_measure, g_measure, weighted_deviation
from pavi.paths import PathSolution, PenaltySpec, select_support
from pavi.utils import DEFAULT_SEED, FAMILIES, child_random_state, default_threads, log_progress

logger = logging.getLogger(__name__)

METHODS = ("lasso", "adaptive_lasso", "mcp", "scad")
CANDIDATE_PENALTIES = ("lasso", "scad", "mcp")
CV_FOLDS = 5
AR_RHO = 0.4
BLOCK_SIZE = 15
MAX_CANDIDATE_SIZE = 200
DEFAULT_SIGMAS = tuple(np.linspace(0.01, 5.0, 9))

# Example id -> (n, p, coefficient pattern, covariance structure)
EXAMPLES = {
    1: (200, 8, "leading", "identity"),
    2: (1000, 8, "leading", "identity"),
    3: (200, 2000, "leading", "identity"),
    4: (200, 30, "tiered", "ar"),
    5: (200, 200, "tiered", "block_ar"),
}
LEADING_BETA = (3.0, 1.5, 2.0)
TIERED_BETA = (10.5,) * 5 + (5.5,) * 5 + (0.5,) * 5

SUMMARY_MEASURES = ("F", "G", "F_hat", "G_hat", "d_F", "d_G", "sd_F", "sd_G", "deviation", "size")


@dataclass
class ScenarioSpec:
    example_id: int = 1
    family: str = "binomial"
    n: Optional[int] = None
    p: Optional[int] = None
    sigma: float = 1.0
    seed: int = DEFAULT_SEED

    def __post_init__(self):
        if self.example_id not in EXAMPLES:
            raise PaviError(UNKNOWN_EXAMPLE, "unknown simulation example", f"example {self.example_id}")
        if self.family not in FAMILIES:
            raise PaviError(INVALID_INPUT, "unknown family", str(self.family))
        default_n, default_p, pattern, structure = EXAMPLES[self.example_id]
        self.n = default_n if self.n is None else int(self.n)
        self.p = default_p if self.p is None else int(self.p)
        needed = len(LEADING_BETA) if pattern == "leading" else len(TIERED_BETA)
        if structure == "block_ar":
            needed = BLOCK_SIZE + 1
        if self.p < needed:
            raise PaviError(INVALID_INPUT, f"example {self.example_id} needs p >= {needed}", f"p={self.p}")
        if self.n < 10:
            raise PaviError(INVALID_INPUT, "simulations need n >= 10", f"n={self.n}")
        if not self.sigma > 0:
            raise PaviError(INVALID_INPUT, "sigma must be positive", f"sigma={self.sigma}")


@dataclass
class Scenario:
    data: Dataset
    truth: VariableSet
    beta: np.ndarray


@dataclass
class ReplicationReport:
    """True and estimated measures of every selector under every weighting"""

    replication: int
    spec: ScenarioSpec
    truth: VariableSet
    selections: Dict[str, VariableSet]
    records: List[Dict[str, object]] = field(default_factory=list)
    n_candidates: int = 0

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.records)


@dataclass
class AggregateTable:
    """Means and standard errors per method and weighting over R replications"""

    frame: pd.DataFrame
    replications: pd.DataFrame


@dataclass
class SweepResult:
    sigmas: List[float]
    tables: Dict[float, AggregateTable]

    def tidy(self) -> pd.DataFrame:
        """One row per (sigma, method, weighting, measure) with mean and se"""
        rows = []
        for sigma in self.sigmas:
            frame = self.tables[sigma].frame
            for _, row in frame.iterrows():
                for measure in ("F", "G", "F_hat", "G_hat", "d_F", "d_G"):
                    rows.append({
                        "sigma": sigma,
                        "method": row["method"],
                        "weighting": row["weighting"],
                        "measure": measure,
                        "mean": row[measure],
                        "se": row[f"se_{measure}"],
                    })
        return pd.DataFrame(rows, columns=["sigma", "method", "weighting", "measure", "mean", "se"])


def true_coefficients(spec: ScenarioSpec) -> np.ndarray:
    pattern = EXAMPLES[spec.example_id][2]
    leading = LEADING_BETA if pattern == "leading" else TIERED_BETA
    beta = np.zeros(spec.p)
    beta[:len(leading)] = leading
    return beta


def _ar_block(size: int) -> np.ndarray:
    return linalg.toeplitz(AR_RHO ** np.arange(size))


def covariance(spec: ScenarioSpec) -> np.ndarray:
    """Predictor covariance: identity, AR(0.4) or two independent AR(0.4) blocks"""
    structure = EXAMPLES[spec.example_id][3]
    if structure == "identity":
        return np.eye(spec.p)
    if structure == "ar":
        return _ar_block(spec.p)
    return linalg.block_diag(_ar_block(BLOCK_SIZE), _ar_block(spec.p - BLOCK_SIZE))


@lru_cache(maxsize=16)
def _covariance_factor(example_id: int, p: int) -> Optional[np.ndarray]:
    """Lower Cholesky factor, computed once per design; None for the identity"""
    spec = ScenarioSpec(example_id=example_id, p=p)
    if EXAMPLES[example_id][3] == "identity":
        return None
    return linalg.cholesky(covariance(spec), lower=True)


def generate_scenario(spec: ScenarioSpec) -> Scenario:
    """Draw one dataset and its true support from the design in `spec`"""
    rng = np.random.default_rng(spec.seed)
    x = rng.standard_normal((spec.n, spec.p))
    factor = _covariance_factor(spec.example_id, spec.p)
    if factor is not None:
        x = x @ factor.T

    beta = true_coefficients(spec)
    eta = x @ beta
    if spec.family == "binomial":
        y = rng.binomial(1, expit(eta)).astype(float)
    else:
        y = eta + spec.sigma * rng.standard_normal(spec.n)

    truth = VariableSet.from_mask(beta != 0)
    return Scenario(Dataset(x, y, spec.family), truth, beta)


def run_selectors(data: Dataset, seed: int, folds: int = CV_FOLDS,
                  methods: Sequence[str] = METHODS) -> Dict[str, Tuple[VariableSet, PathSolution]]:
    """CV-tuned selection per method with its full-data path; failures are logged and skipped"""
    results = {}
    for method in methods:
        try:
            support, _, path = select_support(data, PenaltySpec(method), folds, seed)
            results[method] = (support, path)
        except Exception as e:
            logger.error(f"Selector {method} failed: {str(e)}")
    return results


def run_models_under_check(data: Dataset, seed: int, folds: int = CV_FOLDS) -> Dict[str, VariableSet]:
    return {method: support for method, (support, _) in run_selectors(data, seed, folds).items()}


def replicate_spec(spec: ScenarioSpec, replication: int) -> ScenarioSpec:
    """Scenario of replication r, seeded from (master seed, r)"""
    return replace(spec, seed=child_random_state(spec.seed, replication))


def run_replication(spec: ScenarioSpec, configs: Sequence[WeightingConfig],
                    replication: int = 0) -> ReplicationReport:
    """Generate data, select, build candidates, weight and assess"""
    scenario = generate_scenario(spec)
    data, truth = scenario.data, scenario.truth

    selectors = run_selectors(data, seed=child_random_state(spec.seed, 1))
    paths = [selectors[m][1] for m in CANDIDATE_PENALTIES if m in selectors]
    candidates = collect_candidates(paths, max_size=min(data.n - 4, MAX_CANDIDATE_SIZE))

    report = ReplicationReport(
        replication=replication,
        spec=spec,
        truth=truth,
        selections={m: s for m, (s, _) in selectors.items()},
        n_candidates=len(candidates),
    )
    for config in configs:
        config = replace(config, seed=child_random_state(config.seed, spec.seed))
        ensemble = compute_weights(data, candidates, config)
        deviation = weighted_deviation(ensemble, truth)
        for method in METHODS:
            if method not in selectors:
                continue
            selected = selectors[method][0]
            assessment = assess(selected, ensemble, method)
            f_true, g_true = f_measure(selected, truth), g_measure(selected, truth)
            report.records.append({
                "replication": replication,
                "method": method,
                "weighting": config.method,
                "selected": str(selected),
                "size": len(selected),
                "F": f_true,
                "G": g_true,
                "F_hat": assessment.f_hat,
                "G_hat": assessment.g_hat,
                "d_F": abs(assessment.f_hat - f_true),
                "d_G": abs(assessment.g_hat - g_true),
                "sd_F": assessment.sd_f,
                "sd_G": assessment.sd_g,
                "deviation": deviation,
            })
    return report


def run_batch(spec: ScenarioSpec, reps: int, configs: Sequence[WeightingConfig],
              n_jobs: Optional[int] = None) -> List[ReplicationReport]:
    """Run `reps` replications in parallel; results come back in replication order"""
    if reps < 1:
        raise PaviError(INVALID_INPUT, "need at least one replication", f"reps={reps}")
    n_jobs = default_threads() if n_jobs is None else n_jobs
    inner = [replace(c, n_jobs=1) for c in configs]
    logger.info(f"Example {spec.example_id} ({spec.family}, n={spec.n}, p={spec.p}): "
                f"{reps} replications on {n_jobs} workers")

    reports = []
    results = Parallel(n_jobs=n_jobs, return_as="generator")(
        delayed(run_replication)(replicate_spec(spec, r), inner, r) for r in range(reps)
    )
    for done, report in enumerate(results, start=1):
        reports.append(report)
        log_progress(logger, done, reps, "Replications")
    return reports


def aggregate(reports: Sequence[ReplicationReport]) -> AggregateTable:
    """Means and standard errors (sample sd / sqrt(R)) per method and weighting"""
    replications = pd.concat([r.to_frame() for r in reports], ignore_index=True)
    if replications.empty:
        raise PaviError(INVALID_INPUT, "no replication records to aggregate")

    rows = []
    weightings = list(dict.fromkeys(replications["weighting"]))
    for method in METHODS:
        for weighting in weightings:
            group = replications[(replications["method"] == method) & (replications["weighting"] == weighting)]
            if group.empty:
                continue
            count = len(group)
            row = {"method": method, "weighting": weighting, "reps": count}
            for measure in SUMMARY_MEASURES:
                values = group[measure].to_numpy(dtype=float)
                row[measure] = float(np.mean(values))
                row[f"se_{measure}"] = float(np.std(values, ddof=1) / math.sqrt(count)) if count > 1 else 0.0
            rows.append(row)
    return AggregateTable(frame=pd.DataFrame(rows), replications=replications)


def sigma_sweep(spec: ScenarioSpec, sigmas: Optional[Sequence[float]] = None, reps: int = 100,
                configs: Optional[Sequence[WeightingConfig]] = None,
                n_jobs: Optional[int] = None) -> SweepResult:
    """Aggregate tables over a grid of noise levels (gaussian only)

    Every sigma reuses the same replication seeds, so the curves differ only
    through the noise level.
    """
    if spec.family != "gaussian":
        raise PaviError(FAMILY_MISMATCH, "sigma sweeps need gaussian data", spec.family)
    sigmas = [float(s) for s in (DEFAULT_SIGMAS if sigmas is None else sigmas)]
    configs = configs or [WeightingConfig("arm"), WeightingConfig("bicp")]

    tables = {}
    for i, sigma in enumerate(sigmas, start=1):
        logger.info(f"Sigma {sigma:.4g} ({i}/{len(sigmas)})")
        tables[sigma] = aggregate(run_batch(replace(spec, sigma=sigma), reps, configs, n_jobs))
    return SweepResult(sigmas=sigmas, tables=tables)
