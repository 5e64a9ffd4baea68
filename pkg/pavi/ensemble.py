"""
Candidate model sets harvested from solution paths and their data-driven
weights (ARM by repeated data splitting, or BIC with a complexity prior).
"""

import math
import logging
from dataclasses import dataclass, field
from itertools import combinations
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from joblib import Parallel, delayed
from scipy.special import logsumexp
from sklearn.model_selection import train_test_split

from pavi.errors import PaviError, INVALID_INPUT, UNFITTABLE, TOO_MANY_SUBSETS
from pavi.glm import Dataset, fit, holdout_log_lik
from pavi.measures import CandidateEnsemble, VariableSet
from pavi.paths import PathSolution
from pavi.utils import DEFAULT_SEED, child_random_state, default_threads

logger = logging.getLogger(__name__)

WEIGHTING_METHODS = ("arm", "bicp")
MAX_ALL_SUBSETS_P = 20


@dataclass
class WeightingConfig:
    method: str = "bicp"
    psi: float = 1.0
    splits_L: int = 100
    seed: int = DEFAULT_SEED
    train_fraction: float = 0.5
    n_jobs: Optional[int] = None

    def __post_init__(self):
        if self.method not in WEIGHTING_METHODS:
            raise PaviError(INVALID_INPUT, "unknown weighting method", str(self.method))
        if not self.psi >= 0:
            raise PaviError(INVALID_INPUT, "psi must be nonnegative", f"psi={self.psi}")
        if self.splits_L < 1:
            raise PaviError(INVALID_INPUT, "need at least one split", f"splits_L={self.splits_L}")
        if not 0.0 < self.train_fraction < 1.0:
            raise PaviError(INVALID_INPUT, "train fraction must lie in (0, 1)", str(self.train_fraction))
        if self.n_jobs is None:
            self.n_jobs = default_threads()


@dataclass
class CandidateSet:
    """Distinct candidate supports, always including the empty model"""

    members: List[VariableSet]
    provenance: List[List[Tuple[str, int]]] = field(default_factory=list)

    def __post_init__(self):
        if not self.provenance:
            self.provenance = [[] for _ in self.members]
        if len(self.provenance) != len(self.members):
            raise PaviError(INVALID_INPUT, "provenance does not match candidate members")
        if len(set(self.members)) != len(self.members):
            raise PaviError(INVALID_INPUT, "candidate members must be distinct")
        if VariableSet() not in self.members:
            raise PaviError(INVALID_INPUT, "candidate set must include the empty model")

    def __len__(self) -> int:
        return len(self.members)

    @property
    def sizes(self) -> np.ndarray:
        return np.array([len(m) for m in self.members], dtype=int)


def collect_candidates(paths: Sequence[PathSolution], max_size: Optional[int] = None) -> CandidateSet:
    """Union of all per-lambda supports, deduplicated, with the empty model added"""
    if not paths:
        raise PaviError(INVALID_INPUT, "no solution paths to collect candidates from")

    seen: Dict[VariableSet, List[Tuple[str, int]]] = {}
    for path in paths:
        for i, support in enumerate(path.supports):
            seen.setdefault(support, []).append((path.penalty.kind, i))
    if VariableSet() not in seen:
        seen[VariableSet()] = [("intercept", -1)]

    members = [m for m in seen if max_size is None or len(m) <= max_size]
    dropped = len(seen) - len(members)
    if dropped:
        logger.debug(f"Dropped {dropped} candidates larger than {max_size} variables")
    return CandidateSet(members, [seen[m] for m in members])


def all_subsets(p: int) -> CandidateSet:
    if p > MAX_ALL_SUBSETS_P:
        raise PaviError(TOO_MANY_SUBSETS, "all-subset collection is limited to 20 predictors", f"p={p}")
    if p < 0:
        raise PaviError(INVALID_INPUT, "p must be nonnegative", f"p={p}")
    members = [VariableSet(c) for size in range(p + 1) for c in combinations(range(1, p + 1), size)]
    return CandidateSet(members, [[("all_subsets", k)] for k in range(len(members))])


def complexity_prior(s: int, p: int) -> float:
    """s log(e p / s) + 2 log(s + 2); the first term vanishes at s = 0"""
    if p < 1 or not 0 <= s <= p:
        raise PaviError(INVALID_INPUT, "need 0 <= s <= p and p >= 1", f"s={s}, p={p}")
    search = s * math.log(math.e * p / s) if s > 0 else 0.0
    return search + 2.0 * math.log(s + 2)


def _normalize(log_weights: np.ndarray) -> np.ndarray:
    if not np.any(np.isfinite(log_weights)):
        raise PaviError(UNFITTABLE, "all candidates unfittable")
    return np.exp(log_weights - logsumexp(log_weights))


def _ensemble(candidates: CandidateSet, weights: np.ndarray) -> CandidateEnsemble:
    weights = np.clip(weights, 0.0, None)
    return CandidateEnsemble(list(candidates.members), weights / math.fsum(weights))


def bicp_weights(data: Dataset, candidates: CandidateSet, config: WeightingConfig) -> CandidateEnsemble:
    """Weights proportional to exp(-BIC/2 - psi * C_k) from full-data refits"""
    log_weights = np.full(len(candidates), -np.inf)
    for k, support in enumerate(candidates.members):
        try:
            model = fit(data, support)
        except PaviError as e:
            logger.debug(f"Candidate {support} unfittable on full data: {str(e)}")
            continue
        s = len(support)
        criterion = -2.0 * model.log_lik + s * math.log(data.n)
        log_weights[k] = -0.5 * criterion - config.psi * complexity_prior(s, data.p)
    return _ensemble(candidates, _normalize(log_weights))


def split_indices(data: Dataset, config: WeightingConfig, split_index: int) -> Tuple[np.ndarray, np.ndarray]:
    """Training and test rows of ARM split `split_index`"""
    n_train = int(math.floor(data.n * config.train_fraction))
    if n_train < 2 or data.n - n_train < 1:
        raise PaviError(INVALID_INPUT, "sample too small to split", f"n={data.n}")
    try:
        return train_test_split(
            np.arange(data.n),
            train_size=n_train,
            random_state=child_random_state(config.seed, split_index),
            stratify=data.y if data.family == "binomial" else None,
        )
    except ValueError as e:
        raise PaviError(INVALID_INPUT, "cannot stratify ARM split", str(e))


def arm_split_weights(data: Dataset, candidates: CandidateSet, config: WeightingConfig,
                      split_index: int) -> np.ndarray:
    """Normalized weights from one training/test split"""
    train_rows, test_rows = split_indices(data, config, split_index)
    train, test = data.subset(train_rows), data.subset(test_rows)

    log_weights = np.full(len(candidates), -np.inf)
    for k, support in enumerate(candidates.members):
        s = len(support)
        if s > train.n - 2:
            continue
        try:
            model = fit(train, support)
        except PaviError as e:
            logger.debug(f"Candidate {support} unfittable on split {split_index}: {str(e)}")
            continue
        log_weights[k] = -config.psi * complexity_prior(s, data.p) + holdout_log_lik(model, test)
    return _normalize(log_weights)


def arm_weights(data: Dataset, candidates: CandidateSet, config: WeightingConfig) -> CandidateEnsemble:
    """ARM weights: per-split weights averaged over splits_L random splits

    Every split draws its own stream from (seed, split index) and the average
    is taken in split order, so the result does not depend on n_jobs.
    """
    logger.info(f"ARM weighting of {len(candidates)} candidates over {config.splits_L} splits "
                f"(n_jobs={config.n_jobs})")
    # Threads keep every split in this process, so BLAS settings and results match n_jobs=1
    per_split = Parallel(n_jobs=config.n_jobs, prefer="threads")(
        delayed(arm_split_weights)(data, candidates, config, index) for index in range(config.splits_L)
    )
    weights = np.mean(np.vstack(per_split), axis=0)
    return _ensemble(candidates, weights)


def compute_weights(data: Dataset, candidates: CandidateSet, config: WeightingConfig) -> CandidateEnsemble:
    if config.method == "arm":
        return arm_weights(data, candidates, config)
    return bicp_weights(data, candidates, config)

