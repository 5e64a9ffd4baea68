"""Set arithmetic and the true and estimated F- and G-measures."""

from __future__ import annotations

import math
import logging
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from pavi.errors import PaviError, INVALID_INPUT, PARSE_ERROR

logger = logging.getLogger(__name__)

# Tolerance on the total ensemble weight
WEIGHT_SUM_TOL = 1e-10

MEASURES = ("F", "G")


@dataclass(frozen=True)
class VariableSet:
    """Sorted, duplicate-free collection of 1-based predictor indices."""

    indices: Tuple[int, ...] = ()
    members: frozenset = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        indices = tuple(int(i) for i in self.indices)
        for prev, cur in zip(indices, indices[1:]):
            if cur <= prev:
                raise PaviError(INVALID_INPUT, "variable indices must be strictly increasing", str(indices))
        if indices and indices[0] < 1:
            raise PaviError(INVALID_INPUT, "variable indices are 1-based", str(indices))
        object.__setattr__(self, "indices", indices)
        object.__setattr__(self, "members", frozenset(indices))

    @classmethod
    def of(cls, values: Iterable[int], p: Optional[int] = None) -> "VariableSet":
        """Build from any iterable; duplicates are an error, order is not."""
        values = [int(v) for v in values]
        if len(set(values)) != len(values):
            raise PaviError(INVALID_INPUT, "duplicate variable index", str(values))
        result = cls(tuple(sorted(values)))
        if p is not None:
            result.validate(p)
        return result

    @classmethod
    def from_mask(cls, mask: Sequence[bool]) -> "VariableSet":
        return cls(tuple(int(i) + 1 for i in np.flatnonzero(np.asarray(mask))))

    @classmethod
    def parse(cls, text: str, p: Optional[int] = None) -> "VariableSet":
        """Parse the comma-separated text form, e.g. "1,2,7"; "" is the empty set."""
        text = text.strip()
        if not text:
            return cls()
        try:
            values = [int(token) for token in text.split(",")]
        except ValueError:
            raise PaviError(PARSE_ERROR, "variable set is not a list of integers", text)
        return cls.of(values, p)

    def validate(self, p: int) -> "VariableSet":
        if self.indices and self.indices[-1] > p:
            raise PaviError(INVALID_INPUT, "variable index exceeds the number of predictors",
                            f"index {self.indices[-1]} > p={p}")
        return self

    def zero_based(self) -> np.ndarray:
        return np.asarray(self.indices, dtype=int) - 1

    def __len__(self) -> int:
        return len(self.indices)

    def __iter__(self):
        return iter(self.indices)

    def __contains__(self, item) -> bool:
        return item in self.members

    def __str__(self) -> str:
        return ",".join(str(i) for i in self.indices)


@dataclass
class CandidateEnsemble:
    """Distinct candidate supports with nonnegative weights summing to one."""

    candidates: List[VariableSet]
    weights: np.ndarray

    def __post_init__(self):
        self.candidates = list(self.candidates)
        self.weights = np.asarray(self.weights, dtype=float).reshape(-1)
        if not self.candidates:
            raise PaviError(INVALID_INPUT, "ensemble has no candidates")
        if len(self.candidates) != len(self.weights):
            raise PaviError(INVALID_INPUT, "candidates and weights differ in length",
                            f"{len(self.candidates)} vs {len(self.weights)}")
        if not np.all(np.isfinite(self.weights)) or np.any(self.weights < 0):
            raise PaviError(INVALID_INPUT, "ensemble weights must be finite and nonnegative")
        total = math.fsum(self.weights)
        if abs(total - 1.0) > WEIGHT_SUM_TOL:
            raise PaviError(INVALID_INPUT, "ensemble weights must sum to 1", f"sum={total!r}")
        if len(set(self.candidates)) != len(self.candidates):
            raise PaviError(INVALID_INPUT, "ensemble candidates must be distinct")

    @classmethod
    def point_mass(cls, support: VariableSet) -> "CandidateEnsemble":
        return cls([support], np.ones(1))

    def __len__(self) -> int:
        return len(self.candidates)

    def mixed_with(self, other: "CandidateEnsemble", t: float) -> "CandidateEnsemble":
        """Mixture t*self + (1-t)*other over the union of both candidate lists."""
        weights: Dict[VariableSet, float] = {}
        for support, w in zip(self.candidates, self.weights):
            weights[support] = weights.get(support, 0.0) + t * w
        for support, w in zip(other.candidates, other.weights):
            weights[support] = weights.get(support, 0.0) + (1.0 - t) * w
        return CandidateEnsemble(list(weights), np.array(list(weights.values())))


@dataclass
class CandidateContribution:
    candidate_id: int
    support: VariableSet
    weight: float
    f: float
    g: float
    precision: float
    recall: float


@dataclass
class AssessmentReport:
    """Estimated measures for one model-under-check plus per-candidate detail."""

    model: VariableSet
    f_hat: float
    g_hat: float
    sd_f: float
    sd_g: float
    pr_hat: float
    re_hat: float
    per_candidate: List[CandidateContribution]
    name: str = ""

    def summary(self) -> Dict[str, object]:
        return {
            "model": self.name,
            "variables": str(self.model),
            "size": len(self.model),
            "F_hat": self.f_hat,
            "G_hat": self.g_hat,
            "sd_F": self.sd_f,
            "sd_G": self.sd_g,
            "precision_hat": self.pr_hat,
            "recall_hat": self.re_hat,
        }

    def contributions_frame(self) -> pd.DataFrame:
        return pd.DataFrame([
            {
                "model": self.name,
                "candidate": c.candidate_id,
                "variables": str(c.support),
                "weight": c.weight,
                "F": c.f,
                "G": c.g,
                "precision": c.precision,
                "recall": c.recall,
            }
            for c in self.per_candidate
        ])


def _counts(a: VariableSet, b: VariableSet) -> Tuple[int, int, int]:
    return len(a.members & b.members), len(a), len(b)


def sym_diff_size(a: VariableSet, b: VariableSet) -> int:
    """Number of indices in exactly one of the two sets."""
    return len(a.members ^ b.members)


def precision(selected: VariableSet, reference: VariableSet) -> float:
    """Fraction of `selected` that lies in `reference`.

    An empty selection scores 1 against an empty reference and 0 otherwise.
    """
    common, n_selected, n_reference = _counts(selected, reference)
    if n_selected == 0:
        return 1.0 if n_reference == 0 else 0.0
    return common / n_selected


def recall(selected: VariableSet, reference: VariableSet) -> float:
    """Fraction of `reference` recovered by `selected`."""
    common, n_selected, n_reference = _counts(selected, reference)
    if n_reference == 0:
        return 1.0 if n_selected == 0 else 0.0
    return common / n_reference


def f_measure(a: VariableSet, b: VariableSet) -> float:
    """Harmonic mean of precision and recall, 2|a∩b| / (|a| + |b|).

    Parameters
    ----------
    a, b : VariableSet
        The two selections; the measure is symmetric so the order does not
        matter.

    Returns
    -------
    float
        Value in [0, 1]; 1 when both sets are empty, 0 when exactly one is.

    Examples
    --------
    >>> f_measure(VariableSet((1, 2, 3, 7)), VariableSet((1, 2, 3)))
    0.8571428571428571
    """
    common, n_a, n_b = _counts(a, b)
    if n_a == 0 and n_b == 0:
        return 1.0
    if n_a == 0 or n_b == 0:
        return 0.0
    return (2 * common) / (n_a + n_b)


def g_measure(a: VariableSet, b: VariableSet) -> float:
    """Geometric mean of precision and recall, |a∩b| / sqrt(|a| |b|).

    Same empty-set conventions as :func:`f_measure`.
    """
    common, n_a, n_b = _counts(a, b)
    if n_a == 0 and n_b == 0:
        return 1.0
    if n_a == 0 or n_b == 0:
        return 0.0
    return common / math.sqrt(n_a * n_b)


_MEASURE_FUNCTIONS = {"F": f_measure, "G": g_measure, "precision": precision, "recall": recall}


def _measure_function(measure: str):
    key = measure.upper() if measure.upper() in MEASURES else measure.lower()
    if key not in _MEASURE_FUNCTIONS:
        raise PaviError(INVALID_INPUT, "unknown measure", measure)
    return _MEASURE_FUNCTIONS[key]


def candidate_values(model: VariableSet, ensemble: CandidateEnsemble, measure: str) -> np.ndarray:
    """Per-candidate measure of the model-under-check against every candidate."""
    func = _measure_function(measure)
    return np.array([func(model, candidate) for candidate in ensemble.candidates])


def _weighted_mean(values: np.ndarray, weights: np.ndarray) -> float:
    return math.fsum(values * weights)


def estimate_f(model: VariableSet, ensemble: CandidateEnsemble) -> float:
    """Weighted average of F(model, candidate) over the ensemble."""
    return _weighted_mean(candidate_values(model, ensemble, "F"), ensemble.weights)


def estimate_g(model: VariableSet, ensemble: CandidateEnsemble) -> float:
    """Weighted average of G(model, candidate) over the ensemble."""
    return _weighted_mean(candidate_values(model, ensemble, "G"), ensemble.weights)


def estimate_precision(model: VariableSet, ensemble: CandidateEnsemble) -> float:
    return _weighted_mean(candidate_values(model, ensemble, "precision"), ensemble.weights)


def estimate_recall(model: VariableSet, ensemble: CandidateEnsemble) -> float:
    return _weighted_mean(candidate_values(model, ensemble, "recall"), ensemble.weights)


def sd_estimate(model: VariableSet, ensemble: CandidateEnsemble, measure: str = "F") -> float:
    """Weighted root-mean-square deviation of the per-candidate measure about its estimate."""
    values = candidate_values(model, ensemble, measure)
    centre = _weighted_mean(values, ensemble.weights)
    return math.sqrt(math.fsum(ensemble.weights * (values - centre) ** 2))


def assess(model: VariableSet, ensemble: CandidateEnsemble, name: str = "") -> AssessmentReport:
    """Full assessment of one model-under-check against a weighted ensemble."""
    f_values = candidate_values(model, ensemble, "F")
    g_values = candidate_values(model, ensemble, "G")
    pr_values = candidate_values(model, ensemble, "precision")
    re_values = candidate_values(model, ensemble, "recall")
    w = ensemble.weights

    f_hat = _weighted_mean(f_values, w)
    g_hat = _weighted_mean(g_values, w)
    contributions = [
        CandidateContribution(k, support, float(w[k]), float(f_values[k]), float(g_values[k]),
                              float(pr_values[k]), float(re_values[k]))
        for k, support in enumerate(ensemble.candidates)
    ]
    report = AssessmentReport(
        model=model,
        f_hat=f_hat,
        g_hat=g_hat,
        sd_f=math.sqrt(math.fsum(w * (f_values - f_hat) ** 2)),
        sd_g=math.sqrt(math.fsum(w * (g_values - g_hat) ** 2)),
        pr_hat=_weighted_mean(pr_values, w),
        re_hat=_weighted_mean(re_values, w),
        per_candidate=contributions,
        name=name,
    )
    logger.debug(f"Assessed {name or model}: F_hat={f_hat:.4f}, G_hat={g_hat:.4f}")
    return report


def weighted_deviation(ensemble: CandidateEnsemble, truth: VariableSet) -> float:
    """Weighted symmetric-difference ratio sum_k w_k |A_k ∇ truth| / |truth|.

    Tends to zero when the weighting concentrates on the true model. With an
    empty truth the ratio reduces to the weighted candidate size.
    """
    diffs = np.array([sym_diff_size(candidate, truth) for candidate in ensemble.candidates], dtype=float)
    total = math.fsum(ensemble.weights * diffs)
    return total / len(truth) if len(truth) else total


def overlap_matrix(models: Dict[str, VariableSet]) -> pd.DataFrame:
    """Pairwise counts of shared variables between named selections."""
    names = list(models)
    counts = [[len(models[a].members & models[b].members) for b in names] for a in names]
    return pd.DataFrame(counts, index=names, columns=names, dtype=int)
