"""
Likelihood Module
Observation tables, cell probabilities and the sample log-likelihood of the
multivariate ordered probit model
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.special import ndtr

from ..utils.parallel import map_chunks
from .errors import (
    DataFormatError,
    EmptyDataError,
    InvalidCellError,
    InvalidLikelihoodError,
    MissingColumnError,
    OutcomeRangeError,
    ShapeError,
)
from .model import EquationSpec, ModelSpec, ParameterSet, from_unconstrained
from .mvnprob import rectangle_prob, std_normal_cdf

logger = logging.getLogger(__name__)

PROB_FLOOR = 1e-300
FD_STEP = float(np.cbrt(np.finfo(float).eps))

ArrayLike = Union[float, np.ndarray]


@dataclass
class ObservationTable:
    """Numeric covariate columns plus one 0-based stage column per equation"""

    covariates: Dict[str, np.ndarray]
    outcomes: Dict[str, np.ndarray]
    dropped_rows: int = field(default=0)

    def __post_init__(self):
        self.covariates = {k: np.asarray(v, dtype=float).reshape(-1) for k, v in self.covariates.items()}
        self.outcomes = {k: np.asarray(v).reshape(-1) for k, v in self.outcomes.items()}
        lengths = {v.size for v in self.covariates.values()} | {v.size for v in self.outcomes.values()}
        if len(lengths) > 1:
            raise ShapeError(f"columns have different lengths: {sorted(lengths)}")

    @property
    def n(self) -> int:
        for column in list(self.outcomes.values()) + list(self.covariates.values()):
            return int(column.size)
        return 0

    @property
    def columns(self) -> List[str]:
        return list(self.covariates) + list(self.outcomes)

    def validate(self, spec: ModelSpec) -> "ObservationTable":
        if self.n == 0:
            raise EmptyDataError("observation table has no rows")
        for col in spec.covariate_columns:
            if col not in self.covariates:
                raise MissingColumnError("required covariate is missing", column=col)
            bad = np.flatnonzero(~np.isfinite(self.covariates[col]))
            if bad.size:
                raise DataFormatError("value is missing or not finite", row=int(bad[0]) + 1, column=col)
        for eq, col in zip(spec.equations, spec.outcome_columns):
            if col not in self.outcomes:
                raise MissingColumnError("required outcome is missing", column=col)
            y = self.outcomes[col]
            as_float = y.astype(float)
            bad = np.flatnonzero(~np.isfinite(as_float) | (as_float != np.round(as_float)))
            if bad.size:
                raise DataFormatError("stage must be an integer", row=int(bad[0]) + 1, column=col)
            bad = np.flatnonzero((as_float < 0) | (as_float > eq.n_stages - 1))
            if bad.size:
                raise OutcomeRangeError(
                    f"stage {y[bad[0]]} outside 0..{eq.n_stages - 1}", row=int(bad[0]) + 1, column=col)
        return self

    def design(self, eq: EquationSpec) -> np.ndarray:
        if not eq.covariates:
            return np.zeros((self.n, 0))
        return np.column_stack([self.covariates[c] for c in eq.covariates])

    def outcome_matrix(self, spec: ModelSpec) -> np.ndarray:
        return np.column_stack([self.outcomes[c].astype(int) for c in spec.outcome_columns])

    def take(self, index: Sequence[int]) -> "ObservationTable":
        idx = np.asarray(index, dtype=int)
        return ObservationTable(
            covariates={k: v[idx] for k, v in self.covariates.items()},
            outcomes={k: v[idx] for k, v in self.outcomes.items()},
        )


def linear_predictor(beta: Sequence[float], x: ArrayLike) -> ArrayLike:
    """beta'x for one covariate row or a matrix of rows"""
    beta = np.asarray(beta, dtype=float).reshape(-1)
    x = np.asarray(x, dtype=float)
    if x.ndim == 0 or x.shape[-1] != beta.size:
        raise ShapeError(f"{beta.size} coefficients for covariates of shape {x.shape}")
    out = x @ beta
    return float(out) if np.ndim(out) == 0 else out


def cutpoints(thresholds: Sequence[float]) -> np.ndarray:
    return np.concatenate(([-np.inf], np.asarray(thresholds, dtype=float), [np.inf]))


def _check_stage(stage: np.ndarray, n_stages: int) -> None:
    if np.any(stage < 0) or np.any(stage > n_stages - 1):
        raise InvalidCellError(f"stage outside 0..{n_stages - 1}")


def cell_prob_uni(eq: EquationSpec, thresholds: Sequence[float], j: ArrayLike, xb: ArrayLike) -> ArrayLike:
    """P(y = j | x) = Phi(mu_j - xb) - Phi(mu_{j-1} - xb) for one equation"""
    stage = np.asarray(j, dtype=int)
    _check_stage(stage, eq.n_stages)
    cuts = cutpoints(thresholds)
    if cuts.size != eq.n_stages + 1:
        raise ShapeError(f"equation '{eq.name}' needs {eq.n_thresholds} thresholds, got {cuts.size - 2}")
    lower = cuts[stage] - np.asarray(xb, dtype=float)
    upper = cuts[stage + 1] - np.asarray(xb, dtype=float)
    # difference of upper tails is more accurate when the whole cell is right of zero
    right = lower > 0
    prob = np.where(
        right,
        std_normal_cdf(-lower) - ndtr(-upper),
        std_normal_cdf(upper) - ndtr(lower),
    )
    prob = np.clip(prob, 0.0, 1.0)
    return float(prob) if prob.ndim == 0 else prob


def _cell_bounds(params: ParameterSet, stages: Sequence[ArrayLike],
                 xb: Sequence[ArrayLike]) -> Tuple[List[np.ndarray], List[np.ndarray]]:
    lower, upper = [], []
    for t, s, x in zip(params.thresholds, stages, xb):
        s = np.asarray(s, dtype=int)
        _check_stage(s, t.size + 1)
        cuts = cutpoints(t)
        lower.append(cuts[s] - np.asarray(x, dtype=float))
        upper.append(cuts[s + 1] - np.asarray(x, dtype=float))
    return lower, upper


def cell_prob_joint(params: ParameterSet, stages: Sequence[ArrayLike], xb: Sequence[ArrayLike]) -> ArrayLike:
    """Joint probability of one stage per equation given the linear predictors"""
    if len(stages) != params.n_equations or len(xb) != params.n_equations:
        raise ShapeError(f"expected {params.n_equations} stages and linear predictors")
    lower, upper = _cell_bounds(params, stages, xb)
    return rectangle_prob(lower, upper, params.kernel_corr())


def linear_predictors(params: ParameterSet, data: ObservationTable, spec: ModelSpec) -> List[np.ndarray]:
    return [data.design(eq) @ b for eq, b in zip(spec.equations, params.beta)]


def loglik_obs(params: ParameterSet, data: ObservationTable, spec: ModelSpec,
               workers: Optional[int] = None) -> np.ndarray:
    """Per-observation log cell probabilities, in row order"""
    params.validate(spec)
    data.validate(spec)
    xb = linear_predictors(params, data, spec)
    outcomes = data.outcome_matrix(spec)
    cuts = [cutpoints(t) for t in params.thresholds]
    corr = params.kernel_corr()

    def chunk(rows: slice) -> np.ndarray:
        lower = [cuts[e][outcomes[rows, e]] - xb[e][rows] for e in range(spec.n_equations)]
        upper = [cuts[e][outcomes[rows, e] + 1] - xb[e][rows] for e in range(spec.n_equations)]
        prob = np.asarray(rectangle_prob(lower, upper, corr), dtype=float).reshape(-1)
        return np.log(np.maximum(prob, PROB_FLOOR))

    return map_chunks(chunk, data.n, workers)


def loglik(params: ParameterSet, data: ObservationTable, spec: ModelSpec,
           workers: Optional[int] = None) -> float:
    """Sample log-likelihood; raises instead of returning a non-finite value"""
    # numpy's pairwise summation over the row-ordered array fixes the reduction order
    total = float(np.sum(loglik_obs(params, data, spec, workers)))
    if not np.isfinite(total):
        raise InvalidLikelihoodError(f"log-likelihood is not finite ({total})")
    return total


def loglik_grad(params_unconstrained: Sequence[float], data: ObservationTable, spec: ModelSpec,
                step: Optional[float] = None, scheme: str = "central",
                indices: Optional[Sequence[int]] = None,
                workers: Optional[int] = None) -> np.ndarray:
    """Finite-difference gradient of the log-likelihood in the unconstrained space

    Coordinates outside `indices` (when given) are left at zero.
    """
    if scheme not in ("central", "forward"):
        raise ValueError(f"unknown difference scheme '{scheme}'")
    theta = np.asarray(params_unconstrained, dtype=float).reshape(-1)
    base = FD_STEP if step is None else float(step)
    coords = range(theta.size) if indices is None else indices

    def objective(v: np.ndarray) -> float:
        return loglik(from_unconstrained(v, spec), data, spec, workers)

    f0 = objective(theta) if scheme == "forward" else None
    grad = np.zeros(theta.size)
    for i in coords:
        h = base * max(1.0, abs(theta[i]))
        up = theta.copy()
        up[i] += h
        if scheme == "forward":
            grad[i] = (objective(up) - f0) / (up[i] - theta[i])
        else:
            down = theta.copy()
            down[i] -= h
            grad[i] = (objective(up) - objective(down)) / (up[i] - down[i])
    return grad
