"""
Simulation Module
Synthetic observation tables drawn from a known parameter set on a
portable, bit-exact random stream
"""

import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from .errors import EmptyDataError, InvalidParameterError
from .likelihood import ObservationTable
from .model import ModelSpec, ParameterSet

logger = logging.getLogger(__name__)

UNIT_SCALE = 2.0 ** -53
KINDS = ("constant", "uniform", "normal", "bernoulli")
# uniforms consumed per row by each column kind
DRAWS_PER_KIND = {"constant": 0, "uniform": 1, "normal": 2, "bernoulli": 1}


@dataclass(frozen=True)
class ColumnDistribution:
    """Distribution of one simulated covariate column"""

    kind: str = "normal"
    value: float = 0.0
    low: float = 0.0
    high: float = 1.0
    p: float = 0.5

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InvalidParameterError(f"unknown distribution '{self.kind}', expected one of {KINDS}")
        if self.kind == "uniform" and not self.low < self.high:
            raise InvalidParameterError(f"uniform needs low < high, got ({self.low}, {self.high})")
        if self.kind == "bernoulli" and not 0.0 <= self.p <= 1.0:
            raise InvalidParameterError(f"bernoulli p must lie in [0, 1], got {self.p}")
        if self.kind == "constant" and not np.isfinite(self.value):
            raise InvalidParameterError("constant value must be finite")

    @property
    def draws(self) -> int:
        return DRAWS_PER_KIND[self.kind]

    def transform(self, u: np.ndarray) -> np.ndarray:
        """Map the column's uniforms (shape n x draws) to values"""
        if self.kind == "constant":
            return np.full(u.shape[0], float(self.value))
        if self.kind == "uniform":
            return self.low + (self.high - self.low) * u[:, 0]
        if self.kind == "bernoulli":
            return (u[:, 0] < self.p).astype(float)
        return box_muller(u[:, 0], u[:, 1])

    def to_dict(self) -> Dict[str, Any]:
        if self.kind == "constant":
            return {"kind": "constant", "value": self.value}
        if self.kind == "uniform":
            return {"kind": "uniform", "low": self.low, "high": self.high}
        if self.kind == "bernoulli":
            return {"kind": "bernoulli", "p": self.p}
        return {"kind": "normal"}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "ColumnDistribution":
        kind = data.get("kind", "normal")
        allowed = {"constant": {"value"}, "uniform": {"low", "high"},
                   "bernoulli": {"p"}, "normal": set()}.get(kind, set())
        unknown = set(data) - allowed - {"kind"}
        if unknown:
            raise InvalidParameterError(f"'{kind}' distribution does not take {sorted(unknown)}")
        return cls(kind=kind, **{k: float(v) for k, v in data.items() if k != "kind"})


@dataclass
class CovariateGenerator:
    """Independent per-column covariate distributions; unlisted columns are standard normal"""

    columns: Dict[str, ColumnDistribution] = field(default_factory=dict)

    def distribution(self, column: str) -> ColumnDistribution:
        return self.columns.get(column, ColumnDistribution())

    def to_dict(self) -> Dict[str, Any]:
        return {col: dist.to_dict() for col, dist in self.columns.items()}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "CovariateGenerator":
        return cls({col: ColumnDistribution.from_dict(spec) for col, spec in data.items()})


def uniform_stream(seed: int, count: int) -> np.ndarray:
    """`count` doubles in [0, 1) from Philox keyed by `seed`, 53 bits each"""
    if seed < 0:
        raise InvalidParameterError("seed must be non-negative")
    bits = np.random.Philox(key=seed)
    raw = np.asarray(bits.random_raw(count), dtype=np.uint64)
    return (raw >> np.uint64(11)).astype(np.float64) * UNIT_SCALE


def box_muller(u1: np.ndarray, u2: np.ndarray) -> np.ndarray:
    return np.sqrt(-2.0 * np.log1p(-u1)) * np.cos(2.0 * np.pi * u2)


def cholesky_factor(corr: np.ndarray) -> np.ndarray:
    """Lower factor L with L L' = R"""
    try:
        return np.linalg.cholesky(np.asarray(corr, dtype=float))
    except np.linalg.LinAlgError as exc:
        raise InvalidParameterError("correlation matrix is not positive definite") from exc


def _draw(spec: ModelSpec, params: ParameterSet, n: int, gen: CovariateGenerator,
          seed: int) -> Tuple[Dict[str, np.ndarray], np.ndarray, np.ndarray]:
    params.validate(spec)
    if n < 1:
        raise InvalidParameterError(f"sample size must be at least 1, got {n}")
    columns = spec.covariate_columns
    dists = [gen.distribution(col) for col in columns]
    width = sum(d.draws for d in dists) + 2 * spec.n_equations
    # row-major layout: each row takes its covariate draws in column order, then its errors
    u = uniform_stream(seed, n * width).reshape(n, width) if width else np.zeros((n, 0))

    covariates, pos = {}, 0
    for col, dist in zip(columns, dists):
        covariates[col] = dist.transform(u[:, pos:pos + dist.draws])
        pos += dist.draws
    z = np.column_stack([box_muller(u[:, pos + 2 * e], u[:, pos + 2 * e + 1])
                         for e in range(spec.n_equations)])
    errors = z @ cholesky_factor(params.corr).T
    xb = np.column_stack([
        np.column_stack([covariates[c] for c in eq.covariates]) @ b if eq.covariates else np.zeros(n)
        for eq, b in zip(spec.equations, params.beta)
    ])
    return covariates, xb + errors, errors


def simulate_latents(spec: ModelSpec, params: ParameterSet, n: int, gen: CovariateGenerator,
                     seed: int) -> Tuple[np.ndarray, np.ndarray]:
    """Latent propensities and their error terms, one column per equation"""
    _, latent, errors = _draw(spec, params, n, gen, seed)
    return latent, errors


def sample_dataset(spec: ModelSpec, params: ParameterSet, n: int, gen: Optional[CovariateGenerator] = None,
                   seed: int = 0) -> ObservationTable:
    """Draw covariates, correlated errors and censored stages for `n` rows"""
    gen = gen or CovariateGenerator()
    covariates, latent, _ = _draw(spec, params, n, gen, seed)
    outcomes = {
        col: np.searchsorted(t, latent[:, e], side="left").astype(np.int64)
        for e, (col, t) in enumerate(zip(spec.outcome_columns, params.thresholds))
    }
    logger.info("simulated %d rows with seed %d", n, seed)
    return ObservationTable(covariates=covariates, outcomes=outcomes)


def empirical_stage_shares(table: ObservationTable, spec: ModelSpec) -> List[np.ndarray]:
    """Share of rows in each stage, per equation"""
    if table.n == 0:
        raise EmptyDataError("cannot compute stage shares of an empty table")
    table.validate(spec)
    outcomes = table.outcome_matrix(spec)
    return [np.bincount(outcomes[:, e], minlength=eq.n_stages) / table.n
            for e, eq in enumerate(spec.equations)]
