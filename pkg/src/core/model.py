"""
Model Specification Module
Equation and model specifications, parameter containers and the map between
constrained parameters and the unconstrained optimization vector
"""

import math
from dataclasses import dataclass, field
from itertools import combinations
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.special import expit, logit

from .errors import InvalidParameterError, ModelError, ShapeError
from .mvnprob import Corr3

INTERCEPT_NAMES = {"intercept", "const", "constant", "_cons", "(intercept)"}

# Keeps hyperspherical angles away from 0 and pi. With three equations the
# determinant is at least sin(m)^6 ~ 6e-11, far above rounding in Corr3, so
# |r| <= cos(m) ~ 0.9998 and every raw vector maps to a PD matrix.
THETA_MARGIN = 0.02
SPACING_LIMIT = 700.0
HALF_PI = np.pi / 2.0


@dataclass(frozen=True)
class EquationSpec:
    """One ordered-probit equation: stage count and covariate columns"""

    name: str
    n_stages: int
    covariates: Tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "covariates", tuple(self.covariates))
        if not self.name:
            raise ModelError("equation name must be non-empty")
        if int(self.n_stages) != self.n_stages or self.n_stages < 2:
            raise ModelError(f"equation '{self.name}': n_stages must be an integer >= 2")
        seen = set()
        for col in self.covariates:
            if col in seen:
                raise ModelError(f"equation '{self.name}': duplicate covariate '{col}'")
            if col.strip().lower() in INTERCEPT_NAMES:
                raise ModelError(
                    f"equation '{self.name}': intercept column '{col}' is not allowed, thresholds absorb location"
                )
            seen.add(col)

    @property
    def n_thresholds(self) -> int:
        return self.n_stages - 1

    @property
    def n_params(self) -> int:
        return len(self.covariates) + self.n_thresholds

    def to_dict(self) -> Dict[str, Any]:
        return {"name": self.name, "n_stages": self.n_stages, "covariates": list(self.covariates)}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "EquationSpec":
        return cls(name=data["name"], n_stages=int(data["n_stages"]),
                   covariates=tuple(data.get("covariates", ())))


@dataclass(frozen=True)
class ModelSpec:
    """One to three equations and the outcome column that feeds each"""

    equations: Tuple[EquationSpec, ...]
    outcome_columns: Tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "equations", tuple(self.equations))
        object.__setattr__(self, "outcome_columns", tuple(self.outcome_columns))
        if not 1 <= len(self.equations) <= 3:
            raise ModelError(f"a model has 1-3 equations, got {len(self.equations)}")
        if len(self.outcome_columns) != len(self.equations):
            raise ModelError("one outcome column is required per equation")
        if len(set(self.outcome_columns)) != len(self.outcome_columns):
            raise ModelError("outcome columns must be distinct")
        names = [eq.name for eq in self.equations]
        if len(set(names)) != len(names):
            raise ModelError("equation names must be distinct")
        clash = set(self.outcome_columns) & set(self.covariate_columns)
        if clash:
            raise ModelError(f"columns used both as outcome and covariate: {sorted(clash)}")

    @property
    def n_equations(self) -> int:
        return len(self.equations)

    @property
    def pairs(self) -> List[Tuple[int, int]]:
        """Equation index pairs in correlation order (0,1), (0,2), (1,2)"""
        return list(combinations(range(self.n_equations), 2))

    @property
    def n_correlations(self) -> int:
        return len(self.pairs)

    @property
    def n_params(self) -> int:
        return sum(eq.n_params for eq in self.equations) + self.n_correlations

    @property
    def covariate_columns(self) -> List[str]:
        """Union of covariates in order of first appearance"""
        seen: List[str] = []
        for eq in self.equations:
            for col in eq.covariates:
                if col not in seen:
                    seen.append(col)
        return seen

    def equation_index(self, name: Union[str, int]) -> int:
        if isinstance(name, int):
            if 0 <= name < self.n_equations:
                return name
            raise ModelError(f"equation index {name} out of range")
        for i, eq in enumerate(self.equations):
            if eq.name == name:
                return i
        raise ModelError(f"unknown equation '{name}'")

    def param_names(self) -> List[str]:
        """Names in constrained-vector order: betas, thresholds, correlations"""
        names = [f"{eq.name}:beta:{col}" for eq in self.equations for col in eq.covariates]
        names += [f"{eq.name}:mu:{j + 1}" for eq in self.equations for j in range(eq.n_thresholds)]
        names += [f"rho:{self.equations[i].name},{self.equations[j].name}" for i, j in self.pairs]
        return names

    def subset(self, indices: Sequence[int]) -> "ModelSpec":
        """Model made of the selected equations, in the given order"""
        return ModelSpec(
            equations=tuple(self.equations[i] for i in indices),
            outcome_columns=tuple(self.outcome_columns[i] for i in indices),
        )

    def to_dict(self) -> Dict[str, Any]:
        return {
            "equations": [
                dict(eq.to_dict(), outcome=out)
                for eq, out in zip(self.equations, self.outcome_columns)
            ]
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "ModelSpec":
        equations = [EquationSpec.from_dict(item) for item in data["equations"]]
        outcomes = [item["outcome"] for item in data["equations"]]
        return cls(equations=tuple(equations), outcome_columns=tuple(outcomes))


@dataclass
class ParameterSet:
    """Coefficients, thresholds and latent error correlations of a model"""

    beta: Tuple[np.ndarray, ...]
    thresholds: Tuple[np.ndarray, ...]
    corr: np.ndarray = field(default=None)

    def __post_init__(self):
        self.beta = tuple(np.asarray(b, dtype=float).reshape(-1) for b in self.beta)
        self.thresholds = tuple(np.asarray(t, dtype=float).reshape(-1) for t in self.thresholds)
        if len(self.beta) != len(self.thresholds):
            raise ShapeError("beta and thresholds must have one entry per equation")
        if self.corr is None:
            self.corr = np.eye(len(self.beta))
        self.corr = np.asarray(self.corr, dtype=float)

    @property
    def n_equations(self) -> int:
        return len(self.beta)

    @property
    def pairs(self) -> List[Tuple[int, int]]:
        return list(combinations(range(self.n_equations), 2))

    def correlations(self) -> np.ndarray:
        return np.array([self.corr[i, j] for i, j in self.pairs])

    def kernel_corr(self) -> Optional[Union[float, Corr3]]:
        """Correlation argument in the form rectangle_prob expects"""
        if self.n_equations == 1:
            return None
        if self.n_equations == 2:
            return float(self.corr[0, 1])
        return Corr3.from_matrix(self.corr)

    def subset(self, indices: Sequence[int]) -> "ParameterSet":
        idx = list(indices)
        return ParameterSet(
            beta=tuple(self.beta[i] for i in idx),
            thresholds=tuple(self.thresholds[i] for i in idx),
            corr=self.corr[np.ix_(idx, idx)],
        )

    def with_identity_corr(self) -> "ParameterSet":
        return ParameterSet(beta=self.beta, thresholds=self.thresholds, corr=np.eye(self.n_equations))

    def validate(self, spec: Optional[ModelSpec] = None) -> "ParameterSet":
        n = self.n_equations
        if not 1 <= n <= 3:
            raise InvalidParameterError(f"parameter set has {n} equations, expected 1-3")
        if spec is not None:
            if spec.n_equations != n:
                raise InvalidParameterError(
                    f"parameter set has {n} equations, model has {spec.n_equations}")
            for eq, b, t in zip(spec.equations, self.beta, self.thresholds):
                if b.size != len(eq.covariates):
                    raise InvalidParameterError(
                        f"equation '{eq.name}': {b.size} coefficients for {len(eq.covariates)} covariates")
                if t.size != eq.n_thresholds:
                    raise InvalidParameterError(
                        f"equation '{eq.name}': {t.size} thresholds for {eq.n_stages} stages")
        for e, (b, t) in enumerate(zip(self.beta, self.thresholds)):
            if not np.all(np.isfinite(b)) or not np.all(np.isfinite(t)):
                raise InvalidParameterError(f"equation {e}: non-finite coefficient or threshold")
            if t.size == 0:
                raise InvalidParameterError(f"equation {e}: at least one threshold is required")
            if np.any(np.diff(t) <= 0):
                raise InvalidParameterError(f"equation {e}: thresholds {t.tolist()} are not strictly increasing")
        c = self.corr
        if c.shape != (n, n) or not np.all(np.isfinite(c)):
            raise InvalidParameterError(f"correlation matrix must be a finite {n}x{n} array")
        if not np.allclose(c, c.T, atol=1e-12) or not np.allclose(np.diag(c), 1.0, atol=1e-12):
            raise InvalidParameterError("correlation matrix must be symmetric with unit diagonal")
        if np.any(np.abs(c[~np.eye(n, dtype=bool)]) >= 1.0):
            raise InvalidParameterError("correlations must lie strictly inside (-1, 1)")
        try:
            np.linalg.cholesky(c)
        except np.linalg.LinAlgError as exc:
            raise InvalidParameterError("correlation matrix is not positive definite") from exc
        return self

    def constrained_vector(self) -> np.ndarray:
        return np.concatenate(list(self.beta) + list(self.thresholds) + [self.correlations()])

    @classmethod
    def from_constrained_vector(cls, vec: Sequence[float], spec: ModelSpec) -> "ParameterSet":
        vec = np.asarray(vec, dtype=float)
        if vec.size != spec.n_params:
            raise ShapeError(f"expected {spec.n_params} constrained values, got {vec.size}")
        pos = 0
        betas, thresholds = [], []
        for eq in spec.equations:
            betas.append(vec[pos:pos + len(eq.covariates)])
            pos += len(eq.covariates)
        for eq in spec.equations:
            thresholds.append(vec[pos:pos + eq.n_thresholds])
            pos += eq.n_thresholds
        corr = np.eye(spec.n_equations)
        for i, j in spec.pairs:
            corr[i, j] = corr[j, i] = vec[pos]
            pos += 1
        return cls(beta=tuple(betas), thresholds=tuple(thresholds), corr=corr)

    @classmethod
    def null(cls, spec: ModelSpec, thresholds: Optional[Sequence[Sequence[float]]] = None) -> "ParameterSet":
        """Zero coefficients, identity correlation and the given (or unit-spaced) thresholds"""
        if thresholds is None:
            thresholds = [np.arange(eq.n_thresholds, dtype=float) for eq in spec.equations]
        return cls(
            beta=tuple(np.zeros(len(eq.covariates)) for eq in spec.equations),
            thresholds=tuple(np.asarray(t, dtype=float) for t in thresholds),
            corr=np.eye(spec.n_equations),
        )

    def to_dict(self, spec: ModelSpec) -> Dict[str, Any]:
        equations = {}
        for eq, b, t in zip(spec.equations, self.beta, self.thresholds):
            equations[eq.name] = {
                "beta": {col: float(v) for col, v in zip(eq.covariates, b)},
                "thresholds": [float(v) for v in t],
            }
        correlations = {
            f"{spec.equations[i].name},{spec.equations[j].name}": float(self.corr[i, j])
            for i, j in spec.pairs
        }
        return {"equations": equations, "correlations": correlations}

    @classmethod
    def from_dict(cls, data: Dict[str, Any], spec: ModelSpec) -> "ParameterSet":
        eq_data = data.get("equations", {})
        betas, thresholds = [], []
        for eq in spec.equations:
            if eq.name not in eq_data:
                raise InvalidParameterError(f"parameters for equation '{eq.name}' are missing")
            entry = eq_data[eq.name]
            coef = entry.get("beta", {})
            unknown = set(coef) - set(eq.covariates)
            if unknown:
                raise InvalidParameterError(f"equation '{eq.name}': coefficients for unknown covariates {sorted(unknown)}")
            betas.append([float(coef.get(col, 0.0)) for col in eq.covariates])
            thresholds.append([float(v) for v in entry.get("thresholds", [])])
        corr = np.eye(spec.n_equations)
        given = data.get("correlations", {}) or {}
        for i, j in spec.pairs:
            a, b = spec.equations[i].name, spec.equations[j].name
            value = given.get(f"{a},{b}", given.get(f"{b},{a}", 0.0))
            corr[i, j] = corr[j, i] = float(value)
        return cls(beta=tuple(betas), thresholds=tuple(thresholds), corr=corr).validate(spec)


def _thresholds_from_raw(raw: np.ndarray) -> np.ndarray:
    mu = np.empty(raw.size)
    mu[0] = raw[0]
    for j in range(1, raw.size):
        step = math.exp(min(float(raw[j]), SPACING_LIMIT))
        mu[j] = max(mu[j - 1] + step, np.nextafter(mu[j - 1], np.inf))
    return mu


def _raw_from_thresholds(mu: np.ndarray) -> np.ndarray:
    raw = np.empty(mu.size)
    raw[0] = mu[0]
    raw[1:] = np.log(np.diff(mu))
    return raw


def corr_from_raw(raw: Sequence[float], n: int) -> np.ndarray:
    """Unit-diagonal PD matrix from hyperspherical Cholesky angles

    Raw entries are ordered row by row below the diagonal: (1,0), (2,0), (2,1).
    A raw value of zero is a right angle, so the zero vector maps to identity.
    """
    theta = np.clip(np.pi * expit(np.asarray(raw, dtype=float)), THETA_MARGIN, np.pi - THETA_MARGIN)
    chol = np.zeros((n, n))
    chol[0, 0] = 1.0
    k = 0
    for i in range(1, n):
        remaining = 1.0
        for j in range(i):
            # cos(pi/2) is 6e-17 in floating point; a right angle must give exactly zero
            chol[i, j] = 0.0 if theta[k] == HALF_PI else remaining * math.cos(theta[k])
            remaining *= math.sin(theta[k])
            k += 1
        chol[i, i] = remaining
    corr = chol @ chol.T
    corr = (corr + corr.T) / 2.0
    np.fill_diagonal(corr, 1.0)
    return corr


def raw_from_corr(corr: np.ndarray) -> np.ndarray:
    n = corr.shape[0]
    chol = np.linalg.cholesky(corr)
    raw = []
    for i in range(1, n):
        remaining = 1.0
        for j in range(i):
            theta = math.acos(min(1.0, max(-1.0, chol[i, j] / remaining)))
            raw.append(float(logit(theta / np.pi)))
            remaining *= math.sin(theta)
    return np.array(raw)


def to_unconstrained(p: ParameterSet) -> np.ndarray:
    """Flat optimization vector: betas, threshold raws per equation, correlation raws"""
    p.validate()
    parts = list(p.beta)
    parts += [_raw_from_thresholds(t) for t in p.thresholds]
    parts.append(raw_from_corr(p.corr) if p.n_equations > 1 else np.zeros(0))
    return np.concatenate(parts)


def from_unconstrained(v: Sequence[float], spec: ModelSpec) -> ParameterSet:
    """Always yields a valid ParameterSet for any finite input of the right length"""
    v = np.asarray(v, dtype=float).reshape(-1)
    if v.size != spec.n_params:
        raise ShapeError(f"unconstrained vector has length {v.size}, model needs {spec.n_params}")
    if not np.all(np.isfinite(v)):
        raise InvalidParameterError("unconstrained vector contains non-finite values")
    pos = 0
    betas, thresholds = [], []
    for eq in spec.equations:
        betas.append(v[pos:pos + len(eq.covariates)].copy())
        pos += len(eq.covariates)
    for eq in spec.equations:
        thresholds.append(_thresholds_from_raw(v[pos:pos + eq.n_thresholds]))
        pos += eq.n_thresholds
    corr = corr_from_raw(v[pos:], spec.n_equations)
    return ParameterSet(beta=tuple(betas), thresholds=tuple(thresholds), corr=corr)


def correlation_slice(spec: ModelSpec) -> slice:
    """Position of the correlation raws inside the unconstrained vector"""
    start = spec.n_params - spec.n_correlations
    return slice(start, spec.n_params)
