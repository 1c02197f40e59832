"""
Estimation Module
Full-information maximum likelihood fitting, standard errors, fit statistics
and the likelihood-ratio comparison of joint and independent models
"""

import logging
import math
import warnings
from dataclasses import dataclass, field, replace
from typing import Any, Callable, Dict, List, Optional, Sequence

import numpy as np
from scipy.special import ndtr, ndtri
from scipy.stats import chi2

from .errors import (
    BadStartError,
    DegenerateOutcomeError,
    InvalidLikelihoodError,
    InvalidParameterError,
    LRStatisticWarning,
    MismatchedModelsError,
    ShapeError,
    SingularInformationWarning,
)
from .likelihood import ObservationTable, loglik, loglik_grad
from .model import (
    ModelSpec,
    ParameterSet,
    correlation_slice,
    from_unconstrained,
    to_unconstrained,
)
from .optimizer import bfgs_maximize

logger = logging.getLogger(__name__)

HESSIAN_STEP = float(np.finfo(float).eps ** 0.25)
JACOBIAN_STEP = float(np.cbrt(np.finfo(float).eps))
START_SHARE_CLIP = 1e-4
START_MIN_SPACING = 1e-3


@dataclass
class FitOptions:
    """Optimizer settings for fit()"""

    max_iterations: int = 500
    grad_tolerance: float = 1e-5
    rel_ll_tolerance: float = 1e-9
    start: Optional[np.ndarray] = None
    independent: bool = False
    compute_std_errors: bool = True
    workers: Optional[int] = None

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")
        if self.grad_tolerance <= 0 or self.rel_ll_tolerance <= 0:
            raise ValueError("tolerances must be positive")
        if self.start is not None:
            self.start = np.asarray(self.start, dtype=float).reshape(-1)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "max_iterations": self.max_iterations,
            "grad_tolerance": self.grad_tolerance,
            "rel_ll_tolerance": self.rel_ll_tolerance,
            "start": None if self.start is None else [float(v) for v in self.start],
            "independent": self.independent,
            "compute_std_errors": self.compute_std_errors,
        }


@dataclass(frozen=True)
class FitStatistics:
    rho2: float
    aic: float
    bic: float


@dataclass
class StandardErrors:
    """Delta-method standard errors of the constrained parameters; NaN marks absent"""

    names: List[str]
    estimates: np.ndarray
    std_errors: np.ndarray
    z_values: np.ndarray
    p_values: np.ndarray
    covariance: np.ndarray


@dataclass(frozen=True)
class LRTest:
    stat: float
    df: int
    p_value: float

    def to_dict(self) -> Dict[str, Any]:
        return {"stat": self.stat, "df": self.df, "p_value": self.p_value}


def _nan_to_none(values: Sequence[float]) -> List[Optional[float]]:
    return [None if not np.isfinite(v) else float(v) for v in values]


def _none_to_nan(values: Sequence[Optional[float]]) -> np.ndarray:
    return np.array([np.nan if v is None else float(v) for v in values])


@dataclass
class FitResult:
    """Estimated model with likelihoods, fit statistics and inference"""

    spec: ModelSpec
    params: ParameterSet
    ll: float
    ll_null: float
    rho2: float
    aic: float
    bic: float
    k: int
    n: int
    names: List[str]
    estimates: np.ndarray
    std_errors: np.ndarray
    z_values: np.ndarray
    p_values: np.ndarray
    converged: bool
    iterations: int
    message: str = ""
    independent: bool = False
    trace: List[float] = field(default_factory=list)
    lr_test: Optional[LRTest] = None

    def to_dict(self) -> Dict[str, Any]:
        return {
            "model": self.spec.to_dict(),
            "params": self.params.to_dict(self.spec),
            "independent": self.independent,
            "ll": self.ll,
            "ll_null": self.ll_null,
            "rho2": self.rho2,
            "aic": self.aic,
            "bic": self.bic,
            "k": self.k,
            "n": self.n,
            "coefficients": [
                {"name": name, "estimate": est, "std_error": se, "z_value": z, "p_value": p}
                for name, est, se, z, p in zip(
                    self.names,
                    _nan_to_none(self.estimates),
                    _nan_to_none(self.std_errors),
                    _nan_to_none(self.z_values),
                    _nan_to_none(self.p_values),
                )
            ],
            "converged": self.converged,
            "iterations": self.iterations,
            "message": self.message,
            "lr_test_independence": None if self.lr_test is None else self.lr_test.to_dict(),
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "FitResult":
        spec = ModelSpec.from_dict(data["model"])
        rows = data.get("coefficients", [])
        lr = data.get("lr_test_independence")
        return cls(
            spec=spec,
            params=ParameterSet.from_dict(data["params"], spec),
            ll=float(data["ll"]),
            ll_null=float(data["ll_null"]),
            rho2=float(data["rho2"]),
            aic=float(data["aic"]),
            bic=float(data["bic"]),
            k=int(data["k"]),
            n=int(data["n"]),
            names=[r["name"] for r in rows],
            estimates=_none_to_nan([r["estimate"] for r in rows]),
            std_errors=_none_to_nan([r["std_error"] for r in rows]),
            z_values=_none_to_nan([r["z_value"] for r in rows]),
            p_values=_none_to_nan([r["p_value"] for r in rows]),
            converged=bool(data["converged"]),
            iterations=int(data["iterations"]),
            message=data.get("message", ""),
            independent=bool(data.get("independent", False)),
            lr_test=None if lr is None else LRTest(float(lr["stat"]), int(lr["df"]), float(lr["p_value"])),
        )


def stage_counts(spec: ModelSpec, data: ObservationTable) -> List[np.ndarray]:
    outcomes = data.outcome_matrix(spec)
    return [np.bincount(outcomes[:, e], minlength=eq.n_stages) for e, eq in enumerate(spec.equations)]


def check_outcome_variation(spec: ModelSpec, data: ObservationTable) -> None:
    for eq, col, counts in zip(spec.equations, spec.outcome_columns, stage_counts(spec, data)):
        if np.count_nonzero(counts) < 2:
            raise DegenerateOutcomeError(
                f"equation '{eq.name}': outcome column '{col}' takes a single stage")


def default_start(spec: ModelSpec, data: ObservationTable) -> np.ndarray:
    """Zero coefficients, thresholds at the normal quantiles of cumulative shares, identity R"""
    thresholds = []
    for counts in stage_counts(spec, data):
        cumulative = np.cumsum(counts)[:-1] / counts.sum()
        mu = ndtri(np.clip(cumulative, START_SHARE_CLIP, 1.0 - START_SHARE_CLIP))
        for j in range(1, mu.size):
            mu[j] = max(mu[j], mu[j - 1] + START_MIN_SPACING)
        thresholds.append(mu)
    return to_unconstrained(ParameterSet.null(spec, thresholds))


def free_indices(spec: ModelSpec, independent: bool) -> np.ndarray:
    index = np.arange(spec.n_params)
    if not independent:
        return index
    fixed = correlation_slice(spec)
    return index[(index < fixed.start) | (index >= fixed.stop)]


def null_loglik(spec: ModelSpec, data: ObservationTable) -> float:
    """Thresholds-only log-likelihood with R = identity

    The maximum of the thresholds-only model reproduces the empirical stage
    shares, so it equals sum_e sum_j n_ej * ln(n_ej / n).
    """
    data.validate(spec)
    check_outcome_variation(spec, data)
    total = 0.0
    for counts in stage_counts(spec, data):
        used = counts[counts > 0].astype(float)
        total += float(np.sum(used * np.log(used / counts.sum())))
    return total


def fit_stats(ll: float, ll_null: float, k: int, n: int) -> FitStatistics:
    """McFadden rho-squared, AIC and BIC"""
    if ll > 0:
        raise InvalidLikelihoodError(f"log-likelihood {ll} is positive")
    if ll_null >= 0:
        raise InvalidLikelihoodError(f"null log-likelihood {ll_null} must be negative")
    if n <= 0 or k < 1:
        raise InvalidLikelihoodError("need n > 0 observations and k >= 1 parameters")
    return FitStatistics(
        rho2=1.0 - ll / ll_null,
        aic=2.0 * k - 2.0 * ll,
        bic=k * math.log(n) - 2.0 * ll,
    )


def numerical_hessian(func: Callable[[np.ndarray], float], x: np.ndarray,
                      indices: Sequence[int]) -> np.ndarray:
    """Central-difference Hessian of `func` over the selected coordinates"""
    idx = list(indices)
    steps = [HESSIAN_STEP * max(1.0, abs(x[i])) for i in idx]
    f0 = func(x)

    def shifted(moves: Dict[int, float]) -> float:
        point = x.copy()
        for i, h in moves.items():
            point[i] += h
        return func(point)

    m = len(idx)
    hess = np.zeros((m, m))
    for a in range(m):
        i, hi = idx[a], steps[a]
        hess[a, a] = (shifted({i: hi}) - 2.0 * f0 + shifted({i: -hi})) / (hi * hi)
        for b in range(a):
            j, hj = idx[b], steps[b]
            value = (shifted({i: hi, j: hj}) - shifted({i: hi, j: -hj})
                     - shifted({i: -hi, j: hj}) + shifted({i: -hi, j: -hj})) / (4.0 * hi * hj)
            hess[a, b] = hess[b, a] = value
    return hess


def transform_jacobian(v: np.ndarray, spec: ModelSpec, indices: Sequence[int]) -> np.ndarray:
    """d(constrained vector) / d(unconstrained coordinates in `indices`)"""
    idx = list(indices)
    jac = np.zeros((spec.n_params, len(idx)))
    for col, i in enumerate(idx):
        h = JACOBIAN_STEP * max(1.0, abs(v[i]))
        up, down = v.copy(), v.copy()
        up[i] += h
        down[i] -= h
        jac[:, col] = (from_unconstrained(up, spec).constrained_vector()
                       - from_unconstrained(down, spec).constrained_vector()) / (up[i] - down[i])
    return jac


def _invert_information(info: np.ndarray):
    """Covariance from observed information and the coordinates it cannot identify"""
    info = (info + info.T) / 2.0
    values, vectors = np.linalg.eigh(info)
    scale = max(float(np.max(np.abs(values))), 1.0) if values.size else 1.0
    good = values > 1e-10 * scale
    affected = np.zeros(info.shape[0], dtype=bool)
    if not np.all(good):
        affected = np.any(np.abs(vectors[:, ~good]) > 1e-6, axis=1)
        warnings.warn(
            f"observed information is not positive definite ({int(np.sum(~good))} non-positive eigenvalues); "
            "standard errors of affected parameters are absent",
            SingularInformationWarning,
        )
        logger.warning("singular observed information; %d coordinates affected", int(affected.sum()))
    covariance = (vectors[:, good] / values[good]) @ vectors[:, good].T
    return covariance, affected


def std_errors(params: ParameterSet, data: ObservationTable, spec: ModelSpec,
               independent: bool = False, workers: Optional[int] = None) -> StandardErrors:
    """Observed-information standard errors carried to the constrained scale"""
    v = to_unconstrained(params.validate(spec))
    free = free_indices(spec, independent)

    def objective(u: np.ndarray) -> float:
        return loglik(from_unconstrained(u, spec), data, spec, workers)

    info = -numerical_hessian(objective, v, free)
    cov_free, affected = _invert_information(info)
    jac = transform_jacobian(v, spec, free)
    covariance = jac @ cov_free @ jac.T

    variance = np.diag(covariance).copy()
    absent = ~np.isfinite(variance) | (variance <= 0.0)
    if affected.any():
        absent |= np.any(np.abs(jac[:, affected]) > 0.0, axis=1)
    se = np.where(absent, np.nan, np.sqrt(np.where(absent, 1.0, variance)))
    estimates = params.constrained_vector()
    with np.errstate(invalid="ignore", divide="ignore"):
        z = estimates / se
    p = 2.0 * ndtr(-np.abs(z))
    return StandardErrors(names=spec.param_names(), estimates=estimates, std_errors=se,
                          z_values=z, p_values=p, covariance=covariance)


def fit(spec: ModelSpec, data: ObservationTable, opts: Optional[FitOptions] = None) -> FitResult:
    """Maximize the log-likelihood over the unconstrained vector"""
    opts = opts or FitOptions()
    data.validate(spec)
    check_outcome_variation(spec, data)

    start = default_start(spec, data) if opts.start is None else opts.start.copy()
    if start.size != spec.n_params:
        raise ShapeError(f"start vector has length {start.size}, model needs {spec.n_params}")
    free = free_indices(spec, opts.independent)
    if opts.independent:
        start[correlation_slice(spec)] = 0.0

    def full(sub: np.ndarray) -> np.ndarray:
        v = start.copy()
        v[free] = sub
        return v

    def objective(sub: np.ndarray) -> float:
        return loglik(from_unconstrained(full(sub), spec), data, spec, opts.workers)

    def gradient(sub: np.ndarray) -> np.ndarray:
        return loglik_grad(full(sub), data, spec, indices=free, workers=opts.workers)[free]

    try:
        start_ll = objective(start[free])
    except (InvalidLikelihoodError, InvalidParameterError) as exc:
        raise BadStartError(f"log-likelihood is not finite at the start: {exc}") from exc
    logger.info("fitting %d parameters on %d observations (start loglik %.4f)",
                free.size, data.n, start_ll)

    outcome = bfgs_maximize(objective, gradient, start[free],
                            max_iterations=opts.max_iterations,
                            grad_tolerance=opts.grad_tolerance,
                            rel_tolerance=opts.rel_ll_tolerance)
    params = from_unconstrained(full(outcome.x), spec)
    ll_null = null_loglik(spec, data)
    k = int(free.size)
    stats = fit_stats(outcome.value, ll_null, k, data.n)
    logger.info("fit finished after %d iterations: loglik %.4f (%s)",
                outcome.iterations, outcome.value, outcome.message)

    if opts.compute_std_errors:
        inference = std_errors(params, data, spec, independent=opts.independent, workers=opts.workers)
        se, z, p = inference.std_errors, inference.z_values, inference.p_values
    else:
        se = z = p = np.full(spec.n_params, np.nan)

    return FitResult(
        spec=spec, params=params, ll=outcome.value, ll_null=ll_null,
        rho2=stats.rho2, aic=stats.aic, bic=stats.bic, k=k, n=data.n,
        names=spec.param_names(), estimates=params.constrained_vector(),
        std_errors=se, z_values=z, p_values=p,
        converged=outcome.converged, iterations=outcome.iterations,
        message=outcome.message, independent=opts.independent, trace=outcome.trace,
    )


def fit_univariate(spec: ModelSpec, data: ObservationTable,
                   opts: Optional[FitOptions] = None) -> List[FitResult]:
    """Separate single-equation ordered probit fits, one per equation"""
    opts = replace(opts or FitOptions(), start=None, independent=False)
    return [fit(spec.subset([e]), data, opts) for e in range(spec.n_equations)]


def lr_test_independence(fit_joint: FitResult, fit_indep: FitResult) -> LRTest:
    """Likelihood-ratio test of the R = identity restriction"""
    if fit_joint.spec != fit_indep.spec or fit_joint.n != fit_indep.n:
        raise MismatchedModelsError("joint and independent fits use different models or data")
    if fit_joint.independent or not fit_indep.independent:
        raise MismatchedModelsError("expected a joint fit and a fit with R fixed at identity")
    df = fit_joint.spec.n_correlations
    if df == 0:
        raise MismatchedModelsError("a single-equation model has no correlations to test")
    stat = 2.0 * (fit_joint.ll - fit_indep.ll)
    if stat < -1e-6:
        warnings.warn(f"negative likelihood-ratio statistic {stat:.3g} clamped to zero", LRStatisticWarning)
        logger.warning("likelihood-ratio statistic %.3g clamped to zero", stat)
    stat = max(stat, 0.0)
    return LRTest(stat=stat, df=df, p_value=float(chi2.sf(stat, df)))
