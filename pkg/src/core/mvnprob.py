"""
Multivariate Normal Probability Module
Standard normal CDFs in one, two and three dimensions and the box
probabilities assembled from them by inclusion-exclusion

Every function accepts scalars or equally shaped arrays of bounds and is
vectorized over the bounds; the correlation is shared by all elements.
"""

import itertools
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, List, Optional, Sequence, Tuple, Union

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.special import ndtr

from .errors import (
    DegenerateCorrelationError,
    InvalidBoundError,
    InvalidCellError,
    NumericalAssemblyError,
    ShapeError,
)

# Tail mass beyond this many standard deviations is below 1e-16
BOUND_CLIP = 8.5
NEGATIVE_TOLERANCE = 1e-12
HIGH_CORRELATION = 0.925
TVN_ORDER = 20
TVN_PANELS = 2

TWO_PI = 2.0 * math.pi

ArrayLike = Union[float, np.ndarray]


@dataclass(frozen=True)
class Corr3:
    """Off-diagonal entries of a 3x3 unit-diagonal correlation matrix"""

    r12: float = 0.0
    r13: float = 0.0
    r23: float = 0.0

    def __post_init__(self):
        for name in ("r12", "r13", "r23"):
            value = getattr(self, name)
            if not math.isfinite(value) or abs(value) >= 1.0:
                raise DegenerateCorrelationError(f"{name}={value} must lie in (-1, 1)")
        if self.determinant <= 0.0:
            raise DegenerateCorrelationError(
                f"correlations ({self.r12}, {self.r13}, {self.r23}) are not positive definite"
            )

    @property
    def determinant(self) -> float:
        return (1.0 + 2.0 * self.r12 * self.r13 * self.r23
                - self.r12 ** 2 - self.r13 ** 2 - self.r23 ** 2)

    @property
    def is_identity(self) -> bool:
        return self.r12 == 0.0 and self.r13 == 0.0 and self.r23 == 0.0

    def pair(self, i: int, j: int) -> float:
        """Correlation between variables i and j (0-based)"""
        if i == j:
            return 1.0
        key = (min(i, j), max(i, j))
        return {(0, 1): self.r12, (0, 2): self.r13, (1, 2): self.r23}[key]

    def matrix(self) -> np.ndarray:
        return np.array([
            [1.0, self.r12, self.r13],
            [self.r12, 1.0, self.r23],
            [self.r13, self.r23, 1.0],
        ])

    def permuted(self, order: Sequence[int]) -> "Corr3":
        """Correlations of the variables reordered as `order`"""
        return Corr3(
            r12=self.pair(order[0], order[1]),
            r13=self.pair(order[0], order[2]),
            r23=self.pair(order[1], order[2]),
        )

    @classmethod
    def from_matrix(cls, matrix: np.ndarray) -> "Corr3":
        m = np.asarray(matrix, dtype=float)
        if m.shape != (3, 3):
            raise ShapeError(f"expected a 3x3 correlation matrix, got shape {m.shape}")
        return cls(r12=float(m[0, 1]), r13=float(m[0, 2]), r23=float(m[1, 2]))


@lru_cache(maxsize=None)
def _gauss_legendre(order: int, panels: int = 1) -> Tuple[np.ndarray, np.ndarray]:
    """Composite Gauss-Legendre nodes and weights on [0, 1]"""
    x, w = leggauss(order)
    base_t = (x + 1.0) / 2.0
    base_w = w / 2.0
    nodes = np.concatenate([(p + base_t) / panels for p in range(panels)])
    weights = np.concatenate([base_w / panels for _ in range(panels)])
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return nodes, weights


def _as_bounds(*values: ArrayLike) -> List[np.ndarray]:
    arrays = np.broadcast_arrays(*[np.asarray(v, dtype=float) for v in values])
    for arr in arrays:
        if np.isnan(arr).any():
            raise InvalidBoundError("integration bound is NaN")
    return [np.array(a, dtype=float).reshape(-1) for a in arrays]


def _shape_of(*values: ArrayLike) -> Tuple[int, ...]:
    return np.broadcast(*[np.asarray(v, dtype=float) for v in values]).shape


def _restore(flat: np.ndarray, shape: Tuple[int, ...]) -> ArrayLike:
    if shape == ():
        return float(flat[0])
    return flat.reshape(shape)


def _clip(x: np.ndarray) -> np.ndarray:
    return np.clip(x, -BOUND_CLIP, BOUND_CLIP)


def std_normal_cdf(x: ArrayLike) -> ArrayLike:
    """Standard normal CDF; NaN input is rejected"""
    arr = np.asarray(x, dtype=float)
    if np.isnan(arr).any():
        raise InvalidBoundError("integration bound is NaN")
    out = ndtr(arr)
    return float(out) if out.ndim == 0 else out


def _check_rho(rho: float) -> float:
    rho = float(rho)
    if not math.isfinite(rho) or abs(rho) >= 1.0:
        raise DegenerateCorrelationError(f"rho={rho} must lie in (-1, 1)")
    return rho


def _bvn_finite(x: np.ndarray, y: np.ndarray, r: float) -> np.ndarray:
    """P(X <= x, Y <= y) for clipped finite bounds (Drezner-Wesolowsky / Genz)"""
    if r == 0.0:
        return ndtr(x) * ndtr(y)

    if abs(r) < HIGH_CORRELATION:
        order = 6 if abs(r) < 0.3 else (12 if abs(r) < 0.75 else 20)
        t, w = _gauss_legendre(order)
        asr = math.asin(r)
        sn = np.sin(asr * t)
        hk = (x * y)[:, None]
        hs = ((x * x + y * y) / 2.0)[:, None]
        integral = np.exp((sn * hk - hs) / (1.0 - sn * sn)) @ w
        return integral * asr / TWO_PI + ndtr(x) * ndtr(y)

    # |r| close to one: integrate the deviation from the degenerate case
    h = -x
    k = -y if r > 0 else y
    hk = h * k
    a_sq = (1.0 - r) * (1.0 + r)
    a = math.sqrt(a_sq)
    bs = (h - k) ** 2
    c = (4.0 - hk) / 8.0
    d = (12.0 - hk) / 16.0
    bvn = a * np.exp(-(bs / a_sq + hk) / 2.0) * (
        1.0 - c * (bs - a_sq) * (1.0 - d * bs / 5.0) / 3.0 + c * d * a_sq * a_sq / 5.0
    )
    b = np.sqrt(bs)
    with np.errstate(over="ignore", invalid="ignore"):
        tail = (np.exp(-hk / 2.0) * math.sqrt(TWO_PI) * ndtr(-b / a) * b
                * (1.0 - c * bs * (1.0 - d * bs / 5.0) / 3.0))
    bvn = bvn - np.where(hk > -160.0, tail, 0.0)

    t, w = _gauss_legendre(20)
    xs = a_sq * t * t
    rs = np.sqrt(1.0 - xs)
    bs_c, hk_c = bs[:, None], hk[:, None]
    c_c, d_c = c[:, None], d[:, None]
    term = np.exp(-(bs_c / xs + hk_c) / 2.0) * (
        np.exp(-hk_c * (1.0 - rs) / (2.0 * (1.0 + rs))) / rs - (1.0 + c_c * xs * (1.0 + d_c * xs))
    )
    bvn = -(bvn + a * (term @ w)) / TWO_PI
    if r > 0:
        return bvn + ndtr(-np.maximum(h, k))
    return -bvn + np.maximum(0.0, ndtr(-h) - ndtr(-k))


def bvn_cdf(b1: ArrayLike, b2: ArrayLike, rho: float) -> ArrayLike:
    """Standard bivariate normal CDF P(X <= b1, Y <= b2) with correlation rho"""
    rho = _check_rho(rho)
    shape = _shape_of(b1, b2)
    x, y = _as_bounds(b1, b2)
    out = np.zeros(x.shape)

    vanish = (x == -np.inf) | (y == -np.inf)
    x_open = (x == np.inf) & ~vanish
    y_open = (y == np.inf) & ~vanish & ~x_open
    out[x_open] = ndtr(y[x_open])
    out[y_open] = ndtr(x[y_open])

    general = ~(vanish | x_open | y_open)
    if general.any():
        out[general] = _bvn_finite(_clip(x[general]), _clip(y[general]), rho)
    return _restore(np.clip(out, 0.0, 1.0), shape)


def _tvn_finite(h: List[np.ndarray], corr: Corr3) -> np.ndarray:
    """Trivariate CDF for clipped finite bounds via Plackett's identity

    The strongest correlated pair is held fixed while the two remaining
    correlations run from zero to their target values; the start point
    factorizes into a univariate times a bivariate CDF.
    """
    if corr.is_identity:
        return ndtr(h[0]) * ndtr(h[1]) * ndtr(h[2])

    pairs = [(0, 1), (0, 2), (1, 2)]
    i, j = max(pairs, key=lambda p: abs(corr.pair(*p)))
    m = 3 - i - j
    hm, hi, hj = h[m], h[i], h[j]
    a, b, c = corr.pair(m, i), corr.pair(m, j), corr.pair(i, j)

    result = ndtr(hm) * _bvn_finite(hi, hj, c)
    if a == 0.0 and b == 0.0:
        return result

    t, w = _gauss_legendre(TVN_ORDER, TVN_PANELS)
    ta, tb = a * t, b * t
    det = 1.0 - ta * ta - tb * tb - c * c + 2.0 * ta * tb * c
    hm_c, hi_c, hj_c = hm[:, None], hi[:, None], hj[:, None]
    integrand = np.zeros((hm.size, t.size))

    if a != 0.0:
        one = 1.0 - ta * ta
        mean = ((tb - ta * c) * hm_c + (c - ta * tb) * hi_c) / one
        u = (hj_c - mean) / np.sqrt(det / one)
        dens = np.exp(-(hm_c * hm_c - 2.0 * ta * hm_c * hi_c + hi_c * hi_c) / (2.0 * one))
        integrand += a * dens / (TWO_PI * np.sqrt(one)) * ndtr(u)
    if b != 0.0:
        one = 1.0 - tb * tb
        mean = ((ta - tb * c) * hm_c + (c - ta * tb) * hj_c) / one
        u = (hi_c - mean) / np.sqrt(det / one)
        dens = np.exp(-(hm_c * hm_c - 2.0 * tb * hm_c * hj_c + hj_c * hj_c) / (2.0 * one))
        integrand += b * dens / (TWO_PI * np.sqrt(one)) * ndtr(u)

    return result + integrand @ w


def tvn_cdf(b1: ArrayLike, b2: ArrayLike, b3: ArrayLike, r: Corr3) -> ArrayLike:
    """Standard trivariate normal CDF P(X <= b1, Y <= b2, Z <= b3)"""
    corr = r if isinstance(r, Corr3) else Corr3.from_matrix(r)
    shape = _shape_of(b1, b2, b3)
    h = _as_bounds(b1, b2, b3)
    stacked = np.vstack(h)
    out = np.zeros(h[0].shape)

    vanish = (stacked == -np.inf).any(axis=0)
    open_ = (stacked == np.inf) & ~vanish
    n_open = open_.sum(axis=0)

    # one open bound: bivariate CDF of the remaining pair
    for k in range(3):
        rows = (n_open == 1) & open_[k]
        if rows.any():
            p, q = [d for d in range(3) if d != k]
            out[rows] = bvn_cdf(h[p][rows], h[q][rows], corr.pair(p, q))
    # two open bounds: univariate CDF of the remaining one
    for k in range(3):
        rows = (n_open == 2) & ~open_[k]
        if rows.any():
            out[rows] = ndtr(h[k][rows])
    out[n_open == 3] = 1.0

    general = ~vanish & (n_open == 0)
    if general.any():
        out[general] = _tvn_finite([_clip(v[general]) for v in h], corr)
    return _restore(np.clip(out, 0.0, 1.0), shape)


def _cdf_for_dim(dim: int, corr) -> Callable[..., ArrayLike]:
    if dim == 1:
        return std_normal_cdf
    if dim == 2:
        if corr is None:
            rho = 0.0
        elif np.ndim(corr) == 0:
            rho = float(corr)
        else:
            rho = float(np.asarray(corr, dtype=float)[0, 1])
        rho = _check_rho(rho)
        return lambda x, y: bvn_cdf(x, y, rho)
    if corr is None:
        r3 = Corr3()
    elif isinstance(corr, Corr3):
        r3 = corr
    else:
        r3 = Corr3.from_matrix(corr)
    return lambda x, y, z: tvn_cdf(x, y, z, r3)


def rectangle_prob(lower: Sequence[ArrayLike], upper: Sequence[ArrayLike],
                   r: Optional[Union[Corr3, float, np.ndarray]] = None) -> ArrayLike:
    """P(lower < eps <= upper) for a standard normal vector of dimension 1-3

    `r` is a Corr3 (or 3x3 matrix) in three dimensions, a scalar or 2x2 matrix
    in two, and ignored in one.  Bounds may be arrays, evaluated elementwise.
    """
    dim = len(lower)
    if dim != len(upper) or not 1 <= dim <= 3:
        raise ShapeError(f"lower/upper must both have length 1-3, got {len(lower)} and {len(upper)}")
    shape = _shape_of(*lower, *upper)
    bounds = _as_bounds(*lower, *upper)
    lo, hi = bounds[:dim], bounds[dim:]
    for axis in range(dim):
        if np.any(lo[axis] >= hi[axis]):
            raise InvalidCellError(f"lower bound is not below upper bound on axis {axis}")

    if dim == 1:
        r = None
    elif isinstance(r, np.ndarray):
        # arrays are not hashable; reduce them before the cached lookup
        r = Corr3.from_matrix(r) if dim == 3 else float(r) if r.ndim == 0 else float(r[0, 1])
    cdf = _cdf_for_dim(dim, r)
    total = np.zeros(lo[0].shape)
    for corner in itertools.product((0, 1), repeat=dim):
        points = [hi[d] if bit else lo[d] for d, bit in enumerate(corner)]
        if any(np.all(p == -np.inf) for p in points):
            continue
        sign = -1.0 if (dim - sum(corner)) % 2 else 1.0
        total += sign * np.asarray(cdf(*points), dtype=float).reshape(-1)

    if total.size and total.min() < -NEGATIVE_TOLERANCE:
        raise NumericalAssemblyError(
            f"rectangle probability {total.min():.3e} is below -{NEGATIVE_TOLERANCE:g}"
        )
    return _restore(np.clip(total, 0.0, 1.0), shape)
