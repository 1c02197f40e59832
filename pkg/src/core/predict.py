"""
Prediction Module
Marginal and joint stage probabilities from a fitted model, and
two-covariate contour grids of the most likely stages
"""

import logging
from dataclasses import dataclass, field
from typing import Any, Dict, Iterator, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from ..utils.parallel import map_chunks
from .errors import MissingColumnError, ModelError, ShapeError
from .likelihood import cell_prob_joint, cell_prob_uni
from .model import ModelSpec, ParameterSet

logger = logging.getLogger(__name__)

DEFAULT_RESOLUTION = 101

CovariateRow = Union[Mapping[str, Any], Sequence[float], np.ndarray]


def covariate_columns(spec: ModelSpec, x: CovariateRow) -> Dict[str, np.ndarray]:
    """Column arrays for a mapping or for values ordered like spec.covariate_columns"""
    names = spec.covariate_columns
    if isinstance(x, Mapping):
        missing = [c for c in names if c not in x]
        if missing:
            raise MissingColumnError("covariate value is missing", column=missing[0])
        return {c: np.asarray(x[c], dtype=float) for c in names}
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 0 or arr.shape[-1] != len(names):
        raise ShapeError(f"expected {len(names)} covariate values ({', '.join(names)}), got shape {arr.shape}")
    return {c: arr[..., i] for i, c in enumerate(names)}


def _xb(spec: ModelSpec, params: ParameterSet, cols: Dict[str, np.ndarray], e: int) -> np.ndarray:
    eq = spec.equations[e]
    total = np.zeros(np.broadcast(*cols.values()).shape if cols else ())
    for col, b in zip(eq.covariates, params.beta[e]):
        total = total + b * cols[col]
    return total


def marginal_stage_probs(params: ParameterSet, x: CovariateRow, eq: Union[str, int],
                         spec: ModelSpec) -> np.ndarray:
    """Stage probabilities of one equation; the last axis runs over stages"""
    e = spec.equation_index(eq)
    params.validate(spec)
    xb = _xb(spec, params, covariate_columns(spec, x), e)
    stages = np.arange(spec.equations[e].n_stages)
    return np.asarray(cell_prob_uni(spec.equations[e], params.thresholds[e], stages, xb[..., None]))


def joint_stage_probs(params: ParameterSet, x: CovariateRow, spec: ModelSpec) -> np.ndarray:
    """Probability of every stage combination; one axis per equation after any row axes"""
    params.validate(spec)
    cols = covariate_columns(spec, x)
    shape = tuple(eq.n_stages for eq in spec.equations)
    cells = np.indices(shape).reshape(spec.n_equations, -1)
    xb = [_xb(spec, params, cols, e)[..., None] for e in range(spec.n_equations)]
    probs = np.asarray(cell_prob_joint(params, list(cells), xb))
    return probs.reshape(probs.shape[:-1] + shape)


@dataclass
class ContourRequest:
    """Two covariates swept over a grid with every other covariate at `baseline`"""

    var_a: str
    var_b: str
    range_a: Tuple[float, float]
    range_b: Tuple[float, float]
    resolution: int = DEFAULT_RESOLUTION
    baseline: Dict[str, float] = field(default_factory=dict)
    joint: bool = False
    name: str = ""

    def __post_init__(self):
        self.range_a = tuple(float(v) for v in self.range_a)
        self.range_b = tuple(float(v) for v in self.range_b)
        self.baseline = {k: float(v) for k, v in self.baseline.items()}
        if not self.name:
            self.name = f"{self.var_a}__{self.var_b}"

    def validate(self, spec: ModelSpec) -> "ContourRequest":
        if self.var_a == self.var_b:
            raise ModelError(f"contour axes must differ, both are '{self.var_a}'")
        for label, rng in (("range_a", self.range_a), ("range_b", self.range_b)):
            if len(rng) != 2 or not np.all(np.isfinite(rng)) or not rng[0] < rng[1]:
                raise ModelError(f"{label} must be a finite (low, high) pair with low < high, got {rng}")
        if self.resolution < 2:
            raise ModelError(f"resolution must be at least 2, got {self.resolution}")
        used = spec.covariate_columns
        for var in (self.var_a, self.var_b):
            if var not in used:
                raise ModelError(f"covariate '{var}' does not appear in any equation")
        missing = [c for c in used if c not in (self.var_a, self.var_b) and c not in self.baseline]
        if missing:
            raise MissingColumnError("baseline value is missing", column=missing[0])
        return self

    def axes(self) -> Tuple[np.ndarray, np.ndarray]:
        return (np.linspace(*self.range_a, self.resolution),
                np.linspace(*self.range_b, self.resolution))

    def to_dict(self) -> Dict[str, Any]:
        return {
            "name": self.name,
            "var_a": self.var_a,
            "var_b": self.var_b,
            "range_a": list(self.range_a),
            "range_b": list(self.range_b),
            "resolution": self.resolution,
            "baseline": dict(self.baseline),
            "joint": self.joint,
        }


@dataclass
class ContourGrid:
    """Per-node stage probabilities and argmax stages; node (i, j) is axis_a[i], axis_b[j]"""

    request: ContourRequest
    equations: List[str]
    axis_a: np.ndarray
    axis_b: np.ndarray
    probabilities: List[np.ndarray]
    argmax: List[np.ndarray]
    joint_argmax: Optional[np.ndarray] = None

    def rows(self) -> Iterator[Tuple[float, float, str, int, float, bool]]:
        """Long format in row-major node order"""
        for i, a in enumerate(self.axis_a):
            for j, b in enumerate(self.axis_b):
                for name, probs, best in zip(self.equations, self.probabilities, self.argmax):
                    for stage, p in enumerate(probs[i, j]):
                        yield float(a), float(b), name, stage, float(p), bool(stage == best[i, j])

    def joint_rows(self) -> Iterator[Tuple[Any, ...]]:
        if self.joint_argmax is None:
            return
        for i, a in enumerate(self.axis_a):
            for j, b in enumerate(self.axis_b):
                yield (float(a), float(b)) + tuple(int(s) for s in self.joint_argmax[i, j])


def contour_grid(params: ParameterSet, req: ContourRequest, spec: ModelSpec,
                 workers: Optional[int] = None) -> ContourGrid:
    """Evaluate stage probabilities at every node of the request's grid"""
    req.validate(spec)
    params.validate(spec)
    axis_a, axis_b = req.axes()
    grid_a, grid_b = np.meshgrid(axis_a, axis_b, indexing="ij")
    nodes = grid_a.size
    cols = {c: np.full(nodes, req.baseline.get(c, 0.0)) for c in spec.covariate_columns}
    cols[req.var_a] = grid_a.reshape(-1)
    cols[req.var_b] = grid_b.reshape(-1)
    shape = grid_a.shape

    probabilities, argmax = [], []
    for e, eq in enumerate(spec.equations):
        probs = marginal_stage_probs(params, cols, e, spec)
        probabilities.append(probs.reshape(shape + (eq.n_stages,)))
        argmax.append(np.argmax(probs, axis=-1).reshape(shape))

    joint_argmax = None
    if req.joint:
        stage_shape = tuple(eq.n_stages for eq in spec.equations)

        def best_cells(rows: slice) -> np.ndarray:
            tensor = joint_stage_probs(params, {c: v[rows] for c, v in cols.items()}, spec)
            flat = np.argmax(tensor.reshape(tensor.shape[0], -1), axis=1)
            return np.stack(np.unravel_index(flat, stage_shape), axis=1)

        joint_argmax = map_chunks(best_cells, nodes, workers).reshape(shape + (spec.n_equations,))

    logger.info("contour '%s': %d nodes, %d equations", req.name, nodes, spec.n_equations)
    return ContourGrid(request=req, equations=[eq.name for eq in spec.equations],
                       axis_a=axis_a, axis_b=axis_b, probabilities=probabilities,
                       argmax=argmax, joint_argmax=joint_argmax)
