"""
Configuration Management Module
Strict JSON run configuration with every default materialized in one place
"""

import copy
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional

from .errors import ConfigError
from .estimate import FitOptions
from .features import (
    DEFAULT_BAND_MIDPOINTS,
    MERGE_PRESETS,
    MergeMap,
    StageLabel,
    check_band_map,
)
from .model import EquationSpec, ModelSpec, ParameterSet
from .predict import ContourRequest
from .simulate import CovariateGenerator

logger = logging.getLogger(__name__)

WALK_CYCLE_LABELS = {StageLabel.PC1, StageLabel.PC2, StageLabel.C, StageLabel.P, StageLabel.A, StageLabel.M}
BIKESHARE_LABELS = {StageLabel.PC, StageLabel.C1, StageLabel.C2, StageLabel.P1, StageLabel.P2, StageLabel.AM}
STAGING_KINDS = {"walk_cycle": WALK_CYCLE_LABELS, "bikeshare": BIKESHARE_LABELS}

DEFAULT_CONFIG: Dict[str, Any] = {
    "model": None,
    "input": None,
    "output_dir": "output",
    "seed": 0,
    "threads": None,
    "fit": {
        "max_iterations": 500,
        "grad_tolerance": 1e-5,
        "rel_ll_tolerance": 1e-9,
        "start": None,
        "independent": False,
        "compare_independent": True,
        "univariate": False,
        "std_errors": True,
    },
    "simulate": {
        "n": 1000,
        "params": None,
        "covariates": {},
    },
    "params_file": None,
    "contours": {
        "svg": False,
        "requests": [],
    },
    "staging": {
        "id_column": None,
        "modes": {
            "walk": {"kind": "walk_cycle", "merge": "four_stage"},
            "cycle": {"kind": "walk_cycle", "merge": "four_stage"},
            "bikeshare": {"kind": "bikeshare", "merge": "four_stage"},
        },
    },
    "merge_maps": {},
    "band_midpoints": dict(DEFAULT_BAND_MIDPOINTS),
    "diary": {
        "id_column": None,
        "modes": ["walk", "cycle", "bikeshare", "bus", "rail", "drive_alone", "carpool", "ride_hailing"],
    },
}

# Sections whose keys are user-chosen names rather than fixed settings
FREE_FORM = {"model", "simulate.params", "simulate.covariates", "contours.requests",
             "staging.modes", "merge_maps", "band_midpoints", "diary.modes"}

EQUATION_KEYS = {"name", "n_stages", "covariates", "outcome"}
CONTOUR_KEYS = {"name", "var_a", "var_b", "range_a", "range_b", "resolution", "baseline", "joint"}
MODE_KEYS = {"kind", "merge"}


@dataclass
class FitSettings:
    max_iterations: int
    grad_tolerance: float
    rel_ll_tolerance: float
    start: Optional[List[float]]
    independent: bool
    compare_independent: bool
    univariate: bool
    std_errors: bool

    def options(self, workers: Optional[int] = None, independent: Optional[bool] = None) -> FitOptions:
        return FitOptions(
            max_iterations=self.max_iterations,
            grad_tolerance=self.grad_tolerance,
            rel_ll_tolerance=self.rel_ll_tolerance,
            start=self.start,
            independent=self.independent if independent is None else independent,
            compute_std_errors=self.std_errors,
            workers=workers,
        )


@dataclass
class StagingMode:
    kind: str
    merge: str


@dataclass
class RunConfig:
    """Validated settings for one CLI invocation"""

    model: Optional[ModelSpec]
    input: Optional[Path]
    output_dir: Path
    seed: int
    threads: Optional[int]
    fit: FitSettings
    simulate_n: int
    simulate_params: Optional[ParameterSet]
    covariates: CovariateGenerator
    params_file: Optional[Path]
    contour_svg: bool
    contours: List[ContourRequest]
    staging_id_column: Optional[str]
    staging_modes: Dict[str, StagingMode]
    merge_maps: Dict[str, MergeMap]
    band_midpoints: Dict[str, float]
    diary_id_column: Optional[str]
    diary_modes: List[str]
    custom_merge_maps: Dict[str, Dict[str, int]] = field(default_factory=dict)

    def require_model(self) -> ModelSpec:
        if self.model is None:
            raise ConfigError("model", "this command needs a model section")
        return self.model

    def require_input(self) -> Path:
        if self.input is None:
            raise ConfigError("input", "this command needs an input CSV path")
        return self.input

    def merge_map(self, name: str) -> MergeMap:
        return self.merge_maps[name]

    def to_dict(self) -> Dict[str, Any]:
        """Effective configuration with every default written out"""
        return {
            "model": None if self.model is None else self.model.to_dict(),
            "input": None if self.input is None else str(self.input),
            "output_dir": str(self.output_dir),
            "seed": self.seed,
            "threads": self.threads,
            "fit": {
                "max_iterations": self.fit.max_iterations,
                "grad_tolerance": self.fit.grad_tolerance,
                "rel_ll_tolerance": self.fit.rel_ll_tolerance,
                "start": self.fit.start,
                "independent": self.fit.independent,
                "compare_independent": self.fit.compare_independent,
                "univariate": self.fit.univariate,
                "std_errors": self.fit.std_errors,
            },
            "simulate": {
                "n": self.simulate_n,
                "params": (None if self.simulate_params is None or self.model is None
                           else self.simulate_params.to_dict(self.model)),
                "covariates": self.covariates.to_dict(),
            },
            "params_file": None if self.params_file is None else str(self.params_file),
            "contours": {
                "svg": self.contour_svg,
                "requests": [req.to_dict() for req in self.contours],
            },
            "staging": {
                "id_column": self.staging_id_column,
                "modes": {name: {"kind": m.kind, "merge": m.merge} for name, m in self.staging_modes.items()},
            },
            "merge_maps": copy.deepcopy(self.custom_merge_maps),
            "band_midpoints": dict(self.band_midpoints),
            "diary": {"id_column": self.diary_id_column, "modes": list(self.diary_modes)},
        }


def _merge(defaults: Dict[str, Any], given: Any, path: str) -> Dict[str, Any]:
    if not isinstance(given, dict):
        raise ConfigError(path, f"expected an object, got {type(given).__name__}")
    merged = copy.deepcopy(defaults)
    for key, value in given.items():
        where = f"{path}.{key}" if path else key
        if key not in defaults:
            raise ConfigError(where, "unknown key")
        if isinstance(defaults[key], dict) and where not in FREE_FORM:
            merged[key] = _merge(defaults[key], value, where)
        else:
            merged[key] = value
    return merged


def _int(value: Any, path: str, minimum: int, optional: bool = False) -> Optional[int]:
    if value is None and optional:
        return None
    if isinstance(value, bool) or not isinstance(value, int) or value < minimum:
        raise ConfigError(path, f"expected an integer >= {minimum}, got {value!r}")
    return value


def _float(value: Any, path: str, positive: bool = False) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(path, f"expected a number, got {value!r}")
    if positive and not value > 0:
        raise ConfigError(path, f"expected a positive number, got {value!r}")
    return float(value)


def _bool(value: Any, path: str) -> bool:
    if not isinstance(value, bool):
        raise ConfigError(path, f"expected true or false, got {value!r}")
    return value


def _optional_str(value: Any, path: str) -> Optional[str]:
    if value is not None and (not isinstance(value, str) or not value):
        raise ConfigError(path, f"expected a non-empty string, got {value!r}")
    return value


def _path(value: Any, path: str, base_dir: Path, optional: bool = True) -> Optional[Path]:
    value = _optional_str(value, path)
    if value is None:
        if optional:
            return None
        raise ConfigError(path, "a path is required")
    p = Path(value)
    return p if p.is_absolute() else (base_dir / p).resolve()


def _parse_model(raw: Any) -> Optional[ModelSpec]:
    if raw is None:
        return None
    if not isinstance(raw, dict) or set(raw) != {"equations"}:
        raise ConfigError("model", "expected an object with a single 'equations' list")
    equations = raw["equations"]
    if not isinstance(equations, list) or not equations:
        raise ConfigError("model.equations", "expected a non-empty list")
    specs, outcomes = [], []
    for i, item in enumerate(equations):
        where = f"model.equations[{i}]"
        if not isinstance(item, dict):
            raise ConfigError(where, "expected an object")
        unknown = set(item) - EQUATION_KEYS
        if unknown:
            raise ConfigError(f"{where}.{sorted(unknown)[0]}", "unknown key")
        missing = {"name", "n_stages", "outcome"} - set(item)
        if missing:
            raise ConfigError(f"{where}.{sorted(missing)[0]}", "required key is missing")
        covariates = item.get("covariates", [])
        if not isinstance(covariates, list) or not all(isinstance(c, str) and c for c in covariates):
            raise ConfigError(f"{where}.covariates", "expected a list of column names")
        try:
            specs.append(EquationSpec(name=_optional_str(item["name"], f"{where}.name"),
                                      n_stages=_int(item["n_stages"], f"{where}.n_stages", 2),
                                      covariates=tuple(covariates)))
        except ValueError as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(where, str(exc)) from exc
        outcomes.append(_optional_str(item["outcome"], f"{where}.outcome"))
    try:
        return ModelSpec(equations=tuple(specs), outcome_columns=tuple(outcomes))
    except ValueError as exc:
        raise ConfigError("model.equations", str(exc)) from exc


def _parse_merge_maps(raw: Any) -> Dict[str, MergeMap]:
    if not isinstance(raw, dict):
        raise ConfigError("merge_maps", "expected an object of named maps")
    maps = dict(MERGE_PRESETS)
    for name, mapping in raw.items():
        where = f"merge_maps.{name}"
        if name in MERGE_PRESETS:
            raise ConfigError(where, "name clashes with a built-in preset")
        if not isinstance(mapping, dict):
            raise ConfigError(where, "expected an object of stage label -> ordinal")
        try:
            maps[name] = MergeMap.from_dict(mapping, name=name)
        except ValueError as exc:
            raise ConfigError(where, str(exc)) from exc
    return maps


def _parse_staging(raw: Dict[str, Any], maps: Dict[str, MergeMap]) -> Dict[str, StagingMode]:
    modes = raw["modes"]
    if not isinstance(modes, dict) or not modes:
        raise ConfigError("staging.modes", "expected a non-empty object of mode settings")
    result = {}
    for name, entry in modes.items():
        where = f"staging.modes.{name}"
        if not isinstance(entry, dict):
            raise ConfigError(where, "expected an object")
        unknown = set(entry) - MODE_KEYS
        if unknown:
            raise ConfigError(f"{where}.{sorted(unknown)[0]}", "unknown key")
        kind = entry.get("kind", "walk_cycle")
        if kind not in STAGING_KINDS:
            raise ConfigError(f"{where}.kind", f"expected one of {sorted(STAGING_KINDS)}, got {kind!r}")
        merge = entry.get("merge", "four_stage")
        if merge not in maps:
            raise ConfigError(f"{where}.merge", f"unknown merge map {merge!r}")
        uncovered = STAGING_KINDS[kind] - set(maps[merge].mapping)
        if uncovered:
            raise ConfigError(f"{where}.merge",
                              f"map {merge!r} does not cover {sorted(l.value for l in uncovered)}")
        result[name] = StagingMode(kind=kind, merge=merge)
    return result


def _parse_contours(raw: Any, model: Optional[ModelSpec]) -> List[ContourRequest]:
    if not isinstance(raw, list):
        raise ConfigError("contours.requests", "expected a list")
    requests = []
    for i, item in enumerate(raw):
        where = f"contours.requests[{i}]"
        if not isinstance(item, dict):
            raise ConfigError(where, "expected an object")
        unknown = set(item) - CONTOUR_KEYS
        if unknown:
            raise ConfigError(f"{where}.{sorted(unknown)[0]}", "unknown key")
        missing = {"var_a", "var_b", "range_a", "range_b"} - set(item)
        if missing:
            raise ConfigError(f"{where}.{sorted(missing)[0]}", "required key is missing")
        try:
            req = ContourRequest(
                var_a=item["var_a"], var_b=item["var_b"],
                range_a=item["range_a"], range_b=item["range_b"],
                resolution=_int(item.get("resolution", 101), f"{where}.resolution", 2),
                baseline=item.get("baseline", {}),
                joint=_bool(item.get("joint", False), f"{where}.joint"),
                name=item.get("name", ""),
            )
            if model is not None:
                req.validate(model)
        except (TypeError, ValueError, AttributeError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(where, str(exc)) from exc
        requests.append(req)
    names = [r.name for r in requests]
    if len(set(names)) != len(names):
        raise ConfigError("contours.requests", "request names must be distinct")
    return requests


def parse_config(text: str, base_dir: Optional[Path] = None) -> RunConfig:
    """Parse and validate a JSON run configuration; unknown keys are errors"""
    base_dir = Path(base_dir or Path.cwd())
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError("", f"invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    data = _merge(DEFAULT_CONFIG, raw, "")

    model = _parse_model(data["model"])
    fit_raw = data["fit"]
    start = fit_raw["start"]
    if start is not None:
        if not isinstance(start, list):
            raise ConfigError("fit.start", "expected a list of numbers")
        start = [_float(v, f"fit.start[{i}]") for i, v in enumerate(start)]
        if model is not None and len(start) != model.n_params:
            raise ConfigError("fit.start", f"expected {model.n_params} values, got {len(start)}")
    fit = FitSettings(
        max_iterations=_int(fit_raw["max_iterations"], "fit.max_iterations", 1),
        grad_tolerance=_float(fit_raw["grad_tolerance"], "fit.grad_tolerance", positive=True),
        rel_ll_tolerance=_float(fit_raw["rel_ll_tolerance"], "fit.rel_ll_tolerance", positive=True),
        start=start,
        independent=_bool(fit_raw["independent"], "fit.independent"),
        compare_independent=_bool(fit_raw["compare_independent"], "fit.compare_independent"),
        univariate=_bool(fit_raw["univariate"], "fit.univariate"),
        std_errors=_bool(fit_raw["std_errors"], "fit.std_errors"),
    )

    sim = data["simulate"]
    params = None
    if sim["params"] is not None:
        if model is None:
            raise ConfigError("simulate.params", "parameters need a model section")
        if not isinstance(sim["params"], dict) or set(sim["params"]) - {"equations", "correlations"}:
            raise ConfigError("simulate.params", "expected an object with 'equations' and 'correlations'")
        try:
            params = ParameterSet.from_dict(sim["params"], model)
        except (TypeError, ValueError) as exc:
            raise ConfigError("simulate.params", str(exc)) from exc
    if not isinstance(sim["covariates"], dict):
        raise ConfigError("simulate.covariates", "expected an object of column -> distribution")
    for col in sim["covariates"]:
        if model is not None and col not in model.covariate_columns:
            raise ConfigError(f"simulate.covariates.{col}", "column is not a covariate of the model")
    try:
        covariates = CovariateGenerator.from_dict(sim["covariates"])
    except (TypeError, ValueError) as exc:
        raise ConfigError("simulate.covariates", str(exc)) from exc

    contours = data["contours"]
    maps = _parse_merge_maps(data["merge_maps"])
    staging = data["staging"]
    if not isinstance(data["band_midpoints"], dict):
        raise ConfigError("band_midpoints", "expected an object of band -> trips per week")
    try:
        bands = check_band_map(data["band_midpoints"])
    except (TypeError, ValueError) as exc:
        raise ConfigError("band_midpoints", str(exc)) from exc
    diary_modes = data["diary"]["modes"]
    if not isinstance(diary_modes, list) or not diary_modes or not all(isinstance(m, str) and m for m in diary_modes):
        raise ConfigError("diary.modes", "expected a non-empty list of column names")
    if len(set(diary_modes)) != len(diary_modes):
        raise ConfigError("diary.modes", "mode columns must be distinct")

    return RunConfig(
        model=model,
        input=_path(data["input"], "input", base_dir),
        output_dir=_path(data["output_dir"], "output_dir", base_dir, optional=False),
        seed=_int(data["seed"], "seed", 0),
        threads=_int(data["threads"], "threads", 1, optional=True),
        fit=fit,
        simulate_n=_int(sim["n"], "simulate.n", 1),
        simulate_params=params,
        covariates=covariates,
        params_file=_path(data["params_file"], "params_file", base_dir),
        contour_svg=_bool(contours["svg"], "contours.svg"),
        contours=_parse_contours(contours["requests"], model),
        staging_id_column=_optional_str(staging["id_column"], "staging.id_column"),
        staging_modes=_parse_staging(staging, maps),
        merge_maps=maps,
        band_midpoints=bands,
        diary_id_column=_optional_str(data["diary"]["id_column"], "diary.id_column"),
        diary_modes=list(diary_modes),
        custom_merge_maps={k: dict(v) for k, v in data["merge_maps"].items()},
    )


def load_config(path: Path) -> RunConfig:
    """Read a config file; relative paths inside it resolve against its directory"""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError("", f"cannot read config file {path}: {exc}") from exc
    logger.info("loaded configuration from %s", path)
    return parse_config(text, base_dir=path.parent.resolve())
