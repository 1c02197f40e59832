"""
Application Controller
Command-line entry point and command handling
"""

import argparse
import logging
import re
import sys
import warnings
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np
from rich.logging import RichHandler

from . import __version__
from .core.config import RunConfig, load_config
from .core.data_manager import DataManager, load_json, load_table, read_rows
from .core.errors import (
    ConfigError,
    ConvergenceError,
    DataError,
    EstimationError,
    MissingColumnError,
    ModelError,
    MvoprobitError,
    ResponseError,
    UsageError,
)
from .core.estimate import fit, fit_univariate, lr_test_independence
from .core.features import TripDiary, assign_stage_bikeshare, assign_stage_walk_cycle
from .core.model import ModelSpec, ParameterSet
from .core.mvnprob import Corr3, rectangle_prob
from .core.predict import contour_grid, joint_stage_probs, marginal_stage_probs
from .core.simulate import empirical_stage_shares, sample_dataset
from .ui.display import UIManager, console
from .ui.heatmap import render_argmax_svg
from .ui.input_handler import InputHandler, parse_number_list
from .utils.parallel import map_chunks, set_max_workers

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_NUMERICAL = 2

COMMANDS = ("simulate", "fit", "predict", "contour", "stage", "sei", "mvnprob")
NUMBER_LIST_OPTIONS = ("--upper", "--lower", "--rho")
NEGATIVE_VALUE = re.compile(r"^-(\d|\.\d|inf)", re.IGNORECASE)


def join_negative_values(argv: Sequence[str]) -> List[str]:
    """Glue `--lower -1,-1` into `--lower=-1,-1` so argparse does not read the value as a flag"""
    out: List[str] = []
    tokens = list(argv)
    i = 0
    while i < len(tokens):
        token = tokens[i]
        if token in NUMBER_LIST_OPTIONS and i + 1 < len(tokens) and NEGATIVE_VALUE.match(tokens[i + 1]):
            out.append(f"{token}={tokens[i + 1]}")
            i += 2
            continue
        out.append(token)
        i += 1
    return out


class ArgumentParser(argparse.ArgumentParser):
    """argparse parser that raises instead of exiting on bad usage"""

    def parse_args(self, args=None, namespace=None):
        args = sys.argv[1:] if args is None else args
        return super().parse_args(join_negative_values(args), namespace)

    def error(self, message: str):
        raise UsageError(message)


def build_parser() -> ArgumentParser:
    parser = ArgumentParser(prog="mvoprobit",
                            description="Multivariate ordered probit estimation and stage-of-change tooling")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--config", type=Path, help="JSON run configuration")
    parser.add_argument("--threads", type=int, help="cap on worker threads (results do not depend on it)")
    parser.add_argument("--strict", action="store_true", help="exit with status 2 when a fit does not converge")
    parser.add_argument("--verbose", "-v", action="store_true", help="debug logging")
    parser.add_argument("--quiet", "-q", action="store_true", help="only print errors and warnings")

    sub = parser.add_subparsers(dest="command", metavar="command")
    sub.add_parser("simulate", help="draw a synthetic dataset from simulate.params")
    sub.add_parser("fit", help="fit the model to the input CSV")
    sub.add_parser("predict", help="stage probabilities for every input row")
    sub.add_parser("contour", help="two-covariate grids of the most likely stage")
    sub.add_parser("stage", help="assign stages of change from raw survey answers")
    sub.add_parser("sei", help="append SEI and HHI columns to a trip diary CSV")
    mvn = sub.add_parser("mvnprob", help="evaluate one rectangle probability")
    mvn.add_argument("--upper", required=True, help="comma-separated upper bounds (1-3 values)")
    mvn.add_argument("--lower", help="comma-separated lower bounds (default -inf)")
    mvn.add_argument("--rho", help="correlations: r12 for two dimensions, r12,r13,r23 for three")
    return parser


def setup_logging(verbose: bool):
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.WARNING,
        format="%(message)s",
        datefmt="[%X]",
        handlers=[RichHandler(console=console, show_path=False, rich_tracebacks=verbose)],
        force=True,
    )


class MvoprobitApp:
    """Runs one command against a run configuration"""

    def __init__(self, config: Optional[RunConfig], args: argparse.Namespace):
        self.config = config
        self.args = args
        self.ui = UIManager(quiet=args.quiet)
        self.workers = args.threads if args.threads is not None else (config.threads if config else None)

    def run(self, command: str) -> int:
        handlers: Dict[str, Callable[[], int]] = {
            "simulate": self._simulate,
            "fit": self._fit,
            "predict": self._predict,
            "contour": self._contour,
            "stage": self._stage,
            "sei": self._sei,
            "mvnprob": self._mvnprob,
        }
        handler = handlers.get(command)
        if handler is None:
            raise UsageError(f"unknown command: {command}")
        code = handler()
        if self.config is not None and command != "mvnprob":
            self._data().write_json("effective_config.json", self.config.to_dict())
        return code

    def _data(self) -> DataManager:
        return DataManager(self.config.output_dir)

    def _load_params(self, spec: ModelSpec) -> ParameterSet:
        """Parameters from params_file (fit result or bare parameters), else simulate.params"""
        cfg = self.config
        if cfg.params_file is not None:
            data = load_json(cfg.params_file)
            if "model" in data:
                if ModelSpec.from_dict(data["model"]) != spec:
                    raise ConfigError("params_file", "fitted model differs from the configured model")
                data = data["params"]
            try:
                return ParameterSet.from_dict(data, spec)
            except (KeyError, TypeError) as exc:
                raise ConfigError("params_file", f"malformed parameters: {exc}") from exc
        if cfg.simulate_params is not None:
            return cfg.simulate_params
        raise ConfigError("params_file", "this command needs params_file or simulate.params")

    def _simulate(self) -> int:
        cfg = self.config
        spec = cfg.require_model()
        if cfg.simulate_params is None:
            raise ConfigError("simulate.params", "simulation needs true parameters")
        table = sample_dataset(spec, cfg.simulate_params, cfg.simulate_n, cfg.covariates, cfg.seed)
        path = self._data().write_table("simulated.csv", table, spec)
        self.ui.show_stage_shares(spec, empirical_stage_shares(table, spec), title="Simulated stage shares")
        self.ui.show_success(f"Simulated {table.n} rows -> {path}")
        return EXIT_OK

    def _fit(self) -> int:
        cfg = self.config
        spec = cfg.require_model()
        data = load_table(cfg.require_input(), spec)
        if data.dropped_rows:
            self.ui.show_warning(f"{data.dropped_rows} rows dropped (missing values in used columns)")
        self.ui.show_stage_shares(spec, empirical_stage_shares(data, spec))
        out = self._data()

        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            result = fit(spec, data, cfg.fit.options(self.workers))
            if cfg.fit.compare_independent and spec.n_equations > 1 and not cfg.fit.independent:
                indep = fit(spec, data, cfg.fit.options(self.workers, independent=True))
                result.lr_test = lr_test_independence(result, indep)
                out.write_json("fit_result_independent.json", indep.to_dict())
            if cfg.fit.univariate:
                for eq, uni in zip(spec.equations, fit_univariate(spec, data, cfg.fit.options(self.workers))):
                    out.write_json(f"fit_univariate_{eq.name}.json", uni.to_dict())
        for item in caught:
            self.ui.show_warning(str(item.message))

        out.write_json("fit_result.json", result.to_dict())
        out.write_text("fit_summary.txt", self.ui.render_fit_summary(result))
        self.ui.show_fit_summary(result)
        if not result.converged:
            message = f"optimizer did not converge: {result.message}"
            if self.args.strict:
                raise ConvergenceError(message)
            self.ui.show_warning(message)
        self.ui.show_success(f"Fit written to {out.output_dir}")
        return EXIT_OK

    def _predict(self) -> int:
        cfg = self.config
        spec = cfg.require_model()
        params = self._load_params(spec)
        data = load_table(cfg.require_input(), spec, with_outcomes=False)
        cols = data.covariates
        marginals = [marginal_stage_probs(params, cols, e, spec) for e in range(spec.n_equations)]
        shape = tuple(eq.n_stages for eq in spec.equations)

        def best(rows: slice) -> np.ndarray:
            tensor = joint_stage_probs(params, {c: v[rows] for c, v in cols.items()}, spec)
            flat = tensor.reshape(tensor.shape[0], -1)
            idx = np.argmax(flat, axis=1)
            cells = np.stack(np.unravel_index(idx, shape), axis=1)
            return np.column_stack([cells, flat[np.arange(flat.shape[0]), idx]])

        joint = map_chunks(best, data.n, self.workers)
        header = ["row"]
        for eq in spec.equations:
            header += [f"{eq.name}_p{j}" for j in range(eq.n_stages)] + [f"{eq.name}_argmax"]
        header += [f"joint_{eq.name}" for eq in spec.equations] + ["joint_probability"]

        def rows():
            for i in range(data.n):
                row: List[object] = [i + 1]
                for probs in marginals:
                    row += [float(p) for p in probs[i]] + [int(np.argmax(probs[i]))]
                row += [int(s) for s in joint[i, :-1]] + [float(joint[i, -1])]
                yield row

        path = self._data().write_rows("predictions.csv", header, rows())
        self.ui.show_success(f"Predicted {data.n} rows -> {path}")
        return EXIT_OK

    def _contour(self) -> int:
        cfg = self.config
        spec = cfg.require_model()
        if not cfg.contours:
            raise ConfigError("contours.requests", "no contour requests configured")
        params = self._load_params(spec)
        out = self._data()
        for req in cfg.contours:
            grid = contour_grid(params, req, spec, self.workers)
            header = [req.var_a, req.var_b, "equation", "stage", "probability", "is_argmax"]
            out.write_rows(f"contour_{req.name}.csv", header, grid.rows())
            if grid.joint_argmax is not None:
                out.write_rows(f"contour_{req.name}_joint.csv",
                               [req.var_a, req.var_b] + [eq.name for eq in spec.equations],
                               grid.joint_rows())
            if cfg.contour_svg:
                for e, eq in enumerate(spec.equations):
                    out.write_bytes(f"contour_{req.name}_{eq.name}.svg",
                                    render_argmax_svg(grid, e, eq.n_stages))
            self.ui.show_success(f"Contour '{req.name}': {grid.axis_a.size} x {grid.axis_b.size} nodes")
        return EXIT_OK

    def _stage(self) -> int:
        cfg = self.config
        header, rows = read_rows(cfg.require_input())
        id_col = cfg.staging_id_column
        if id_col is not None and id_col not in header:
            raise MissingColumnError("id column is not in the header", column=id_col)
        out_header = ([id_col] if id_col else [])
        for mode in cfg.staging_modes:
            out_header += [f"{mode}_label", f"{mode}_stage"]

        counts: Dict[str, int] = {}
        results = []
        for number, row in enumerate(rows, 1):
            handler = InputHandler(row, number)
            record = [row[id_col]] if id_col else []
            for mode, setting in cfg.staging_modes.items():
                if setting.kind == "walk_cycle":
                    label = assign_stage_walk_cycle(handler.walk_cycle(mode))
                else:
                    label = assign_stage_bikeshare(handler.bikeshare(mode))
                record += [label.value, cfg.merge_map(setting.merge).apply(label)]
                counts[f"{mode} {label.value}"] = counts.get(f"{mode} {label.value}", 0) + 1
            results.append(record)

        path = self._data().write_rows("stages.csv", out_header, results)
        self.ui.show_statistics(dict(sorted(counts.items())), title="Stage labels")
        self.ui.show_success(f"Staged {len(results)} respondents -> {path}")
        return EXIT_OK

    def _sei(self) -> int:
        cfg = self.config
        header, rows = read_rows(cfg.require_input())
        for mode in cfg.diary_modes:
            if mode not in header:
                raise MissingColumnError("diary mode column is not in the header", column=mode)
        results = []
        for number, row in enumerate(rows, 1):
            try:
                diary = TripDiary(tuple(cfg.diary_modes), tuple(row[m] or "" for m in cfg.diary_modes),
                                  cfg.band_midpoints)
                indices = [diary.sei(), diary.hhi()]
            except ResponseError as exc:
                raise type(exc)(f"row {number}: {exc}") from exc
            results.append([row.get(h) for h in header] + indices)
        path = self._data().write_rows("sei.csv", header + ["sei", "hhi"], results)
        self.ui.show_success(f"Indices for {len(results)} diaries -> {path}")
        return EXIT_OK

    def _mvnprob(self) -> int:
        upper = parse_number_list(self.args.upper, "--upper")
        dim = len(upper)
        lower = parse_number_list(self.args.lower, "--lower") if self.args.lower else [-np.inf] * dim
        if len(lower) != dim or not 1 <= dim <= 3:
            raise UsageError("--lower and --upper need the same number of values (1-3)")
        rho = parse_number_list(self.args.rho, "--rho") if self.args.rho else [0.0] * (dim * (dim - 1) // 2)
        if len(rho) != dim * (dim - 1) // 2:
            raise UsageError(f"--rho needs {dim * (dim - 1) // 2} values for {dim} dimensions")
        corr = None if dim == 1 else (rho[0] if dim == 2 else Corr3(*rho))
        value = rectangle_prob(lower, upper, corr)
        print(format(float(value), ".15g"))
        return EXIT_OK


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Console entry point; returns the process exit status"""
    parser = build_parser()
    ui = UIManager()
    try:
        args = parser.parse_args(argv)
        setup_logging(args.verbose)
        if args.command is None:
            raise UsageError(f"a command is required: {', '.join(COMMANDS)}")
        if args.threads is not None and args.threads < 1:
            raise UsageError("--threads must be at least 1")
        config = None
        if args.config is not None:
            config = load_config(args.config)
        elif args.command != "mvnprob":
            raise UsageError(f"'{args.command}' needs --config")
        workers = args.threads if args.threads is not None else (config.threads if config else None)
        set_max_workers(workers)
        return MvoprobitApp(config, args).run(args.command)
    except (ConfigError, DataError, ResponseError, UsageError) as exc:
        ui.show_error(str(exc))
        return EXIT_USAGE
    except (ModelError, EstimationError) as exc:
        ui.show_error(str(exc))
        return EXIT_NUMERICAL
    except MvoprobitError as exc:
        ui.show_error(str(exc))
        return EXIT_USAGE
    except ValueError as exc:
        # number lists and other plain value errors from the command line
        ui.show_error(str(exc))
        return EXIT_USAGE
    except OSError as exc:
        ui.show_error(f"I/O error: {exc}")
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
