"""
Data Manager Module
Reads observation tables from CSV and writes every run artifact
"""

import csv
import json
import logging
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .errors import (
    DataFormatError,
    EmptyDataError,
    MissingColumnError,
    OutcomeRangeError,
)
from .likelihood import ObservationTable
from .model import ModelSpec

logger = logging.getLogger(__name__)

MISSING_TOKENS = {"", "na", "nan", "null"}


def is_missing(value: Optional[str]) -> bool:
    return value is None or value.strip().lower() in MISSING_TOKENS


def format_value(value: Any) -> str:
    """Shortest round-trip text for floats, plain text otherwise"""
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return "" if value is None else str(value)


def read_rows(path: Path) -> Tuple[List[str], List[Dict[str, str]]]:
    """Header and raw string rows of a CSV file"""
    try:
        with open(path, "r", newline="", encoding="utf-8-sig") as file:
            reader = csv.DictReader(file)
            header = reader.fieldnames
            if not header:
                raise EmptyDataError(f"{path} has no header row")
            rows = list(reader)
    except OSError as exc:
        raise EmptyDataError(f"cannot read {path}: {exc}") from exc
    return list(header), rows


def load_table(path: Path, spec: ModelSpec, with_outcomes: bool = True) -> ObservationTable:
    """Typed observation table with complete cases in the model's columns

    With `with_outcomes` false only the covariate columns are read.
    """
    header, rows = read_rows(Path(path))
    outcome_columns = list(spec.outcome_columns) if with_outcomes else []
    for col in spec.covariate_columns + outcome_columns:
        if col not in header:
            raise MissingColumnError("required column is not in the header", column=col)
    if not rows:
        raise EmptyDataError(f"{path} has a header but no data rows")

    covariates: Dict[str, List[float]] = {c: [] for c in spec.covariate_columns}
    outcomes: Dict[str, List[int]] = {c: [] for c in outcome_columns}
    dropped = 0
    for number, row in enumerate(rows, 1):
        used = covariates.keys() | outcomes.keys()
        if any(is_missing(row.get(c)) for c in used):
            dropped += 1
            continue
        values = {}
        for col in spec.covariate_columns:
            try:
                values[col] = float(row[col])
            except ValueError:
                raise DataFormatError(f"cannot parse {row[col]!r} as a number", row=number, column=col) from None
            if not np.isfinite(values[col]):
                raise DataFormatError(f"value {row[col]!r} is not finite", row=number, column=col)
        stages = {}
        for eq, col in zip(spec.equations, outcome_columns):
            text = row[col].strip()
            try:
                stage = float(text)
            except ValueError:
                raise DataFormatError(f"cannot parse {text!r} as a stage", row=number, column=col) from None
            if not np.isfinite(stage) or stage != int(stage):
                raise DataFormatError(f"stage {text!r} is not an integer", row=number, column=col)
            if not 0 <= stage <= eq.n_stages - 1:
                raise OutcomeRangeError(
                    f"stage {text} outside 0..{eq.n_stages - 1} for equation '{eq.name}'", row=number, column=col)
            stages[col] = int(stage)
        for col, v in values.items():
            covariates[col].append(v)
        for col, s in stages.items():
            outcomes[col].append(s)

    if dropped:
        logger.warning("%d rows dropped (missing values in used columns)", dropped)
    if dropped == len(rows):
        raise EmptyDataError(f"every row of {path} has missing values in used columns")
    table = ObservationTable(
        covariates={c: np.array(v) for c, v in covariates.items()},
        outcomes={c: np.array(v, dtype=np.int64) for c, v in outcomes.items()},
        dropped_rows=dropped,
    )
    logger.info("loaded %d rows from %s", table.n, path)
    return table


class DataManager:
    """Writes run artifacts under one output directory"""

    def __init__(self, output_dir: Path):
        self.output_dir = Path(output_dir)
        self.output_dir.mkdir(parents=True, exist_ok=True)

    def path(self, name: str) -> Path:
        return self.output_dir / name

    def write_rows(self, name: str, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> Path:
        target = self.path(name)
        with open(target, "w", newline="", encoding="utf-8") as file:
            writer = csv.writer(file, lineterminator="\n")
            writer.writerow(header)
            for row in rows:
                writer.writerow([format_value(v) for v in row])
        logger.info("wrote %s", target)
        return target

    def write_table(self, name: str, table: ObservationTable, spec: ModelSpec) -> Path:
        """Covariates in model order, then one stage column per equation"""
        header = spec.covariate_columns + list(spec.outcome_columns)
        columns = [table.covariates[c] for c in spec.covariate_columns]
        columns += [table.outcomes[c].astype(int) for c in spec.outcome_columns]
        rows = ([col[i] for col in columns] for i in range(table.n))
        return self.write_rows(name, header, rows)

    def write_json(self, name: str, data: Dict[str, Any]) -> Path:
        target = self.path(name)
        target.write_text(json.dumps(data, indent=2, ensure_ascii=False, allow_nan=False) + "\n",
                          encoding="utf-8")
        logger.info("wrote %s", target)
        return target

    def write_text(self, name: str, text: str) -> Path:
        target = self.path(name)
        target.write_text(text if text.endswith("\n") else text + "\n", encoding="utf-8")
        logger.info("wrote %s", target)
        return target

    def write_bytes(self, name: str, data: bytes) -> Path:
        target = self.path(name)
        target.write_bytes(data)
        logger.info("wrote %s", target)
        return target


def load_json(path: Path) -> Dict[str, Any]:
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise DataFormatError(f"cannot read JSON from {path}: {exc}") from exc
