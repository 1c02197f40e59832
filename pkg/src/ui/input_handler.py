"""
Input Handler Module
Turns raw survey answer rows and command-line value lists into typed inputs
"""

from typing import Dict, List, Optional

from ..core.errors import (
    DataFormatError,
    IncompleteResponseError,
    InconsistentResponseError,
    MissingColumnError,
    ResponseError,
    UnknownLabelError,
)
from ..core.features import BehaviorStatus, BikeshareAnswers, Duration, WalkCycleAnswers

YES = {"yes", "y", "true", "1"}
NO = {"no", "n", "false", "0"}

WALK_CYCLE_FIELDS = ("status", "realistic", "expect", "duration")
BIKESHARE_FIELDS = ("weekly", "contemplate", "accessible", "likelihood")


def answer_columns(mode: str, kind: str) -> List[str]:
    """Raw answer columns a staging mode reads"""
    fields = WALK_CYCLE_FIELDS if kind == "walk_cycle" else BIKESHARE_FIELDS
    return [f"{mode}_{name}" for name in fields]


def parse_number_list(text: str, flag: str) -> List[float]:
    """Comma-separated reals; 'inf' and '-inf' are accepted"""
    values = []
    for part in text.split(","):
        part = part.strip()
        try:
            values.append(float(part))
        except ValueError:
            raise ValueError(f"{flag}: cannot parse {part!r} as a number") from None
    return values


class InputHandler:
    """Parses one row of raw staging answers per call"""

    def __init__(self, row: Dict[str, Optional[str]], number: int):
        self.row = row
        self.number = number

    def _text(self, column: str) -> Optional[str]:
        value = self.row.get(column)
        if value is None or value.strip() == "":
            return None
        return value.strip()

    def _bool(self, column: str) -> Optional[bool]:
        value = self._text(column)
        if value is None:
            return None
        if value.lower() in YES:
            return True
        if value.lower() in NO:
            return False
        raise DataFormatError(f"expected yes or no, got {value!r}", row=self.number, column=column)

    def _reraise(self, mode: str, exc: ResponseError) -> ResponseError:
        return type(exc)(f"row {self.number}, {mode}: {exc}")

    def walk_cycle(self, mode: str) -> WalkCycleAnswers:
        status_col, realistic_col, expect_col, duration_col = answer_columns(mode, "walk_cycle")
        if status_col not in self.row:
            raise MissingColumnError("staging answer column is missing", column=status_col)
        status = self._text(status_col)
        if status is None:
            raise IncompleteResponseError(f"row {self.number}, {mode}: behavior status is blank")
        try:
            status = BehaviorStatus(status.lower())
        except ValueError:
            raise UnknownLabelError(f"row {self.number}, {mode}: unknown behavior status {status!r}") from None
        duration = self._text(duration_col)
        if duration is not None:
            try:
                duration = Duration(duration.lower())
            except ValueError:
                raise UnknownLabelError(f"row {self.number}, {mode}: unknown duration {duration!r}") from None
        try:
            return WalkCycleAnswers(
                behavior_status=status,
                realistic=self._bool(realistic_col),
                expect_near_future=self._bool(expect_col),
                duration=duration,
            )
        except (IncompleteResponseError, InconsistentResponseError) as exc:
            raise self._reraise(mode, exc) from exc

    def bikeshare(self, mode: str) -> BikeshareAnswers:
        weekly_col, contemplate_col, accessible_col, likelihood_col = answer_columns(mode, "bikeshare")
        if weekly_col not in self.row:
            raise MissingColumnError("staging answer column is missing", column=weekly_col)
        weekly = self._bool(weekly_col)
        if weekly is None:
            raise IncompleteResponseError(f"row {self.number}, {mode}: weekly use answer is blank")
        likelihood = self._text(likelihood_col)
        if likelihood is not None:
            try:
                likelihood = int(likelihood)
            except ValueError:
                raise DataFormatError(f"expected an integer from 1 to 5, got {likelihood!r}",
                                      row=self.number, column=likelihood_col) from None
        try:
            return BikeshareAnswers(
                weekly_use_expected=weekly,
                would_contemplate=self._bool(contemplate_col),
                accessible=self._bool(accessible_col),
                likelihood_6mo=likelihood,
            )
        except (IncompleteResponseError, InconsistentResponseError) as exc:
            raise self._reraise(mode, exc) from exc
