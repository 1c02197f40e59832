"""
Features Module
Stage-of-change assignment from survey answers, stage merging, trip
frequency bands and multimodality indices
"""

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, Iterable, Mapping, Optional, Sequence, Tuple

import numpy as np

from .errors import (
    IncompleteResponseError,
    InconsistentResponseError,
    InvalidMergeMapError,
    UndefinedIndexError,
    UnknownBandError,
    UnknownLabelError,
)


class BehaviorStatus(str, Enum):
    NEVER_CONTEMPLATED = "never_contemplated"
    CONTEMPLATED = "contemplated"
    USES_MODE = "uses_mode"


class Duration(str, Enum):
    UNDER_ONE_YEAR = "under_one_year"
    ONE_YEAR_OR_MORE = "one_year_or_more"


class StageLabel(str, Enum):
    """Fine stage labels; `rank` is the canonical PC < C < P < A/M order"""

    PC1 = "PC1"
    PC2 = "PC2"
    PC = "PC"
    C = "C"
    C1 = "C1"
    C2 = "C2"
    P = "P"
    P1 = "P1"
    P2 = "P2"
    A = "A"
    M = "M"
    AM = "AM"

    @property
    def rank(self) -> int:
        return _RANKS[self]

    @classmethod
    def parse(cls, text: str) -> "StageLabel":
        key = str(text).strip().upper().replace("-", "")
        try:
            return cls(key)
        except ValueError:
            raise UnknownLabelError(f"unknown stage label '{text}'") from None


_RANKS = {
    StageLabel.PC1: 0, StageLabel.PC2: 0, StageLabel.PC: 0,
    StageLabel.C: 1, StageLabel.C1: 1, StageLabel.C2: 1,
    StageLabel.P: 2, StageLabel.P1: 2, StageLabel.P2: 2,
    StageLabel.A: 3, StageLabel.M: 3, StageLabel.AM: 3,
}


@dataclass(frozen=True)
class WalkCycleAnswers:
    """Answers to the weekly walking or cycling behavior question and its follow-up"""

    behavior_status: BehaviorStatus
    realistic: Optional[bool] = None
    expect_near_future: Optional[bool] = None
    duration: Optional[Duration] = None

    def __post_init__(self):
        object.__setattr__(self, "behavior_status", BehaviorStatus(self.behavior_status))
        if self.duration is not None:
            object.__setattr__(self, "duration", Duration(self.duration))
        required = {
            BehaviorStatus.NEVER_CONTEMPLATED: "realistic",
            BehaviorStatus.CONTEMPLATED: "expect_near_future",
            BehaviorStatus.USES_MODE: "duration",
        }[self.behavior_status]
        given = {name for name in ("realistic", "expect_near_future", "duration")
                 if getattr(self, name) is not None}
        if required not in given:
            raise IncompleteResponseError(
                f"'{self.behavior_status.value}' requires the '{required}' follow-up")
        extra = given - {required}
        if extra:
            raise InconsistentResponseError(
                f"'{self.behavior_status.value}' does not route to {sorted(extra)}")


@dataclass(frozen=True)
class BikeshareAnswers:
    """Answers to the weekly bike share question and its follow-ups"""

    weekly_use_expected: bool
    would_contemplate: Optional[bool] = None
    accessible: Optional[bool] = None
    likelihood_6mo: Optional[int] = None

    def __post_init__(self):
        given = {name for name in ("would_contemplate", "accessible", "likelihood_6mo")
                 if getattr(self, name) is not None}
        if self.weekly_use_expected:
            required = set()
        elif self.would_contemplate is False:
            required = {"would_contemplate"}
        else:
            required = {"would_contemplate", "accessible", "likelihood_6mo"}
        missing = required - given
        if missing:
            raise IncompleteResponseError(f"missing bike share follow-ups {sorted(missing)}")
        extra = given - required
        if extra:
            raise InconsistentResponseError(f"bike share answers {sorted(extra)} are not asked on this route")
        if self.likelihood_6mo is not None and self.likelihood_6mo not in range(1, 6):
            raise InconsistentResponseError(
                f"likelihood_6mo must be an integer from 1 to 5, got {self.likelihood_6mo}")


def assign_stage_walk_cycle(a: WalkCycleAnswers) -> StageLabel:
    if a.behavior_status is BehaviorStatus.NEVER_CONTEMPLATED:
        return StageLabel.PC2 if a.realistic else StageLabel.PC1
    if a.behavior_status is BehaviorStatus.CONTEMPLATED:
        return StageLabel.P if a.expect_near_future else StageLabel.C
    return StageLabel.A if a.duration is Duration.UNDER_ONE_YEAR else StageLabel.M


def assign_stage_bikeshare(a: BikeshareAnswers) -> StageLabel:
    if a.weekly_use_expected:
        return StageLabel.AM
    if not a.would_contemplate:
        return StageLabel.PC
    if a.likelihood_6mo <= 2:
        return StageLabel.C2 if a.accessible else StageLabel.C1
    return StageLabel.P2 if a.accessible else StageLabel.P1


@dataclass(frozen=True)
class MergeMap:
    """Order-preserving map from fine stage labels onto ordinals 0..n_stages-1"""

    mapping: Mapping[StageLabel, int]
    name: str = "custom"

    def __post_init__(self):
        mapping = {StageLabel.parse(k) if not isinstance(k, StageLabel) else k: v
                   for k, v in dict(self.mapping).items()}
        object.__setattr__(self, "mapping", mapping)
        self.validate()

    @property
    def n_stages(self) -> int:
        return max(self.mapping.values()) + 1

    def validate(self) -> "MergeMap":
        if not self.mapping:
            raise InvalidMergeMapError(f"merge map '{self.name}' is empty")
        values = list(self.mapping.values())
        if any(not isinstance(v, int) or isinstance(v, bool) or v < 0 for v in values):
            raise InvalidMergeMapError(f"merge map '{self.name}' must map to non-negative integers")
        missing = sorted(set(range(max(values) + 1)) - set(values))
        if missing:
            raise InvalidMergeMapError(f"merge map '{self.name}' never produces ordinals {missing}")
        for a, ia in self.mapping.items():
            for b, ib in self.mapping.items():
                if a.rank < b.rank and ia > ib:
                    raise InvalidMergeMapError(
                        f"merge map '{self.name}' reverses stage order: "
                        f"{a.value}->{ia} comes after {b.value}->{ib}")
        return self

    def apply(self, label: StageLabel) -> int:
        label = StageLabel.parse(label) if not isinstance(label, StageLabel) else label
        if label not in self.mapping:
            raise UnknownLabelError(f"stage '{label.value}' is not covered by merge map '{self.name}'")
        return self.mapping[label]

    def to_dict(self) -> Dict[str, int]:
        return {label.value: v for label, v in self.mapping.items()}

    @classmethod
    def from_dict(cls, data: Mapping[str, int], name: str = "custom") -> "MergeMap":
        return cls({StageLabel.parse(k): v for k, v in data.items()}, name=name)


def _preset(name: str, groups: Sequence[Iterable[str]]) -> MergeMap:
    return MergeMap({StageLabel(label): i for i, group in enumerate(groups) for label in group}, name=name)


MERGE_PRESETS: Dict[str, MergeMap] = {
    preset.name: preset
    for preset in (
        _preset("four_stage", [("PC1", "PC2", "PC"), ("C", "C1", "C2"), ("P", "P1", "P2"), ("A", "M", "AM")]),
        _preset("walk_cycle_identity", [("PC1",), ("PC2",), ("C",), ("P",), ("A",), ("M",)]),
        _preset("bikeshare_identity", [("PC",), ("C1",), ("C2",), ("P1",), ("P2",), ("AM",)]),
        _preset("cycling_pc_c_merged", [("PC1", "PC2", "C"), ("P",), ("A", "M")]),
        _preset("cycling_c_p_merged", [("PC1", "PC2"), ("C", "P"), ("A", "M")]),
        _preset("bikeshare_pc_c_merged", [("PC", "C1", "C2"), ("P1", "P2"), ("AM",)]),
        _preset("bikeshare_c_p_merged", [("PC",), ("C1", "C2", "P1", "P2"), ("AM",)]),
    )
}
DEFAULT_MERGE_MAP = MERGE_PRESETS["four_stage"]


def merge_stages(label: StageLabel, m: MergeMap = DEFAULT_MERGE_MAP) -> int:
    return m.apply(label)


DEFAULT_BAND_MIDPOINTS: Dict[str, float] = {"0": 0.0, "1–2": 1.5, "3–4": 3.5, "5–6": 5.5, "7+": 8.0}


def normalize_band(band: str) -> str:
    """Trim and write ranges with an en dash, so '1-2' and '1–2' match"""
    return str(band).strip().replace("-", "–").replace(" ", "")


def check_band_map(mapping: Mapping[str, float]) -> Dict[str, float]:
    result = {}
    for band, value in mapping.items():
        value = float(value)
        if not math.isfinite(value) or value < 0:
            raise ValueError(f"band '{band}' must map to a finite non-negative frequency, got {value}")
        result[normalize_band(band)] = value
    if not result:
        raise ValueError("band midpoint map is empty")
    return result


def band_to_midpoint(band: str, mapping: Optional[Mapping[str, float]] = None) -> float:
    """Trips per week represented by a frequency band"""
    table = check_band_map(DEFAULT_BAND_MIDPOINTS if mapping is None else mapping)
    key = normalize_band(band)
    if key not in table:
        raise UnknownBandError(f"unknown frequency band '{band}', expected one of {list(table)}")
    return table[key]


def _frequencies(f: Sequence[float]) -> np.ndarray:
    f = np.asarray(f, dtype=float)
    if f.ndim != 1 or f.size == 0:
        raise UndefinedIndexError("frequencies must be a non-empty vector")
    if not np.all(np.isfinite(f)) or np.any(f < 0):
        raise UndefinedIndexError("frequencies must be finite and non-negative")
    if not np.any(f > 0):
        raise UndefinedIndexError("index is undefined when every frequency is zero")
    return f


def sei(f: Sequence[float]) -> float:
    """Shannon entropy multimodality index on (0, 1]; unused modes contribute 0"""
    f = _frequencies(f)
    x = f[f > 0] / f.max()
    return float(np.sum(x * (1.0 - np.log(x))) / f.size)


def hhi(f: Sequence[float]) -> float:
    """Herfindahl-Hirschman concentration of mode shares"""
    f = _frequencies(f)
    shares = f / f.sum()
    return float(np.sum(shares * shares))


@dataclass
class TripDiary:
    """Weekly trip frequency bands for a fixed list of modes"""

    modes: Tuple[str, ...]
    bands: Tuple[str, ...]
    midpoints: Dict[str, float] = field(default_factory=lambda: dict(DEFAULT_BAND_MIDPOINTS))

    def __post_init__(self):
        self.modes = tuple(self.modes)
        self.bands = tuple(self.bands)
        self.midpoints = check_band_map(self.midpoints)
        if len(self.modes) != len(self.bands):
            raise IncompleteResponseError(
                f"{len(self.bands)} bands for {len(self.modes)} modes; every mode needs a band")
        for mode, band in zip(self.modes, self.bands):
            if band is None or str(band).strip() == "":
                raise IncompleteResponseError(f"mode '{mode}' has no frequency band")
            if normalize_band(band) not in self.midpoints:
                raise UnknownBandError(f"mode '{mode}': unknown frequency band '{band}'")

    def frequencies(self) -> np.ndarray:
        return np.array([band_to_midpoint(b, self.midpoints) for b in self.bands])

    def sei(self) -> float:
        return sei(self.frequencies())

    def hhi(self) -> float:
        return hhi(self.frequencies())

    def to_dict(self) -> Dict[str, Any]:
        return {"modes": list(self.modes), "bands": list(self.bands)}
