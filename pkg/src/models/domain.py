"""
GFBP Domain Models
"""
import enum
import json
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Literal, Mapping, NamedTuple, Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel, Field, model_validator

from src.utils.constants import ErrorMessages
from src.utils.exceptions import InputError, RateModelError
from src.utils.validators import validate_order

UNBOUNDED = "unbounded"

JumpSize = Union[int, Literal["unbounded"]]
JumpPattern = Tuple[int, ...]
Composition = Tuple[int, ...]


class ModelKind(enum.Enum):
    """Rate document kinds"""
    preset = "preset"
    table = "table"
    formula = "formula"


class ExtensionPolicy(enum.Enum):
    """Table rows beyond the last tabulated state"""
    error = "error"
    repeat_last_row = "repeat-last-row"


class ExplosionVerdict(enum.Enum):
    """Outcome of the non-explosion heuristic"""
    non_exploding = "NonExploding"
    possibly_exploding = "PossiblyExploding"
    inconclusive = "Inconclusive"


class SolverScheme(enum.Enum):
    """Oracle time steppers"""
    rk4 = "rk4"
    fractional_abm = "abm"


class TableSource(enum.Enum):
    """Origin of a PmfTable"""
    analytic = "analytic"
    oracle = "oracle"
    empirical = "empirical"


class RateModelDocument(BaseModel):
    """JSON form of a rate model"""

    n0: int = Field(ge=0)
    k: JumpSize
    kind: ModelKind
    preset: Optional[str] = None
    params: Dict[str, Any] = Field(default_factory=dict)
    rates: Optional[List[List[float]]] = None
    extension: ExtensionPolicy = ExtensionPolicy.error
    formula: Optional[str] = None
    tail_tolerance: float = Field(default=1e-12, gt=0)

    model_config = {"extra": "forbid"}

    @model_validator(mode="after")
    def check_kind_fields(self) -> "RateModelDocument":
        if isinstance(self.k, int) and self.k < 1:
            raise ValueError("k must be a positive integer or 'unbounded'")
        if self.kind is ModelKind.preset and not self.preset:
            raise ValueError("kind 'preset' requires the 'preset' field")
        if self.kind is ModelKind.formula and not self.formula:
            raise ValueError("kind 'formula' requires the 'formula' field")
        if self.kind is ModelKind.table:
            if not self.rates:
                raise ValueError("kind 'table' requires a non-empty 'rates' array")
            if self.k == UNBOUNDED:
                raise ValueError("kind 'table' needs a finite k")
            widths = {len(row) for row in self.rates}
            if widths != {self.k}:
                raise ValueError(f"every rates row must have exactly k={self.k} entries")
        return self

    def to_json(self) -> str:
        return json.dumps(self.model_dump(mode="json", exclude_none=True), sort_keys=True)


@dataclass(frozen=True, eq=False)
class RateModel:
    """
    Jump intensities rate(n, i) for n >= n0 and 1 <= i <= k

    rate_fn must be a pure function. closed_total and tail_fn, when present,
    give the exact total intensity and the intensity beyond jump size i.
    last_state is the largest state with rates when the rates are a finite list.
    """

    n0: int
    k: JumpSize
    rate_fn: Callable[[int, int], float]
    tail_tolerance: float = 1e-12
    name: str = "custom"
    document: Optional[RateModelDocument] = None
    closed_total: Optional[Callable[[int], float]] = None
    tail_fn: Optional[Callable[[int, int], float]] = None
    last_state: Optional[int] = None
    _cache: Dict[Any, Any] = field(default_factory=dict, repr=False)

    @property
    def unbounded(self) -> bool:
        return self.k == UNBOUNDED

    def max_jump(self, m: int) -> int:
        """Largest jump size usable within m levels"""
        return m if self.unbounded else min(int(self.k), m)

    def rate(self, n: int, i: int) -> float:
        if n < self.n0:
            raise InputError(ErrorMessages.INVALID_STATE.format(n=n, n0=self.n0))
        if i < 1 or (not self.unbounded and i > self.k):
            raise InputError(ErrorMessages.INVALID_JUMP.format(i=i, k=self.k))
        key = ("rate", n, i)
        cached = self._cache.get(key)
        if cached is None:
            cached = float(self.rate_fn(n, i))
            if not cached > 0.0:
                raise RateModelError(ErrorMessages.NON_POSITIVE_RATE.format(n=n, i=i, value=cached))
            self._cache[key] = cached
        return cached


@dataclass(frozen=True)
class ConstantOrder:
    """One fractional order for every state"""

    alpha: float

    def __post_init__(self):
        if not validate_order(self.alpha):
            raise InputError(ErrorMessages.INVALID_ORDER.format(value=self.alpha))

    @property
    def is_constant(self) -> bool:
        return True

    def at(self, n: int) -> float:
        return self.alpha

    def describe(self) -> Dict[str, Any]:
        return {"alpha": self.alpha}


@dataclass(frozen=True)
class PerStateOrder:
    """
    State-dependent orders alpha_n

    States missing from the map use default; without a default they are an
    input error.
    """

    alphas: Tuple[Tuple[int, float], ...]
    default: Optional[float] = None

    def __post_init__(self):
        for _, value in self.alphas:
            if not validate_order(value):
                raise InputError(ErrorMessages.INVALID_ORDER.format(value=value))
        if self.default is not None and not validate_order(self.default):
            raise InputError(ErrorMessages.INVALID_ORDER.format(value=self.default))

    @classmethod
    def from_mapping(cls, alphas: Mapping[int, float], default: Optional[float] = None) -> "PerStateOrder":
        return cls(tuple(sorted((int(n), float(a)) for n, a in alphas.items())), default)

    @property
    def is_constant(self) -> bool:
        return False

    def at(self, n: int) -> float:
        for state, value in self.alphas:
            if state == n:
                return value
        if self.default is None:
            raise InputError(f"No fractional order given for state {n}")
        return self.default

    def describe(self) -> Dict[str, Any]:
        payload: Dict[str, Any] = {"alphas": {str(n): a for n, a in self.alphas}}
        if self.default is not None:
            payload["default"] = self.default
        return payload


OrderSpec = Union[ConstantOrder, PerStateOrder]


class OrderDocument(BaseModel):
    """JSON form of a per-state order file"""

    alphas: Dict[int, float]
    default: Optional[float] = None

    def to_order(self) -> PerStateOrder:
        return PerStateOrder.from_mapping(self.alphas, self.default)


class KernelResult(NamedTuple):
    """Value with the error bound actually achieved"""
    value: float
    error_bound: float
    reduced_accuracy: bool = False


class TotalRate(NamedTuple):
    """Total jump intensity at one state"""
    value: float
    tail_bound: float
    terms: int


class EpochSet(NamedTuple):
    """Visited levels of a jump pattern"""
    lambda_set: Tuple[int, ...]
    n_star: int
    epochs: Tuple[int, ...]


class PathRateProfile(NamedTuple):
    """Per-pattern data entering the inversion kernel"""
    pattern: JumpPattern
    epochs: EpochSet
    mu: Tuple[float, ...]
    jump_rate_product: float
    orders: Tuple[float, ...]


class ExplosionReport(NamedTuple):
    """Classification plus the full partial-sum trace"""
    verdict: ExplosionVerdict
    trace: Tuple[float, ...]
    growth_exponent: float
    last_increment: float
    terms: int


class RngSpec(NamedTuple):
    """Seed and substream of a counter-based generator"""
    seed: int
    stream_id: int = 0


@dataclass
class SamplePath:
    """One simulated trajectory"""

    n0: int
    horizon: float
    events: List[Tuple[float, int]] = field(default_factory=list)
    guard_hit: bool = False

    @property
    def final_state(self) -> int:
        return self.events[-1][1] if self.events else self.n0

    def state_at(self, t: float) -> int:
        state = self.n0
        for time, new_state in self.events:
            if time > t:
                break
            state = new_state
        return state


@dataclass(frozen=True)
class SolverConfig:
    """Oracle settings"""

    step: float
    n_max: int
    max_memory_terms: Optional[int] = None
    scheme: SolverScheme = SolverScheme.fractional_abm
    corrector: Literal["pece", "implicit"] = "pece"
    simultaneous: bool = False

    def __post_init__(self):
        if not self.step > 0:
            raise InputError(f"Solver step must be positive, got {self.step}")
        if self.n_max < 1:
            raise InputError(f"n_max must be at least 1, got {self.n_max}")
        if self.max_memory_terms is not None and self.max_memory_terms < 1:
            raise InputError(f"max_memory_terms must be at least 1, got {self.max_memory_terms}")
        if self.corrector not in ("pece", "implicit"):
            raise InputError(f"Unknown corrector mode {self.corrector!r}")


@dataclass
class PmfTable:
    """
    Probabilities p(n, t) on states n0..n0+N and a time grid

    values and error_bounds have shape (len(states), len(times)).
    """

    n0: int
    states: List[int]
    times: List[float]
    values: np.ndarray
    error_bounds: np.ndarray
    source: TableSource = TableSource.analytic
    order: Dict[str, Any] = field(default_factory=dict)
    k_mode: str = ""
    flags: List[str] = field(default_factory=list)

    def deficit(self) -> np.ndarray:
        """1 - sum_n p(n, t) per grid point"""
        if not self.states:
            return np.ones(len(self.times))
        return 1.0 - np.sum(self.values, axis=0)

    def column(self, time_index: int) -> Dict[int, float]:
        return {n: float(self.values[row, time_index]) for row, n in enumerate(self.states)}

    def row(self, n: int) -> np.ndarray:
        return self.values[n - self.n0]


@dataclass
class EmpiricalPmf:
    """Relative frequencies with Wilson intervals"""

    sample_count: int
    probabilities: Dict[int, float]
    lower: Dict[int, float]
    upper: Dict[int, float]

    def half_widths(self) -> Dict[int, float]:
        return {n: 0.5 * (self.upper[n] - self.lower[n]) for n in self.probabilities}

    def contains(self, n: int, p: float) -> bool:
        if n not in self.probabilities:
            return False
        return self.lower[n] <= p <= self.upper[n]


class ResidualReport(NamedTuple):
    """Caputo residual per state"""
    residuals: Dict[int, float]
    coarse_grid: bool
    t_min: float
    step: float

    @property
    def max_residual(self) -> float:
        return max(self.residuals.values()) if self.residuals else 0.0


class ValidationReport(BaseModel):
    """Machine-readable outcome of one validation mode"""

    mode: str
    passed: bool
    max_deviation: float
    tolerance: float
    details: Dict[str, Any] = Field(default_factory=dict)


class RunManifest(BaseModel):
    """Everything needed to reproduce an output file"""

    command: str
    arguments: List[str]
    model: Optional[Dict[str, Any]] = None
    order: Optional[Dict[str, Any]] = None
    grids: Dict[str, Any] = Field(default_factory=dict)
    tolerances: Dict[str, float] = Field(default_factory=dict)
    seed: Optional[int] = None
    outputs: List[str] = Field(default_factory=list)
    settings: Dict[str, Any] = Field(default_factory=dict)
    tool_version: str
    wall_clock_seconds: float = 0.0
