"""
Exceptions - Toolkit error hierarchy
"""
from typing import Optional


class GFBPError(Exception):
    """Base class for every toolkit error"""


class InputError(GFBPError):
    """Malformed or out-of-range user input"""

    def __init__(self, message: str, line: Optional[int] = None, column: Optional[int] = None):
        if line is not None:
            message = f"{message} (line {line}, column {column})"
        super().__init__(message)
        self.line = line
        self.column = column


class RateModelError(InputError):
    """Rate model parameters violate a constraint"""


class FormulaError(InputError):
    """Rate formula does not parse or evaluate"""


class DivergentRatesError(GFBPError):
    """Unbounded-k rate sum shows no decay"""


class DegenerateRatesError(GFBPError):
    """Rates too close for the partial-fraction kernel"""


class SeriesConvergenceError(GFBPError):
    """Series tail could not be certified"""

    def __init__(self, message: str, partial_value: float):
        super().__init__(message)
        self.partial_value = partial_value


class BudgetExceededError(GFBPError):
    """Work budget exhausted"""

    def __init__(self, message: str, count: int, limit: int):
        super().__init__(message)
        self.count = count
        self.limit = limit


class ToleranceError(GFBPError):
    """A requested tolerance was not met"""


class SolverStabilityError(GFBPError):
    """Fractional solver produced values outside the probability range"""


class QuadratureError(GFBPError):
    """Adaptive quadrature did not converge"""


class ExplosionRiskError(GFBPError):
    """Rate model failed the non-explosion heuristic"""
