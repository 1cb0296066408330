"""
Validators - numeric predicates
"""
import math
from typing import Sequence


def is_finite_number(value: float) -> bool:
    """Finite real number"""
    try:
        return math.isfinite(float(value))
    except (TypeError, ValueError):
        return False


def validate_order(alpha: float) -> bool:
    """Fractional order lies in (0, 1]"""
    return is_finite_number(alpha) and 0.0 < float(alpha) <= 1.0


def validate_positive(value: float) -> bool:
    """Strictly positive finite number"""
    return is_finite_number(value) and float(value) > 0.0


def validate_probability(value: float, slack: float = 0.0) -> bool:
    """Value in [0, 1] up to slack"""
    return is_finite_number(value) and -slack <= float(value) <= 1.0 + slack


def validate_strictly_decreasing(values: Sequence[float]) -> bool:
    """Strictly decreasing sequence"""
    return all(a > b for a, b in zip(values, values[1:]))


def validate_separated(values: Sequence[float], relative_tolerance: float) -> bool:
    """Pairwise gaps exceed relative_tolerance times the largest magnitude"""
    if len(values) < 2:
        return True
    ordered = sorted(values)
    scale = max(abs(v) for v in ordered)
    return all(b - a > relative_tolerance * scale for a, b in zip(ordered, ordered[1:]))
