"""
Helper functions
"""
import math
from decimal import Decimal, InvalidOperation
from typing import Dict, List, Mapping

from src.utils.constants import ErrorMessages
from src.utils.exceptions import InputError


def format_float(value: float) -> str:
    """Format a float with 17 significant digits"""
    return format(float(value), ".17g")


def parse_t_grid(text: str) -> List[float]:
    """
    Parse a time grid written as start:stop:step

    The stop value is included when it lies on the grid. Points are computed
    as start + j*step with decimal arithmetic so that 0:2:0.1 yields exactly
    21 points.

    Args:
        text: Grid text

    Returns:
        List[float]: Grid points
    """
    parts = text.split(":")
    if len(parts) != 3:
        raise InputError(ErrorMessages.INVALID_GRID.format(text=text))
    try:
        start, stop, step = (Decimal(p.strip()) for p in parts)
    except InvalidOperation:
        raise InputError(ErrorMessages.INVALID_GRID.format(text=text))
    if step <= 0 or stop < start or start < 0:
        raise InputError(ErrorMessages.INVALID_GRID.format(text=text))

    count = int((stop - start) / step)
    points = [float(start + j * step) for j in range(count + 1)]
    return points


def total_variation(p: Mapping[int, float], q: Mapping[int, float]) -> float:
    """Half the L1 distance between two pmfs on the integers"""
    support = set(p) | set(q)
    return 0.5 * math.fsum(abs(p.get(n, 0.0) - q.get(n, 0.0)) for n in support)


def normalize_counts(counts: Mapping[int, int]) -> Dict[int, float]:
    """Relative frequencies from counts"""
    total = sum(counts.values())
    return {n: c / total for n, c in sorted(counts.items())}
