"""
Combinat Service - jump patterns, epoch sets and compositions
"""
import itertools
import logging
import math
import threading
from typing import Dict, List, Optional, Sequence, Tuple

from src.config import settings
from src.models.domain import Composition, EpochSet, JumpPattern
from src.utils.exceptions import InputError

logger = logging.getLogger(__name__)

_theta_cache: Dict[Tuple[int, int], Tuple[JumpPattern, ...]] = {}
_theta_lock = threading.Lock()


class CombinatService:
    """Index bookkeeping for the pattern sums"""

    @staticmethod
    def enumerate_theta(n: int, k: int) -> Tuple[JumpPattern, ...]:
        """
        Jump patterns of n with block sizes at most k

        Each pattern is a concatenation of blocks (i, 0, ..., 0) of length i,
        one block per jump of size i. The set is built from its first jump:
        the block of size i followed by every pattern of n - i.

        Args:
            n: Number of levels, n >= 1
            k: Maximum jump size, k >= 1

        Returns:
            Tuple[JumpPattern, ...]: Patterns in lexicographic order
        """
        if n < 1 or k < 1:
            raise InputError(f"Pattern sets need n >= 1 and k >= 1, got n={n}, k={k}")
        patterns = CombinatService._theta(n, min(k, n))
        logger.debug(f"Enumerated {len(patterns)} jump patterns for n={n}, k={k}")
        return patterns

    @staticmethod
    def _theta(n: int, k: int) -> Tuple[JumpPattern, ...]:
        if n == 0:
            return ((),)
        key = (n, k)
        cached = _theta_cache.get(key)
        if cached is not None:
            return cached

        patterns: List[JumpPattern] = []
        for first in range(1, min(k, n) + 1):
            block = (first,) + (0,) * (first - 1)
            for rest in CombinatService._theta(n - first, min(k, n - first)):
                patterns.append(block + rest)
        result = tuple(sorted(patterns))

        if n <= settings.theta_cache_max_m:
            with _theta_lock:
                _theta_cache.setdefault(key, result)
        return result

    @staticmethod
    def theta_cardinality(n: int, k: int) -> int:
        """k-bonacci count T(n) = sum_{i<=min(k,n)} T(n-i), T(0) = 1"""
        if n < 0 or k < 1:
            raise InputError(f"Pattern counts need n >= 0 and k >= 1, got n={n}, k={k}")
        counts = [1]
        for m in range(1, n + 1):
            counts.append(sum(counts[m - i] for i in range(1, min(k, m) + 1)))
        return counts[n]

    @staticmethod
    def is_valid_pattern(x: Sequence[int], k: Optional[int] = None) -> bool:
        """Block structure check"""
        if not x or x[0] < 1:
            return False
        position = 0
        while position < len(x):
            size = x[position]
            if size < 1 or (k is not None and size > k):
                return False
            if position + size > len(x):
                return False
            if any(x[position + 1:position + size]):
                return False
            position += size
        return True

    @staticmethod
    def epoch_set(x: Sequence[int]) -> EpochSet:
        """
        Visited levels of a pattern

        Level j in 1..n-1 is dropped when x_{j+1} = 0, i.e. when the path
        jumps over it.
        """
        if not CombinatService.is_valid_pattern(x):
            raise InputError(f"{tuple(x)} is not a valid jump pattern")
        n = len(x)
        epochs = tuple([0] + [j for j in range(1, n) if x[j] != 0] + [n])
        return EpochSet(lambda_set=epochs, n_star=len(epochs), epochs=epochs)

    @staticmethod
    def pattern_to_jumps(x: Sequence[int]) -> Tuple[int, ...]:
        """Jump sizes encoded by a pattern"""
        if not CombinatService.is_valid_pattern(x):
            raise InputError(f"{tuple(x)} is not a valid jump pattern")
        return tuple(v for v in x if v)

    @staticmethod
    def jumps_to_pattern(jumps: Sequence[int]) -> JumpPattern:
        if not jumps or any(j < 1 for j in jumps):
            raise InputError(f"Jump sizes must be positive, got {tuple(jumps)}")
        pattern: List[int] = []
        for size in jumps:
            pattern.extend((size,) + (0,) * (size - 1))
        return tuple(pattern)

    @staticmethod
    def enumerate_omega(n: int, i: int) -> List[Composition]:
        """
        Compositions of i into n parts, first part allowed to be zero

        Returns:
            List[Composition]: C(i, n-1) vectors in lexicographic order
        """
        if n < 1:
            raise InputError(f"Compositions need n >= 1, got {n}")
        if i < n - 1:
            return []
        if n == 1:
            return [(i,)]
        result: List[Composition] = []
        for first in range(0, i - (n - 1) + 1):
            remainder = i - first
            # stars and bars: n-1 positive parts of the remainder
            for cuts in itertools.combinations(range(1, remainder), n - 2):
                bounds = (0,) + cuts + (remainder,)
                result.append((first,) + tuple(b - a for a, b in zip(bounds, bounds[1:])))
        return result

    @staticmethod
    def omega_count(n: int, i: int) -> int:
        return math.comb(i, n - 1) if i >= n - 1 else 0

    @staticmethod
    def omega_weight_sum(mu: Sequence[float], i: int) -> float:
        """Sum over compositions y of prod mu_j^y_j, by explicit enumeration"""
        return math.fsum(
            math.prod(m ** y for m, y in zip(mu, composition))
            for composition in CombinatService.enumerate_omega(len(mu), i)
        )


def clear_theta_cache() -> None:
    with _theta_lock:
        _theta_cache.clear()
