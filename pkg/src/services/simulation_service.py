"""
Simulation Service - Monte Carlo paths and empirical distributions

Every draw goes through a Philox generator keyed by (seed, stream_id).
Holding times come from numpy's exponential sampler on that stream; jump
sizes and the Brownian clock use inverse CDFs. A given RngSpec reproduces
the same path.
"""
import logging
import math
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from typing import Dict, Iterable, List, Optional

import numpy as np
from scipy import stats
from scipy.special import ndtri

from src.config import settings
from src.models.domain import EmpiricalPmf, RateModel, RngSpec, SamplePath
from src.services.rate_service import RateService
from src.utils.constants import NumericConstants
from src.utils.exceptions import InputError, RateModelError
from src.utils.validators import is_finite_number

logger = logging.getLogger(__name__)

SEED_LIMIT = 2 ** 64

# Doubling stops here when searching an unbounded jump-size tail
MAX_JUMP_BITS = 62


def _uniform_open(generator: np.random.Generator) -> float:
    """Uniform draw on (0, 1)"""
    u = generator.random()
    while u == 0.0:
        u = generator.random()
    return u


class SimulationService:
    """Trajectory sampling"""

    @staticmethod
    def make_generator(rng: RngSpec) -> np.random.Generator:
        """Philox stream for (seed, stream_id)"""
        if not (0 <= rng.seed < SEED_LIMIT):
            raise InputError(f"Seed must be a 64-bit unsigned integer, got {rng.seed}")
        if rng.stream_id < 0:
            raise InputError(f"stream_id must be non-negative, got {rng.stream_id}")
        sequence = np.random.SeedSequence(rng.seed, spawn_key=(rng.stream_id,))
        return np.random.Generator(np.random.Philox(sequence))

    @staticmethod
    def _jump_table(model: RateModel, n: int) -> np.ndarray:
        """Cumulative jump intensities over the sizes that are summed explicitly"""
        key = ("jump_table", n)
        table = model._cache.get(key)
        if table is None:
            if model.unbounded:
                sizes = RateService.total_rate_details(model, n).terms
            else:
                sizes = int(model.k)
            table = np.cumsum([model.rate(n, i) for i in range(1, sizes + 1)])
            model._cache[key] = table
        return table

    @staticmethod
    def draw_jump_size(model: RateModel, n: int, u: float) -> int:
        """
        Inverse CDF of the jump size at state n

        Args:
            u: Uniform draw in [0, 1)

        Returns:
            int: Smallest i with Pr{size <= i} > u
        """
        if model.unbounded and model.tail_fn is not None:
            total = RateService.total_rate(model, n)
            target = (1.0 - u) * total
            if RateService.tail_mass(model, n, 1) < target:
                return 1
            low, high = 1, 2
            while RateService.tail_mass(model, n, high) >= target:
                low, high = high, high * 2
                if high > 2 ** MAX_JUMP_BITS:
                    raise RateModelError(f"Jump-size tail at state {n} does not vanish")
            # tail(low) >= target > tail(high)
            while high - low > 1:
                middle = (low + high) // 2
                if RateService.tail_mass(model, n, middle) >= target:
                    low = middle
                else:
                    high = middle
            return high
        table = SimulationService._jump_table(model, n)
        index = int(np.searchsorted(table, u * table[-1], side="right"))
        return min(index, len(table) - 1) + 1

    @staticmethod
    def simulate_gbp(model: RateModel, horizon: float, rng: RngSpec,
                     max_events: Optional[int] = None) -> SamplePath:
        """
        One trajectory on [0, horizon]

        Holding time at n is Exponential(total_rate(n)); the jump size is i
        with probability rate(n, i) / total_rate(n). A path reaching
        max_events is returned with guard_hit set.
        """
        generator = SimulationService.make_generator(rng)
        return SimulationService._simulate(model, horizon, generator, max_events)

    @staticmethod
    def _simulate(model: RateModel, horizon: float, generator: np.random.Generator,
                  max_events: Optional[int] = None) -> SamplePath:
        if not (is_finite_number(horizon) and horizon >= 0):
            raise InputError(f"Horizon must be a non-negative finite number, got {horizon}")
        max_events = max_events or settings.max_events_per_path
        path = SamplePath(n0=model.n0, horizon=horizon)
        state = model.n0
        t = 0.0
        while True:
            t += generator.standard_exponential() / RateService.total_rate(model, state)
            if t > horizon:
                break
            if len(path.events) >= max_events:
                path.guard_hit = True
                logger.warning(f"Path stopped at the {max_events}-event guard at t={t:.6g}, state {state}")
                break
            state += SimulationService.draw_jump_size(model, state, generator.random())
            path.events.append((t, state))
        return path

    @staticmethod
    def brownian_clock(t: float, generator: np.random.Generator) -> float:
        """|B(t)| for the heat equation u_t = u_xx, so Var B(t) = 2t"""
        scale = math.sqrt(NumericConstants.HEAT_KERNEL_VARIANCE_FACTOR * t)
        return abs(float(ndtri(_uniform_open(generator)))) * scale

    @staticmethod
    def brownian_clock_samples(t: float, count: int, rng: RngSpec) -> np.ndarray:
        """count independent draws of |B(t)|"""
        generator = SimulationService.make_generator(rng)
        return np.array([SimulationService.brownian_clock(t, generator) for _ in range(count)])

    @staticmethod
    def sample_gfbp_half(model: RateModel, t: float, rng: RngSpec) -> int:
        """State of the order-1/2 process at t: the classical process read at |B(t)|"""
        generator = SimulationService.make_generator(rng)
        return SimulationService._sample_half(model, t, generator)

    @staticmethod
    def _sample_half(model: RateModel, t: float, generator: np.random.Generator) -> int:
        if not (is_finite_number(t) and t >= 0):
            raise InputError(f"Time must be a non-negative finite number, got {t}")
        if t == 0.0:
            return model.n0
        clock = SimulationService.brownian_clock(t, generator)
        return SimulationService._simulate(model, clock, generator).final_state

    @staticmethod
    def draw_holding_times(model: RateModel, n: int, count: int, rng: RngSpec) -> np.ndarray:
        """Holding times at state n from the exponential stream the paths use"""
        generator = SimulationService.make_generator(rng)
        total = RateService.total_rate(model, n)
        return generator.standard_exponential(count) / total

    # ------------------------------------------------------------------
    # Ensembles
    # ------------------------------------------------------------------

    @staticmethod
    def worker_count(threads: Optional[int] = None) -> int:
        """Requested worker threads, capped by GFBP_THREADS"""
        if threads is None:
            return settings.threads
        if threads < 1:
            raise InputError(f"threads must be at least 1, got {threads}")
        return min(threads, settings.threads)

    @staticmethod
    def _blocks(count: int) -> List[int]:
        if count < 1:
            raise InputError(f"Sample count must be at least 1, got {count}")
        size = settings.simulation_block_size
        return [min(size, count - start) for start in range(0, count, size)]

    @staticmethod
    def run_ensemble(model: RateModel, horizon: float, count: int, seed: int,
                     threads: Optional[int] = None) -> List[SamplePath]:
        """
        count paths in fixed-size blocks, block b on stream b

        Results are merged in block order, so they do not depend on threads.
        """
        blocks = SimulationService._blocks(count)

        def run_block(index: int) -> List[SamplePath]:
            generator = SimulationService.make_generator(RngSpec(seed, index))
            return [SimulationService._simulate(model, horizon, generator) for _ in range(blocks[index])]

        with ThreadPoolExecutor(max_workers=SimulationService.worker_count(threads)) as pool:
            results = list(pool.map(run_block, range(len(blocks))))
        paths = [path for block in results for path in block]
        guarded = sum(path.guard_hit for path in paths)
        if guarded:
            logger.warning(f"{guarded} of {count} paths hit the event guard")
        logger.info(f"Simulated {count} paths to horizon {horizon} in {len(blocks)} blocks")
        return paths

    @staticmethod
    def sample_gfbp_half_ensemble(model: RateModel, t: float, count: int, seed: int,
                                  threads: Optional[int] = None) -> List[int]:
        """count draws of the order-1/2 state at t"""
        blocks = SimulationService._blocks(count)

        def run_block(index: int) -> List[int]:
            generator = SimulationService.make_generator(RngSpec(seed, index))
            return [SimulationService._sample_half(model, t, generator) for _ in range(blocks[index])]

        with ThreadPoolExecutor(max_workers=SimulationService.worker_count(threads)) as pool:
            results = list(pool.map(run_block, range(len(blocks))))
        return [state for block in results for state in block]

    @staticmethod
    def states_at(paths: Iterable[SamplePath], t: float) -> List[int]:
        return [path.state_at(t) for path in paths]

    # ------------------------------------------------------------------
    # Empirical distributions
    # ------------------------------------------------------------------

    @staticmethod
    def empirical_pmf(samples: Iterable[int], states: Optional[Iterable[int]] = None,
                      confidence: float = NumericConstants.WILSON_CONFIDENCE) -> EmpiricalPmf:
        """
        Relative frequencies with Wilson intervals

        Args:
            samples: Observed states
            states: Extra states to report even when never observed

        Returns:
            EmpiricalPmf: Per-state frequency and interval
        """
        counts = Counter(samples)
        total = sum(counts.values())
        if total == 0:
            raise InputError("At least one sample is required")
        support = sorted(set(counts) | set(states or ()))
        probabilities: Dict[int, float] = {}
        lower: Dict[int, float] = {}
        upper: Dict[int, float] = {}
        for n in support:
            hits = counts.get(n, 0)
            interval = stats.binomtest(hits, total).proportion_ci(confidence_level=confidence, method="wilson")
            probabilities[n] = hits / total
            lower[n] = float(interval.low)
            upper[n] = float(interval.high)
        return EmpiricalPmf(total, probabilities, lower, upper)

    @staticmethod
    def histogram_counts(samples: Iterable[int]) -> Dict[int, int]:
        """Counts per state through np.unique"""
        values, counts = np.unique(np.fromiter(samples, dtype=np.int64), return_counts=True)
        return {int(v): int(c) for v, c in zip(values, counts)}
