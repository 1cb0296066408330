"""
Pmf Service - analytic state probabilities

Three evaluation strategies compute the same pattern sum:

    patterns    explicit enumeration of the jump patterns
    signatures  patterns grouped by the multiset of (order, total rate) pairs
                along their visited levels, built level by level
    levels      partial-fraction coefficients per Mittag-Leffler term, for a
                constant order with pairwise separated level totals
"""
import bisect
import logging
import math
import warnings
from typing import Dict, List, Optional, Sequence, Tuple, Union

import mpmath
import numpy as np
from scipy import integrate
from scipy.special import gammaln

from src.config import settings
from src.models.domain import (
    ConstantOrder, ExplosionVerdict, KernelResult, OrderSpec, PathRateProfile, PerStateOrder,
    PmfTable, RateModel, TableSource, UNBOUNDED,
)
from src.services.combinat_service import CombinatService
from src.services.rate_service import RateService
from src.services.special_functions import (
    evaluate_mittag_leffler, inv_lt_distinct, inv_lt_general, inv_lt_multi_order, mittag_leffler_mp,
)
from src.utils.constants import ErrorMessages, NumericConstants
from src.utils.exceptions import (
    BudgetExceededError, ExplosionRiskError, InputError, QuadratureError, SeriesConvergenceError,
)
from src.utils.validators import is_finite_number, validate_probability, validate_separated

logger = logging.getLogger(__name__)

STRATEGIES = ("auto", "patterns", "signatures", "levels")

SignatureKey = Tuple[Tuple[float, float], Tuple[Tuple[float, float], ...]]


class _NotSeparated(Exception):
    """Level totals too close for the partial-fraction strategy"""


def _as_order(order: Union[OrderSpec, float]) -> OrderSpec:
    if isinstance(order, (ConstantOrder, PerStateOrder)):
        return order
    return ConstantOrder(float(order))


def _check_state(model: RateModel, n: int) -> int:
    if n < model.n0:
        raise InputError(ErrorMessages.INVALID_STATE.format(n=n, n0=model.n0))
    return n - model.n0


def _check_time(t: float) -> None:
    if not (is_finite_number(t) and t >= 0):
        raise InputError(f"Time must be a non-negative finite number, got {t}")


def _truncation_sensitivity(alpha: float, t: float) -> float:
    """Bound on |d/dmu E_alpha(-mu t^alpha)|"""
    return t ** alpha / math.exp(gammaln(1.0 + alpha))


def pattern_kernel(orders: Sequence[float], mu: Sequence[float], t: float) -> KernelResult:
    """
    Inverse transform for one pattern or signature

    Constant orders use the partial-fraction kernel when the rates are
    separated and its bound is small, the general series otherwise; mixed
    orders use the multi-order series.
    """
    if any(a != orders[0] for a in orders):
        return inv_lt_multi_order(orders, mu, t)
    alpha = orders[0]
    if not validate_separated(mu, settings.degeneracy_tolerance):
        return inv_lt_general(alpha, mu, t)
    distinct = inv_lt_distinct(alpha, mu, t)
    if distinct.error_bound <= NumericConstants.KERNEL_FALLBACK_BOUND:
        return distinct
    try:
        general = inv_lt_general(alpha, mu, t)
    except SeriesConvergenceError:
        return distinct
    logger.debug(f"Kernel for mu={tuple(mu)} fell back to the general series")
    return general if general.error_bound < distinct.error_bound else distinct


class _LevelEngine:
    """
    p(l, t) = sum_j c[l][j] E_alpha(-mu_j t^alpha)

    The coefficients follow from the level recursion
    L(l) = sum_i rate(n0+l-i, i) L(l-i) / (s^alpha + mu_l) by partial fractions,
    kept in mpmath at a precision that covers their cancellation.
    """

    def __init__(self, model: RateModel, alpha: float):
        self.model = model
        self.alpha = alpha
        self.mu: List[float] = []
        self.truncation: List[float] = []
        self.coefficients: List[List] = []
        self.dps = NumericConstants.DOUBLE_DIGITS + 2 * NumericConstants.GUARD_DIGITS
        self._largest_log10 = 0.0
        self._kernels: Dict[Tuple[int, float], object] = {}

    def _required_dps(self) -> int:
        with mpmath.workdps(self.dps):
            magnitude = float(mpmath.fsum(abs(c) for c in self.coefficients[-1]))
        if magnitude > 0:
            self._largest_log10 = max(self._largest_log10, math.log10(magnitude))
        return NumericConstants.DOUBLE_DIGITS + 2 * NumericConstants.GUARD_DIGITS + int(math.ceil(self._largest_log10))

    def _append_row(self) -> None:
        level = len(self.coefficients)
        with mpmath.workdps(self.dps):
            if level == 0:
                self.coefficients.append([mpmath.mpf(1)])
                return
            mu = [mpmath.mpf(m) for m in self.mu]
            sums = [mpmath.mpf(0)] * level
            for i in range(1, self.model.max_jump(level) + 1):
                rate = mpmath.mpf(self.model.rate(self.model.n0 + level - i, i))
                for j, c in enumerate(self.coefficients[level - i]):
                    sums[j] += rate * c
            row = [sums[j] / (mu[level] - mu[j]) for j in range(level)]
            row.append(-mpmath.fsum(row))
            self.coefficients.append(row)

    def extend_to(self, level: int) -> None:
        while len(self.mu) <= level:
            total = RateService.total_rate_details(self.model, self.model.n0 + len(self.mu))
            if not validate_separated(self.mu + [total.value], settings.degeneracy_tolerance):
                raise _NotSeparated()
            self.mu.append(total.value)
            self.truncation.append(total.tail_bound)
            self._append_row()
            required = self._required_dps()
            if required > self.dps:
                self.dps = required + NumericConstants.GUARD_DIGITS
                logger.debug(f"Level coefficients rebuilt at {self.dps} digits for {len(self.mu)} levels")
                self.coefficients = []
                self._kernels.clear()
                for _ in range(len(self.mu)):
                    self._append_row()

    def _kernel(self, j: int, t: float):
        key = (j, t)
        value = self._kernels.get(key)
        if value is None:
            with mpmath.workdps(self.dps):
                argument = mpmath.mpf(self.mu[j]) * mpmath.mpf(t) ** mpmath.mpf(self.alpha)
            value = mittag_leffler_mp(self.alpha, argument, self.dps)
            self._kernels[key] = value
        return value

    def evaluate(self, level: int, t: float) -> KernelResult:
        self.extend_to(level)
        if t == 0.0:
            return KernelResult(1.0 if level == 0 else 0.0, 0.0)
        row = self.coefficients[level]
        with mpmath.workdps(self.dps):
            value = mpmath.fsum(c * self._kernel(j, t) for j, c in enumerate(row))
            scale = float(mpmath.fsum(abs(c) for c in row))
        result = float(value)
        bound = (
            scale * 10.0 ** (1 - self.dps)
            + NumericConstants.DOUBLE_EPS * abs(result)
            + math.fsum(self.truncation[:level + 1]) * _truncation_sensitivity(self.alpha, t)
        )
        return KernelResult(result, bound)


class _SignatureEngine:
    """Pattern weights aggregated by kernel signature, level by level"""

    def __init__(self, model: RateModel, order: OrderSpec, budget: int):
        self.model = model
        self.order = order
        self.budget = budget
        self.pairs: List[Tuple[float, float]] = []
        self.truncation: List[float] = []
        self.levels: List[Dict[SignatureKey, float]] = []

    def extend_to(self, level: int) -> None:
        while len(self.levels) <= level:
            current = len(self.levels)
            state = self.model.n0 + current
            total = RateService.total_rate_details(self.model, state)
            pair = (self.order.at(state), total.value)
            self.pairs.append(pair)
            self.truncation.append(total.tail_bound)
            if current == 0:
                self.levels.append({(pair, ()): 1.0})
                continue
            signatures: Dict[SignatureKey, float] = {}
            for i in range(1, self.model.max_jump(current) + 1):
                rate = self.model.rate(state - i, i)
                for (first, rest), weight in self.levels[current - i].items():
                    extended = list(rest)
                    bisect.insort(extended, pair)
                    key = (first, tuple(extended))
                    signatures[key] = signatures.get(key, 0.0) + weight * rate
            if len(signatures) > self.budget:
                k = current if self.model.unbounded else int(self.model.k)
                count = CombinatService.theta_cardinality(current, k)
                raise BudgetExceededError(
                    ErrorMessages.BUDGET_EXCEEDED.format(count=count, limit=self.budget), count, self.budget
                )
            self.levels.append(signatures)

    def evaluate(self, level: int, t: float) -> KernelResult:
        self.extend_to(level)
        if t == 0.0:
            return KernelResult(1.0 if level == 0 else 0.0, 0.0)
        contributions: List[float] = []
        bounds: List[float] = []
        reduced = False
        for (first, rest), weight in self.levels[level].items():
            pairs = (first,) + rest
            kernel = pattern_kernel([a for a, _ in pairs], [m for _, m in pairs], t)
            contributions.append(weight * kernel.value)
            bounds.append(weight * kernel.error_bound)
            reduced = reduced or kernel.reduced_accuracy
        value = math.fsum(contributions)
        alpha = max(a for a, _ in self.pairs[:level + 1])
        bound = (
            math.fsum(bounds)
            + NumericConstants.DOUBLE_EPS * math.fsum(abs(c) for c in contributions)
            + math.fsum(self.truncation[:level + 1]) * _truncation_sensitivity(alpha, t)
        )
        return KernelResult(value, bound, reduced)


class PmfService:
    """Analytic state probabilities"""

    @staticmethod
    def path_rate_profile(model: RateModel, order: Union[OrderSpec, float], x: Sequence[int]) -> PathRateProfile:
        """
        Rates along one pattern

        mu_l is the total rate at level n0 + (j)_l; the product runs over the
        jumps, with rate(n, 0) read as 1 on the zero entries.
        """
        order = _as_order(order)
        epochs = CombinatService.epoch_set(x)
        n0 = model.n0
        mu = tuple(RateService.total_rate(model, n0 + j) for j in epochs.epochs)
        product = math.prod(model.rate(n0 + j, size) for j, size in enumerate(x) if size)
        orders = tuple(order.at(n0 + j) for j in epochs.epochs)
        return PathRateProfile(tuple(x), epochs, mu, product, orders)

    # ------------------------------------------------------------------
    # Laplace domain
    # ------------------------------------------------------------------

    @staticmethod
    def pmf_laplace(model: RateModel, order: Union[OrderSpec, float], n: int, s: float,
                    strategy: str = "levels") -> float:
        """
        Laplace transform of p(n, .) at s > 0

        Args:
            strategy: "levels" runs the level recursion, "patterns" sums
                over the jump patterns explicitly

        Returns:
            float: Transform value
        """
        order = _as_order(order)
        m = _check_state(model, n)
        if not (is_finite_number(s) and s > 0):
            raise InputError(f"Laplace variable must be positive, got {s}")
        n0 = model.n0

        def factor(level: int) -> float:
            a = order.at(n0 + level)
            return s ** a + RateService.total_rate(model, n0 + level)

        head = s ** (order.at(n0) - 1.0)
        if strategy == "patterns":
            if m == 0:
                return head / factor(0)
            terms = []
            for x in CombinatService.enumerate_theta(m, model.max_jump(m)):
                profile = PmfService.path_rate_profile(model, order, x)
                terms.append(head * profile.jump_rate_product / math.prod(factor(j) for j in profile.epochs.epochs))
            return math.fsum(terms)
        if strategy != "levels":
            raise InputError(f"Unknown Laplace strategy {strategy!r}")

        transforms = [head / factor(0)]
        for level in range(1, m + 1):
            incoming = math.fsum(
                model.rate(n0 + level - i, i) * transforms[level - i]
                for i in range(1, model.max_jump(level) + 1)
            )
            transforms.append(incoming / factor(level))
        return transforms[m]

    # ------------------------------------------------------------------
    # Time domain
    # ------------------------------------------------------------------

    @staticmethod
    def pmf(model: RateModel, order: Union[ConstantOrder, float], n: int, t: float,
            strategy: str = "auto") -> float:
        """State probability p(n, t) for a constant order"""
        order = _as_order(order)
        if not order.is_constant:
            raise InputError("pmf takes a constant order; use pmf_state_dependent for per-state orders")
        return PmfService.evaluate_pmf(model, order, n, t, strategy).value

    @staticmethod
    def pmf_state_dependent(model: RateModel, order: PerStateOrder, n: int, t: float,
                            strategy: str = "auto") -> float:
        """State probability with one fractional order per state"""
        return PmfService.evaluate_pmf(model, order, n, t, strategy).value

    @staticmethod
    def evaluate_pmf(model: RateModel, order: Union[OrderSpec, float], n: int, t: float,
                     strategy: str = "auto", pattern_budget: Optional[int] = None) -> KernelResult:
        """
        p(n, t) with its error bound

        Args:
            model: Rate model
            order: Constant or per-state order
            n: State, n >= n0
            t: Time, t >= 0
            strategy: auto, patterns, signatures or levels
            pattern_budget: Limit on patterns or signatures

        Raises:
            BudgetExceededError: Pattern set above the budget
        """
        order = _as_order(order)
        m = _check_state(model, n)
        _check_time(t)
        if strategy not in STRATEGIES:
            raise InputError(f"Unknown strategy {strategy!r}; expected one of {', '.join(STRATEGIES)}")
        budget = pattern_budget or settings.pattern_budget
        if t == 0.0:
            return KernelResult(1.0 if m == 0 else 0.0, 0.0)
        if m == 0:
            return PmfService._survival(model, order, t)

        if strategy == "patterns":
            return PmfService._pattern_sum(model, order, m, t, budget)
        if strategy in ("auto", "levels") and order.is_constant:
            try:
                return _LevelEngine(model, order.at(model.n0)).evaluate(m, t)
            except _NotSeparated:
                if strategy == "levels":
                    raise InputError("Level totals are not separated; the levels strategy does not apply")
        elif strategy == "levels":
            raise InputError("The levels strategy needs a constant order")
        return _SignatureEngine(model, order, budget).evaluate(m, t)

    @staticmethod
    def _survival(model: RateModel, order: OrderSpec, t: float) -> KernelResult:
        alpha = order.at(model.n0)
        total = RateService.total_rate_details(model, model.n0)
        result = evaluate_mittag_leffler(alpha, -total.value * t ** alpha)
        bound = result.error_bound + total.tail_bound * _truncation_sensitivity(alpha, t)
        return KernelResult(result.value, bound, result.reduced_accuracy)

    @staticmethod
    def _pattern_sum(model: RateModel, order: OrderSpec, m: int, t: float, budget: int) -> KernelResult:
        k = model.max_jump(m)
        count = CombinatService.theta_cardinality(m, k)
        if count > budget:
            raise BudgetExceededError(ErrorMessages.BUDGET_EXCEEDED.format(count=count, limit=budget), count, budget)
        contributions: List[float] = []
        bounds: List[float] = []
        reduced = False
        for x in CombinatService.enumerate_theta(m, k):
            profile = PmfService.path_rate_profile(model, order, x)
            kernel = pattern_kernel(profile.orders, profile.mu, t)
            contributions.append(profile.jump_rate_product * kernel.value)
            bounds.append(profile.jump_rate_product * kernel.error_bound)
            reduced = reduced or kernel.reduced_accuracy
        truncation = math.fsum(
            RateService.total_rate_details(model, model.n0 + level).tail_bound for level in range(m + 1)
        )
        alpha = max(order.at(model.n0 + level) for level in range(m + 1))
        bound = (
            math.fsum(bounds)
            + NumericConstants.DOUBLE_EPS * math.fsum(abs(c) for c in contributions)
            + truncation * _truncation_sensitivity(alpha, t)
        )
        return KernelResult(math.fsum(contributions), bound, reduced)

    @staticmethod
    def survival_first_wait(model: RateModel, order: Union[OrderSpec, float], t: float) -> float:
        """Pr{W1 > t}, the probability of no jump by time t"""
        _check_time(t)
        if t == 0.0:
            return 1.0
        return PmfService._survival(model, _as_order(order), t).value

    @staticmethod
    def subordinated_pmf_half(model: RateModel, n: int, t: float) -> KernelResult:
        """
        p(n, t) at order 1/2 through the Brownian clock

        Integrates the order-1 pmf against the folded heat kernel
        exp(-xi^2 / 4t) / sqrt(pi t).
        """
        m = _check_state(model, n)
        _check_time(t)
        if t == 0.0:
            return KernelResult(1.0 if m == 0 else 0.0, 0.0)
        variance = NumericConstants.HEAT_KERNEL_VARIANCE_FACTOR * t
        upper = math.sqrt(2.0 * variance * 50.0)
        order = ConstantOrder(1.0)

        def integrand(xi: float) -> float:
            weight = math.exp(-xi * xi / (2.0 * variance)) / math.sqrt(math.pi * variance / 2.0)
            return PmfService.evaluate_pmf(model, order, n, xi).value * weight

        with warnings.catch_warnings():
            warnings.simplefilter("error", integrate.IntegrationWarning)
            try:
                value, abserr = integrate.quad(integrand, 0.0, upper, limit=200, epsabs=1e-12, epsrel=1e-10)
            except integrate.IntegrationWarning as e:
                raise QuadratureError(f"Time-change integral did not converge: {e}")
        return KernelResult(value, abserr + math.exp(-50.0))

    # ------------------------------------------------------------------
    # Tables
    # ------------------------------------------------------------------

    @staticmethod
    def pmf_table(model: RateModel, order: Union[OrderSpec, float], t_grid: Sequence[float],
                  mass_tolerance: float, state_budget: Optional[int] = None,
                  override: bool = False, strategy: str = "auto",
                  pattern_budget: Optional[int] = None) -> PmfTable:
        """
        Tabulate p(n, t) from n0 upward until the missing mass is below tolerance

        Args:
            model: Rate model
            order: Constant or per-state order
            t_grid: Non-negative times
            mass_tolerance: Target for 1 - sum_n p(n, t) at every time
            state_budget: Largest number of states
            override: Skip the explosion gate
            strategy: auto, signatures or levels

        Returns:
            PmfTable: Flagged when a budget or the end of a finite rate list stops the tabulation first

        Raises:
            ExplosionRiskError: Model classified PossiblyExploding
        """
        order = _as_order(order)
        times = [float(t) for t in t_grid]
        if not times:
            raise InputError("The time grid is empty")
        for t in times:
            _check_time(t)
        if not mass_tolerance > 0:
            raise InputError(f"Mass tolerance must be positive, got {mass_tolerance}")
        if strategy not in STRATEGIES or strategy == "patterns":
            raise InputError(f"Tables support the strategies auto, signatures and levels, got {strategy!r}")
        state_budget = state_budget or settings.state_budget
        budget = pattern_budget or settings.pattern_budget

        if not override:
            report = RateService.explosion_check(model, settings.explosion_check_terms)
            if report.verdict is ExplosionVerdict.possibly_exploding:
                raise ExplosionRiskError(ErrorMessages.EXPLOSION_RISK.format(verdict=report.verdict.value))

        use_levels = order.is_constant and strategy in ("auto", "levels")
        engine = _LevelEngine(model, order.at(model.n0)) if use_levels else _SignatureEngine(model, order, budget)
        rows: List[List[float]] = []
        errors: List[List[float]] = []
        flags: List[str] = []
        level = 0
        while True:
            if level >= state_budget:
                flags.append("state_budget_exhausted")
                logger.warning(f"State budget {state_budget} reached before the mass tolerance {mass_tolerance}")
                break
            if model.last_state is not None and model.n0 + level > model.last_state:
                flags.append("rate_table_exhausted")
                logger.warning(f"Rates end at state {model.last_state} before the mass tolerance {mass_tolerance}")
                break
            try:
                results = [PmfService._table_entry(model, order, engine, level, t) for t in times]
            except _NotSeparated:
                if strategy == "levels":
                    raise InputError("Level totals are not separated; the levels strategy does not apply")
                logger.info(f"Level totals coincide at state {model.n0 + level}; switching to signatures")
                engine = _SignatureEngine(model, order, budget)
                rows, errors, level = [], [], 0
                continue
            except BudgetExceededError as e:
                flags.append("pattern_budget_exhausted")
                logger.warning(f"Pattern budget stopped the table at state {model.n0 + level}: {e}")
                break
            rows.append([r.value for r in results])
            errors.append([r.error_bound for r in results])
            if any(r.reduced_accuracy for r in results) and "reduced_accuracy" not in flags:
                flags.append("reduced_accuracy")
            level += 1
            deficit = 1.0 - np.sum(np.array(rows), axis=0)
            if np.all(deficit <= mass_tolerance):
                break

        values = np.array(rows) if rows else np.zeros((0, len(times)))
        table = PmfTable(
            n0=model.n0,
            states=[model.n0 + i for i in range(len(rows))],
            times=times,
            values=values,
            error_bounds=np.array(errors) if errors else np.zeros((0, len(times))),
            source=TableSource.analytic,
            order=order.describe(),
            k_mode="unbounded" if model.k == UNBOUNDED else f"k={model.k}",
            flags=flags,
        )
        logger.info(f"Tabulated {len(table.states)} states on {len(times)} times (max deficit {table.deficit().max():.3e})")
        return table

    @staticmethod
    def pmf_grid(model: RateModel, order: Union[OrderSpec, float], state_count: int,
                 t_grid: Sequence[float], strategy: str = "auto",
                 pattern_budget: Optional[int] = None) -> PmfTable:
        """p(n, t) on the fixed states n0..n0+state_count-1, no explosion gate"""
        order = _as_order(order)
        times = [float(t) for t in t_grid]
        for t in times:
            _check_time(t)
        if state_count < 1:
            raise InputError(f"state_count must be at least 1, got {state_count}")
        budget = pattern_budget or settings.pattern_budget
        use_levels = order.is_constant and strategy in ("auto", "levels")
        engine = _LevelEngine(model, order.at(model.n0)) if use_levels else _SignatureEngine(model, order, budget)

        rows: List[List[float]] = []
        errors: List[List[float]] = []
        flags: List[str] = []
        while len(rows) < state_count:
            level = len(rows)
            try:
                results = [PmfService._table_entry(model, order, engine, level, t) for t in times]
            except _NotSeparated:
                if strategy == "levels":
                    raise InputError("Level totals are not separated; the levels strategy does not apply")
                engine = _SignatureEngine(model, order, budget)
                rows, errors = [], []
                continue
            rows.append([r.value for r in results])
            errors.append([r.error_bound for r in results])
            if any(r.reduced_accuracy for r in results) and "reduced_accuracy" not in flags:
                flags.append("reduced_accuracy")

        return PmfTable(
            n0=model.n0,
            states=[model.n0 + i for i in range(state_count)],
            times=times,
            values=np.array(rows),
            error_bounds=np.array(errors),
            source=TableSource.analytic,
            order=order.describe(),
            k_mode="unbounded" if model.k == UNBOUNDED else f"k={model.k}",
            flags=flags,
        )

    @staticmethod
    def _table_entry(model: RateModel, order: OrderSpec, engine, level: int, t: float) -> KernelResult:
        if t == 0.0:
            return KernelResult(1.0 if level == 0 else 0.0, 0.0)
        result = PmfService._survival(model, order, t) if level == 0 else engine.evaluate(level, t)
        if not validate_probability(result.value, NumericConstants.PROBABILITY_SLACK):
            logger.warning(f"p({model.n0 + level}, {t:g}) = {result.value:.6g} lies outside [0, 1]")
            result = result._replace(reduced_accuracy=True)
        return result
