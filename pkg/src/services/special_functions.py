"""
Special Functions - Mittag-Leffler function and inverse Laplace kernels

All kernels return KernelResult(value, error_bound, reduced_accuracy).
Alternating series are summed in mpmath at a precision sized from a bound on
their largest term.
"""
import functools
import logging
import math
import warnings
from fractions import Fraction
from typing import Dict, List, Optional, Sequence, Tuple

import mpmath
import numpy as np
from scipy import integrate, optimize
from scipy.special import digamma, gammaln

from src.config import settings
from src.models.domain import KernelResult
from src.utils.constants import ErrorMessages, NumericConstants
from src.utils.exceptions import DegenerateRatesError, InputError, SeriesConvergenceError
from src.utils.validators import is_finite_number, validate_order, validate_separated

logger = logging.getLogger(__name__)

LN10 = math.log(10.0)

# exp(-v^(1/alpha)) is below e^-INTEGRAL_CUTOFF beyond the integration range
INTEGRAL_CUTOFF = 60.0


def _check_order(alpha: float) -> None:
    if not validate_order(alpha):
        raise InputError(ErrorMessages.INVALID_ORDER.format(value=alpha))


def _check_rates(mu: Sequence[float]) -> None:
    if len(mu) < 1:
        raise InputError("At least one rate is required")
    for value in mu:
        if not (is_finite_number(value) and value > 0):
            raise InputError(f"Rates must be positive and finite, got {value}")


def _check_time(t: float) -> None:
    if not (is_finite_number(t) and t >= 0):
        raise InputError(f"Time must be a non-negative finite number, got {t}")


def _series_log_terms(alpha: float, x: float, terms: Optional[int] = None) -> np.ndarray:
    j = np.arange(terms or settings.series_max_terms, dtype=float)
    return j * math.log(x) - gammaln(j * alpha + 1.0)


def series_peak_log10(alpha: float, x: float, terms: Optional[int] = None) -> float:
    """log10 of the largest term x^j / Gamma(j*alpha + 1), x > 0"""
    return float(np.max(_series_log_terms(alpha, x, terms))) / LN10


def series_peak_index(alpha: float, x: float, terms: Optional[int] = None) -> int:
    return int(np.argmax(_series_log_terms(alpha, x, terms)))


# ----------------------------------------------------------------------
# Mittag-Leffler
# ----------------------------------------------------------------------

def mittag_leffler(alpha: float, z: float) -> float:
    """E_{alpha,1}(z) as a float"""
    return evaluate_mittag_leffler(alpha, z).value


def evaluate_mittag_leffler(alpha: float, z: float) -> KernelResult:
    """
    E_{alpha,1}(z) with an error bound

    Routes: exp for alpha = 1, the power series when it is well conditioned,
    otherwise the real integral representation for negative arguments.
    Arguments beyond the certified range are flagged reduced_accuracy.

    Args:
        alpha: Order in (0, 1]
        z: Real argument

    Returns:
        KernelResult: Value, bound and accuracy flag
    """
    _check_order(alpha)
    if not is_finite_number(z):
        raise InputError(f"Mittag-Leffler argument must be finite, got {z}")
    result = _mittag_leffler_cached(float(alpha), float(z))
    if result.reduced_accuracy:
        logger.warning(f"E_{alpha}({z}) evaluated outside the certified range (value {result.value:.6g})")
    return result


@functools.lru_cache(maxsize=65536)
def _mittag_leffler_cached(alpha: float, z: float) -> KernelResult:
    reduced = abs(z) > settings.ml_certified_abs_z
    if z == 0.0:
        return KernelResult(1.0, 0.0, False)
    if alpha == 1.0:
        if z > 709.0:
            raise InputError(f"exp({z}) overflows double precision")
        value = math.exp(z)
        return KernelResult(value, 2.0 * NumericConstants.DOUBLE_EPS * value, reduced)

    use_series = z > 0 or (
        -z <= settings.ml_z_switch
        and series_peak_log10(alpha, -z) <= settings.ml_series_growth_log10
    )
    result = _ml_series(alpha, z) if use_series else _ml_integral(alpha, -z)
    if reduced and not result.reduced_accuracy:
        result = result._replace(reduced_accuracy=True)
    return result


def _ml_series(alpha: float, z: float) -> KernelResult:
    terms_count = settings.series_max_terms
    j = np.arange(terms_count, dtype=float)
    log_terms = _series_log_terms(alpha, abs(z), terms_count)
    if log_terms.max() > 700.0:
        raise SeriesConvergenceError(
            ErrorMessages.SERIES_NOT_CERTIFIED.format(eps=settings.series_eps, terms=terms_count), math.inf
        )
    magnitudes = np.exp(log_terms)
    terms = magnitudes * ((-1.0) ** j) if z < 0 else magnitudes
    partial = np.cumsum(terms)
    peak = int(np.argmax(log_terms))
    small = (j > peak) & (magnitudes <= settings.series_eps * np.abs(partial))
    if not small.any():
        raise SeriesConvergenceError(
            ErrorMessages.SERIES_NOT_CERTIFIED.format(eps=settings.series_eps, terms=terms_count),
            float(partial[-1]),
        )
    cut = int(np.argmax(small))
    value = math.fsum(terms[:cut])
    if z < 0:
        tail = float(magnitudes[cut])
    else:
        ratio = float(magnitudes[cut] / magnitudes[cut - 1])
        tail = float(magnitudes[cut]) / (1.0 - ratio)
    rounding = 4.0 * NumericConstants.DOUBLE_EPS * math.fsum(magnitudes[:cut])
    return KernelResult(value, tail + rounding, False)


def _ml_integral(alpha: float, x: float) -> KernelResult:
    # E_a(-x) = sin(a pi)/(a pi) * int_0^inf exp(-v^(1/a)) / (x (1 + 2 (v/x) cos(a pi) + (v/x)^2)) dv
    coefficient = math.sin(alpha * math.pi) / (alpha * math.pi)
    cosine = math.cos(alpha * math.pi)
    inverse = 1.0 / alpha
    upper = INTEGRAL_CUTOFF ** alpha

    def integrand(v: float) -> float:
        y = v / x
        return math.exp(-(v ** inverse)) / (x * (1.0 + 2.0 * y * cosine + y * y))

    breaks = [p for p in (1.0, x) if 0.0 < p < upper]
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", integrate.IntegrationWarning)
        integral, abserr = integrate.quad(
            integrand, 0.0, upper, points=breaks or None, limit=400, epsabs=0.0, epsrel=1e-13
        )
    troubled = any(issubclass(w.category, integrate.IntegrationWarning) for w in caught)
    value = coefficient * integral
    tail = coefficient * math.exp(-INTEGRAL_CUTOFF) / x
    bound = coefficient * abserr + tail + 4.0 * NumericConstants.DOUBLE_EPS * abs(value)
    return KernelResult(value, bound, troubled)


def mittag_leffler_mp(alpha: float, x, dps: int):
    """
    E_{alpha,1}(-x) for x >= 0 as an mpmath number at dps digits

    Series with extra working digits when its largest term is moderate,
    tanh-sinh quadrature of the integral representation otherwise.
    """
    with mpmath.workdps(dps):
        x = mpmath.mpf(x)
        if x == 0:
            return mpmath.mpf(1)
        if alpha == 1.0:
            return mpmath.exp(-x)
        peak = series_peak_log10(alpha, float(x))
        if peak <= 4 * dps:
            return _ml_series_mp(alpha, x, dps, peak)
        return _ml_integral_mp(alpha, x, dps)


def _ml_series_mp(alpha: float, x, dps: int, peak: float):
    peak_index = series_peak_index(alpha, float(x))
    with mpmath.workdps(dps + int(math.ceil(max(peak, 0.0))) + NumericConstants.GUARD_DIGITS):
        a = mpmath.mpf(alpha)
        threshold = mpmath.mpf(10) ** (-(dps + 5))
        total = mpmath.mpf(0)
        power = mpmath.mpf(1)
        j = 0
        while True:
            term = power * mpmath.rgamma(j * a + 1)
            total += term if j % 2 == 0 else -term
            if j > peak_index and term < threshold:
                break
            if j > 4 * settings.series_max_terms:
                raise SeriesConvergenceError(
                    ErrorMessages.SERIES_NOT_CERTIFIED.format(eps=float(threshold), terms=j), float(total)
                )
            power *= x
            j += 1
    with mpmath.workdps(dps):
        return +total


def _ml_integral_mp(alpha: float, x, dps: int):
    with mpmath.workdps(dps + NumericConstants.GUARD_DIGITS):
        a = mpmath.mpf(alpha)
        coefficient = mpmath.sin(a * mpmath.pi) / (a * mpmath.pi)
        cosine = mpmath.cos(a * mpmath.pi)
        upper = mpmath.mpf(INTEGRAL_CUTOFF + 2.3 * dps) ** a

        def integrand(v):
            y = v / x
            return mpmath.exp(-(v ** (1 / a))) / (x * (1 + 2 * y * cosine + y * y))

        nodes = [mpmath.mpf(0)] + [p for p in (mpmath.mpf(1), x) if p < upper] + [upper]
        value = coefficient * mpmath.quad(integrand, sorted(nodes))
    with mpmath.workdps(dps):
        return +value


# ----------------------------------------------------------------------
# Inverse Laplace kernels
# ----------------------------------------------------------------------

def inv_lt_distinct(alpha: float, mu: Sequence[float], t: float,
                    tolerance: Optional[float] = None) -> KernelResult:
    """
    Inverse transform of s^(alpha-1) / prod_j (s^alpha + mu_j), distinct mu

    sum_i E_alpha(-mu_i t^alpha) / prod_{l != i} (mu_l - mu_i)

    Raises:
        DegenerateRatesError: Rates closer than tolerance * max(mu)
    """
    _check_order(alpha)
    _check_rates(mu)
    _check_time(t)
    n = len(mu)
    if t == 0.0:
        return KernelResult(1.0 if n == 1 else 0.0, 0.0)
    tolerance = settings.degeneracy_tolerance if tolerance is None else tolerance
    if not validate_separated(mu, tolerance):
        raise DegenerateRatesError(ErrorMessages.DEGENERATE_RATES.format(mu=tuple(mu), tol=tolerance))

    x = t ** alpha
    contributions: List[float] = []
    bounds: List[float] = []
    reduced = False
    for i, mu_i in enumerate(mu):
        denominator = math.prod(mu_l - mu_i for l, mu_l in enumerate(mu) if l != i)
        ml = evaluate_mittag_leffler(alpha, -mu_i * x)
        contributions.append(ml.value / denominator)
        bounds.append(ml.error_bound / abs(denominator))
        reduced = reduced or ml.reduced_accuracy
    value = math.fsum(contributions)
    conditioning = (n + 1) * NumericConstants.DOUBLE_EPS * math.fsum(abs(c) for c in contributions)
    return KernelResult(value, math.fsum(bounds) + conditioning, reduced)


class CompleteHomogeneous:
    """
    Complete homogeneous symmetric polynomials h_r(mu), r = 0, 1, ...

    H_j(r) = H_{j-1}(r) + mu_j H_j(r-1) over the variables; values are
    mpmath numbers in the precision active when they are computed.
    """

    def __init__(self, mu: Sequence):
        self.mu = [mpmath.mpf(m) for m in mu]
        self.columns = [mpmath.mpf(1)] * len(self.mu)
        self.values = [mpmath.mpf(1)]

    def __getitem__(self, r: int):
        while len(self.values) <= r:
            updated = []
            running = mpmath.mpf(0)
            for m, previous in zip(self.mu, self.columns):
                running = running + m * previous
                updated.append(running)
            self.columns = updated
            self.values.append(updated[-1])
        return self.values[r]


def inv_lt_general(alpha: float, mu: Sequence[float], t: float,
                   eps: Optional[float] = None, max_terms: Optional[int] = None) -> KernelResult:
    """
    Inverse transform of s^(alpha-1) / prod_j (s^alpha + mu_j), any positive mu

    The composition sum collapses to
    t^(alpha(n-1)) sum_r (-t^alpha)^r h_r(mu) / Gamma((r+n-1) alpha + 1).
    Truncation is certified with h_r <= C(r+n-1, n-1) max(mu)^r, whose
    term ratios decrease monotonically.

    Args:
        alpha: Order in (0, 1]
        mu: Positive rates, repeats allowed
        t: Time
        eps: Tail bound target
        max_terms: Largest number of series terms

    Returns:
        KernelResult: Value and achieved bound

    Raises:
        SeriesConvergenceError: Tail not certified within max_terms
    """
    _check_order(alpha)
    _check_rates(mu)
    _check_time(t)
    n = len(mu)
    if t == 0.0:
        return KernelResult(1.0 if n == 1 else 0.0, 0.0)
    eps = settings.series_eps if eps is None else eps
    max_terms = max_terms or settings.series_max_terms
    return _inv_lt_general_cached(float(alpha), tuple(sorted(float(m) for m in mu)), float(t), eps, max_terms)


@functools.lru_cache(maxsize=65536)
def _inv_lt_general_cached(alpha: float, mu: Tuple[float, ...], t: float,
                           eps: float, max_terms: int) -> KernelResult:
    n = len(mu)
    log_x = alpha * math.log(t)
    r = np.arange(max_terms + 2, dtype=float)
    log_bound = (
        gammaln(r + n) - gammaln(r + 1.0) - gammaln(float(n))
        + r * math.log(max(mu)) + (n - 1 + r) * log_x
        - gammaln((r + n - 1) * alpha + 1.0)
    )
    ratio = np.exp(log_bound[1:] - log_bound[:-1])
    # tails[R] bounds the sum of the terms after index R
    tails = np.full(max_terms, np.inf)
    shrinking = ratio[1:] < 1.0
    with np.errstate(over="ignore"):
        tails[shrinking] = np.exp(log_bound[1:-1][shrinking]) / (1.0 - ratio[1:][shrinking])
    certified = np.nonzero(tails <= eps)[0]
    cut = int(certified[0]) if len(certified) else max_terms - 1
    peak = float(np.max(log_bound[:cut + 1])) / LN10
    dps = NumericConstants.DOUBLE_DIGITS + NumericConstants.GUARD_DIGITS + max(0, int(math.ceil(peak)))
    logger.debug(f"General kernel n={n}: {cut + 1} terms at {dps} digits")

    with mpmath.workdps(dps):
        a = mpmath.mpf(alpha)
        x = mpmath.mpf(t) ** a
        sums = CompleteHomogeneous(mu)
        total = mpmath.mpf(0)
        for index in range(cut + 1):
            exponent = index + n - 1
            term = sums[index] * x ** exponent * mpmath.rgamma(exponent * a + 1)
            total += term if index % 2 == 0 else -term
        value = float(total)

    if not len(certified):
        raise SeriesConvergenceError(
            ErrorMessages.SERIES_NOT_CERTIFIED.format(eps=eps, terms=max_terms), value
        )
    bound = float(tails[cut]) + 2.0 * NumericConstants.DOUBLE_EPS * abs(value)
    return KernelResult(value, bound, False)


def inv_lt_multi_order(orders: Sequence[float], mu: Sequence[float], t: float,
                       eps: Optional[float] = None, max_terms: Optional[int] = None) -> KernelResult:
    """
    Inverse transform of s^(a_1 - 1) / prod_l (s^(a_l) + mu_l)

    Expanding every factor gives
    sum_c (-1)^|c| prod_l mu_l^(c_l) t^(A + sum c_l a_l) / Gamma(1 + A + sum c_l a_l)
    with A = sum_{l>=2} a_l. Epochs sharing an order are grouped so each
    group contributes h_(c_g) of its rates, and the groups are convolved one
    at a time on the exact rational exponent, so terms with equal exponent
    share one Gamma evaluation.

    The tail is certified by degree: the shell of degree d is bounded by
    C(d+n-1, n-1) max(mu)^d max_E t^E / Gamma(1+E) over the exponents the
    shell can reach, and the shell ratios decrease once the exponent range
    lies past the maximum of t^E / Gamma(1+E).

    Raises:
        SeriesConvergenceError: Tail not certified within max_terms
    """
    if len(orders) != len(mu):
        raise InputError("orders and mu must have the same length")
    for a in orders:
        _check_order(a)
    _check_rates(mu)
    _check_time(t)
    n = len(mu)
    if t == 0.0:
        return KernelResult(1.0 if n == 1 else 0.0, 0.0)
    eps = settings.series_eps if eps is None else eps
    max_terms = max_terms or settings.series_max_terms
    if len(set(float(a) for a in orders)) == 1:
        return inv_lt_general(float(orders[0]), mu, t, eps, max_terms)
    return _inv_lt_multi_order_cached(
        tuple(float(a) for a in orders), tuple(float(m) for m in mu), float(t), eps, max_terms
    )


def _power_peak(log_t: float) -> float:
    """Maximiser of E log t - log Gamma(1+E) over E >= 0"""
    if log_t <= -np.euler_gamma:
        return 0.0
    # digamma(1+E) > log(E + 1/2), so the root lies below E = t
    return float(optimize.brentq(lambda e: digamma(e + 1.0) - log_t, 0.0, math.exp(log_t)))


def _multi_order_shell_bounds(orders: Sequence[float], mu: Sequence[float], t: float,
                             terms: int) -> np.ndarray:
    """log of a bound on the absolute sum of each degree shell, d = 0..terms-1"""
    n = len(mu)
    log_t = math.log(t)
    base = math.fsum(orders[1:])
    d = np.arange(terms, dtype=float)
    lo = base + d * min(orders)
    hi = base + d * max(orders)
    peak = _power_peak(log_t)

    def log_power(e):
        return e * log_t - gammaln(e + 1.0)

    inner = np.where(peak <= lo, log_power(lo), np.where(peak >= hi, log_power(hi), log_power(peak)))
    return (
        gammaln(d + n) - gammaln(d + 1.0) - gammaln(float(n))
        + d * math.log(max(mu)) + inner
    )


@functools.lru_cache(maxsize=16384)
def _inv_lt_multi_order_cached(orders: Tuple[float, ...], mu: Tuple[float, ...], t: float,
                               eps: float, max_terms: int) -> KernelResult:
    log_bound = _multi_order_shell_bounds(orders, mu, t, max_terms + 2)
    ratio = np.exp(log_bound[1:] - log_bound[:-1])
    lo = math.fsum(orders[1:]) + np.arange(max_terms + 2, dtype=float) * min(orders)
    # tails[R] bounds the shells after degree R once the ratios are decreasing
    tails = np.full(max_terms, np.inf)
    shrinking = (ratio[1:] < 1.0) & (_power_peak(math.log(t)) <= lo[1:-1])
    with np.errstate(over="ignore"):
        tails[shrinking] = np.exp(log_bound[1:-1][shrinking]) / (1.0 - ratio[1:][shrinking])
    certified = np.nonzero(tails <= eps)[0]
    if not len(certified):
        raise SeriesConvergenceError(
            ErrorMessages.SERIES_NOT_CERTIFIED.format(eps=eps, terms=max_terms), math.nan
        )
    cut = int(certified[0])
    peak = float(np.max(log_bound[:cut + 1])) / LN10
    dps = NumericConstants.DOUBLE_DIGITS + NumericConstants.GUARD_DIGITS + max(0, int(math.ceil(peak)))

    groups: Dict[float, List[float]] = {}
    for a, m in zip(orders, mu):
        groups.setdefault(a, []).append(m)
    exact = {a: Fraction(repr(a)) for a in groups}
    scale = math.lcm(*(f.denominator for f in exact.values()))
    steps = {a: int(f * scale) for a, f in exact.items()}
    offset = int(sum((Fraction(repr(a)) for a in orders[1:]), Fraction(0)) * scale)
    # every composition of degree <= cut has its exponent key below the limit
    limit = cut * max(steps.values())
    logger.debug(f"Multi-order kernel n={len(mu)}: degree {cut}, {len(groups)} groups at {dps} digits")

    with mpmath.workdps(dps):
        weights: Dict[int, mpmath.mpf] = {0: mpmath.mpf(1)}
        for a, rates in groups.items():
            step = steps[a]
            sums = CompleteHomogeneous(rates)
            merged: Dict[int, mpmath.mpf] = {}
            for key, weight in weights.items():
                for count in range((limit - key) // step + 1):
                    term = sums[count] * weight
                    target = key + count * step
                    merged[target] = merged.get(target, 0) + (-term if count % 2 else term)
            weights = merged
        log_t = mpmath.log(mpmath.mpf(t))
        total = mpmath.fsum(
            weight * mpmath.exp(exponent * log_t) * mpmath.rgamma(exponent + 1)
            for exponent, weight in ((mpmath.mpf(offset + key) / scale, w) for key, w in weights.items())
        )
        value = float(total)

    bound = float(tails[cut]) + 2.0 * NumericConstants.DOUBLE_EPS * abs(value)
    return KernelResult(value, bound, False)


def partial_fraction_unity(x: float, lambdas: Sequence[float]) -> float:
    """
    sum_i prod_{j != i} (x + lambda_j) / (lambda_j - lambda_i)

    Identically 1 for distinct lambdas; a conditioning check for the partial fractions.
    """
    if len(lambdas) < 2:
        raise InputError("partial_fraction_unity needs at least two rates")
    if len(set(lambdas)) != len(lambdas):
        raise InputError(f"Rates must be pairwise distinct, got {tuple(lambdas)}")
    return math.fsum(
        math.prod((x + lam_j) / (lam_j - lam_i) for j, lam_j in enumerate(lambdas) if j != i)
        for i, lam_i in enumerate(lambdas)
    )


def clear_kernel_caches() -> None:
    _mittag_leffler_cached.cache_clear()
    _inv_lt_general_cached.cache_clear()
    _inv_lt_multi_order_cached.cache_clear()
