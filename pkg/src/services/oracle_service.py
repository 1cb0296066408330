"""
Oracle Service - direct numerical solution of the forward equations

    D^a_n p(n, t) = -mu_n p(n, t) + sum_i rate(n-i, i) p(n-i, t),  p(n, 0) = [n = n0]

The system is lower-triangular, so states are solved one after another with
the forcing from states already on the grid.
"""
import logging
import math
import warnings
from typing import Callable, Dict, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import integrate
from scipy.linalg import solve_triangular
from scipy.special import gamma

from src.config import settings
from src.models.domain import (
    ConstantOrder, KernelResult, OrderSpec, PerStateOrder, PmfTable, RateModel,
    ResidualReport, SolverConfig, SolverScheme, TableSource, UNBOUNDED,
)
from src.services.rate_service import RateService
from src.utils.constants import ErrorMessages
from src.utils.exceptions import InputError, QuadratureError, SolverStabilityError
from src.utils.validators import is_finite_number

logger = logging.getLogger(__name__)


def _as_order(order: Union[OrderSpec, float]) -> OrderSpec:
    if isinstance(order, (ConstantOrder, PerStateOrder)):
        return order
    return ConstantOrder(float(order))


def _generator(model: RateModel, size: int) -> np.ndarray:
    """Lower-triangular generator restricted to states n0..n0+size-1"""
    matrix = np.zeros((size, size))
    for level in range(size):
        matrix[level, level] = -RateService.total_rate(model, model.n0 + level)
        for i in range(1, model.max_jump(level) + 1):
            matrix[level, level - i] = model.rate(model.n0 + level - i, i)
    return matrix


class _ProductWeights:
    """Adams-Bashforth-Moulton product-integration weights for one order"""

    def __init__(self, alpha: float, step: float, steps: int):
        lags = np.arange(steps + 2, dtype=float)
        self.alpha = alpha
        self.predictor_scale = step ** alpha / gamma(alpha + 1.0)
        self.corrector_scale = step ** alpha / gamma(alpha + 2.0)
        self.predictor = (lags + 1.0) ** alpha - lags ** alpha
        self.corrector = np.zeros(steps + 2)
        self.corrector[1:] = (
            (lags[1:] + 1.0) ** (alpha + 1.0) + (lags[1:] - 1.0) ** (alpha + 1.0) - 2.0 * lags[1:] ** (alpha + 1.0)
        )

    def first(self, j: int) -> float:
        return j ** (self.alpha + 1.0) - (j - self.alpha) * (j + 1.0) ** self.alpha

    def predictor_history(self, f: np.ndarray, j: int, memory: Optional[int]) -> float:
        start = 0 if memory is None else max(0, j + 1 - memory)
        return self.predictor_scale * float(np.dot(self.predictor[j - start::-1], f[start:j + 1]))

    def corrector_history(self, f: np.ndarray, j: int, memory: Optional[int]) -> float:
        start = 1 if memory is None else max(1, j + 1 - memory)
        total = float(np.dot(self.corrector[j - start + 1:0:-1], f[start:j + 1])) if j >= start else 0.0
        if memory is None or j + 1 - memory <= 0:
            total += self.first(j) * f[0]
        return total


class OracleService:
    """Numerical ground truth for the analytic engine"""

    @staticmethod
    def time_grid(t_end: float, step: float) -> Tuple[np.ndarray, float]:
        """Uniform grid 0..t_end; the step shrinks so the grid lands on t_end"""
        if not (is_finite_number(t_end) and t_end > 0):
            raise InputError(f"t_end must be positive, got {t_end}")
        steps = max(1, int(round(t_end / step)))
        effective = t_end / steps
        if abs(effective - step) > 1e-12 * step:
            logger.debug(f"Step adjusted from {step} to {effective} to land on t_end={t_end}")
        return np.linspace(0.0, t_end, steps + 1), effective

    @staticmethod
    def solve_fractional_system(model: RateModel, order: Union[OrderSpec, float], t_end: float,
                                config: SolverConfig) -> PmfTable:
        """
        Solve states n0..n0+n_max on a uniform grid

        Args:
            model: Rate model
            order: Constant or per-state order
            t_end: Final time
            config: Step, truncation and scheme

        Returns:
            PmfTable: source=oracle, error bounds from step doubling

        Raises:
            SolverStabilityError: Probabilities left [-eps, 1+eps]
        """
        order = _as_order(order)
        times, step = OracleService.time_grid(t_end, config.step)
        values = OracleService._solve(model, order, times, step, config)

        steps = len(times) - 1
        if steps % 2 == 0 and steps >= 4:
            coarse = OracleService._solve(model, order, times[::2], 2.0 * step, config)
            bounds = OracleService._step_doubling_bounds(values, coarse, order, model, config.scheme)
        else:
            bounds = np.full(values.shape, np.nan)

        low, high = float(values.min()), float(values.max())
        epsilon = settings.solver_bound_epsilon
        if low < -epsilon or high > 1.0 + epsilon:
            bad = np.nonzero((values < -epsilon) | (values > 1.0 + epsilon))[1]
            raise SolverStabilityError(ErrorMessages.SOLVER_UNSTABLE.format(
                low=-epsilon, high=1.0 + epsilon, t=float(times[bad.min()]), step=step
            ))

        size = config.n_max + 1
        logger.info(f"Oracle solved {size} states on {len(times)} points (step {step:.3g}, {config.scheme.value})")
        return PmfTable(
            n0=model.n0,
            states=[model.n0 + level for level in range(size)],
            times=[float(t) for t in times],
            values=values,
            error_bounds=bounds,
            source=TableSource.oracle,
            order=order.describe(),
            k_mode="unbounded" if model.k == UNBOUNDED else f"k={model.k}",
            flags=[],
        )

    @staticmethod
    def _solve(model: RateModel, order: OrderSpec, times: np.ndarray, step: float,
               config: SolverConfig) -> np.ndarray:
        size = config.n_max + 1
        generator = _generator(model, size)
        orders = [order.at(model.n0 + level) for level in range(size)]
        if config.scheme is SolverScheme.rk4:
            if any(a != 1.0 for a in orders):
                raise InputError("RK4 solves the integer-order system only (order 1 on every state)")
            return OracleService._rk4(generator, times, step)
        if config.simultaneous:
            return OracleService._abm_simultaneous(generator, orders, times, step, config)
        return OracleService._abm_sequential(generator, orders, times, step, config)

    @staticmethod
    def _rk4(generator: np.ndarray, times: np.ndarray, step: float) -> np.ndarray:
        size = generator.shape[0]
        values = np.zeros((size, len(times)))
        y = np.zeros(size)
        y[0] = 1.0
        values[:, 0] = y
        for j in range(1, len(times)):
            k_1 = generator @ y
            k_2 = generator @ (y + 0.5 * step * k_1)
            k_3 = generator @ (y + 0.5 * step * k_2)
            k_4 = generator @ (y + step * k_3)
            y = y + step / 6.0 * (k_1 + 2.0 * k_2 + 2.0 * k_3 + k_4)
            values[:, j] = y
        return values

    @staticmethod
    def _abm_sequential(generator: np.ndarray, orders: Sequence[float], times: np.ndarray,
                        step: float, config: SolverConfig) -> np.ndarray:
        size = generator.shape[0]
        steps = len(times) - 1
        memory = config.max_memory_terms
        values = np.zeros((size, steps + 1))
        weights: Dict[float, _ProductWeights] = {}

        for level in range(size):
            alpha = orders[level]
            if alpha not in weights:
                weights[alpha] = _ProductWeights(alpha, step, steps)
            w = weights[alpha]
            mu = -generator[level, level]
            forcing = generator[level, :level] @ values[:level] if level else np.zeros(steps + 1)
            initial = 1.0 if level == 0 else 0.0

            y = values[level]
            f = np.zeros(steps + 1)
            y[0] = initial
            f[0] = -mu * initial + forcing[0]
            for j in range(steps):
                history = w.corrector_history(f, j, memory)
                if config.corrector == "implicit":
                    y[j + 1] = (initial + w.corrector_scale * (forcing[j + 1] + history)) / (1.0 + w.corrector_scale * mu)
                else:
                    predicted = initial + w.predictor_history(f, j, memory)
                    y[j + 1] = initial + w.corrector_scale * (-mu * predicted + forcing[j + 1] + history)
                f[j + 1] = -mu * y[j + 1] + forcing[j + 1]
        return values

    @staticmethod
    def _abm_simultaneous(generator: np.ndarray, orders: Sequence[float], times: np.ndarray,
                          step: float, config: SolverConfig) -> np.ndarray:
        """
        Whole-system implicit corrector: (I - C A) Y_{j+1} = Y_0 + C hist

        C is diagonal with each state's corrector scale.
        """
        size = generator.shape[0]
        steps = len(times) - 1
        memory = config.max_memory_terms
        weights = [_ProductWeights(a, step, steps) for a in orders]
        scales = np.array([w.corrector_scale for w in weights])
        system = np.eye(size) - scales[:, None] * generator

        values = np.zeros((size, steps + 1))
        values[0, 0] = 1.0
        derivatives = np.zeros((size, steps + 1))
        derivatives[:, 0] = generator @ values[:, 0]
        initial = values[:, 0].copy()
        for j in range(steps):
            history = np.array([w.corrector_history(derivatives[level], j, memory) for level, w in enumerate(weights)])
            values[:, j + 1] = solve_triangular(system, initial + scales * history, lower=True)
            derivatives[:, j + 1] = generator @ values[:, j + 1]
        return values

    @staticmethod
    def _step_doubling_bounds(fine: np.ndarray, coarse: np.ndarray, order: OrderSpec,
                              model: RateModel, scheme: SolverScheme) -> np.ndarray:
        """|fine - coarse| / (2^p - 1) on shared points, carried to the odd points"""
        if scheme is SolverScheme.rk4:
            rate = 4.0
        else:
            rate = 1.0 + min(order.at(model.n0 + level) for level in range(fine.shape[0]))
        shared = np.abs(fine[:, ::2] - coarse) / (2.0 ** rate - 1.0)
        bounds = np.empty_like(fine)
        bounds[:, ::2] = shared
        bounds[:, 1::2] = np.maximum(shared[:, :-1], shared[:, 1:])
        return bounds

    # ------------------------------------------------------------------
    # Convergence helpers
    # ------------------------------------------------------------------

    @staticmethod
    def richardson_extrapolate(coarse: Union[float, np.ndarray], fine: Union[float, np.ndarray],
                               order: float, ratio: float = 2.0):
        """Eliminate the leading h^order error term from two step sizes"""
        factor = ratio ** order
        return fine + (fine - coarse) / (factor - 1.0)

    @staticmethod
    def estimate_convergence_order(values: Sequence[float], ratio: float = 2.0) -> float:
        """
        Observed order from three solutions at h, h/ratio, h/ratio^2

        p = log(|y_h - y_{h/r}| / |y_{h/r} - y_{h/r^2}|) / log r
        """
        if len(values) != 3:
            raise InputError("Convergence order needs exactly three solutions")
        first, second, third = values
        upper, lower = abs(first - second), abs(second - third)
        if lower == 0.0 or upper == 0.0:
            return math.inf
        return math.log(upper / lower) / math.log(ratio)

    @staticmethod
    def convergence_study(model: RateModel, order: Union[OrderSpec, float], t_end: float,
                          step: float, n_max: int, state: Optional[int] = None) -> Dict[str, float]:
        """Solve at step, step/2 and step/4 and report the observed order at t_end"""
        order = _as_order(order)
        state = model.n0 if state is None else state
        row = state - model.n0
        if not 0 <= row <= n_max:
            raise InputError(f"State {state} is outside the solved range")
        finals = []
        for refinement in range(3):
            config = SolverConfig(step=step / 2 ** refinement, n_max=n_max)
            table = OracleService.solve_fractional_system(model, order, t_end, config)
            finals.append(float(table.values[row, -1]))
        observed = OracleService.estimate_convergence_order(finals)
        theoretical = 1.0 + min(order.at(model.n0 + level) for level in range(n_max + 1))
        extrapolated = OracleService.richardson_extrapolate(finals[1], finals[2], theoretical)
        logger.info(f"Observed convergence order {observed:.3f} at t={t_end} for state {state}")
        return {
            "observed_order": observed,
            "theoretical_order": theoretical,
            "extrapolated": float(extrapolated),
            "finest": finals[2],
        }

    # ------------------------------------------------------------------
    # Laplace and Caputo checks
    # ------------------------------------------------------------------

    @staticmethod
    def numeric_laplace(f: Callable[[float], float], s: float, t_cut: float,
                        sup_estimate: float = 1.0) -> KernelResult:
        """
        Integral of exp(-s t) f(t) over [0, t_cut] plus a tail bound

        Args:
            f: Function bounded by sup_estimate on [t_cut, inf)
            s: Laplace variable, s > 0
            t_cut: Integration cut-off

        Returns:
            KernelResult: value and quadrature error plus exp(-s t_cut) / s * sup

        Raises:
            QuadratureError: Adaptive quadrature did not converge
        """
        if not (is_finite_number(s) and s > 0):
            raise InputError(f"Laplace variable must be positive, got {s}")
        if not (is_finite_number(t_cut) and t_cut > 0):
            raise InputError(f"t_cut must be positive, got {t_cut}")
        with warnings.catch_warnings():
            warnings.simplefilter("error", integrate.IntegrationWarning)
            try:
                value, abserr = integrate.quad(
                    lambda t: math.exp(-s * t) * f(t), 0.0, t_cut, limit=400, epsabs=1e-13, epsrel=1e-11
                )
            except integrate.IntegrationWarning as e:
                raise QuadratureError(f"Laplace quadrature did not converge for s={s}: {e}")
        tail = math.exp(-s * t_cut) / s * sup_estimate
        return KernelResult(value, abserr + tail)

    @staticmethod
    def caputo_derivative(values: np.ndarray, step: float, alpha: float) -> np.ndarray:
        """
        L1 approximation of the Caputo derivative on a uniform grid from t=0

        h^-a / Gamma(2-a) sum_m b_(j-1-m) (y_(m+1) - y_m), b_q = (q+1)^(1-a) - q^(1-a)
        """
        if alpha == 1.0:
            return np.gradient(values, step, edge_order=2)
        lags = np.arange(len(values) - 1, dtype=float)
        kernel = (lags + 1.0) ** (1.0 - alpha) - lags ** (1.0 - alpha)
        derivative = np.zeros(len(values))
        derivative[1:] = np.convolve(np.diff(values), kernel)[:len(values) - 1]
        return derivative * step ** (-alpha) / gamma(2.0 - alpha)

    @staticmethod
    def caputo_residual(model: RateModel, order: Union[OrderSpec, float], table: PmfTable,
                        t_min: float = 0.1) -> ResidualReport:
        """
        Sup over t >= t_min of |D^a p(n, .) - right-hand side| per state

        The L1 derivatives on the grid and on every other point are combined
        by one Richardson step, so residuals are reported on even indices.
        """
        order = _as_order(order)
        times = np.asarray(table.times, dtype=float)
        if len(times) < 5 or times[0] != 0.0:
            raise InputError("Caputo residuals need a uniform grid starting at t=0 with at least five points")
        steps = np.diff(times)
        step = float(steps[0])
        if not np.allclose(steps, step, rtol=1e-9, atol=0.0):
            raise InputError("Caputo residuals need a uniform time grid")
        coarse_grid = step > settings.caputo_max_step
        if coarse_grid:
            logger.warning(f"Grid step {step} is coarser than {settings.caputo_max_step}; residuals are unreliable")

        size = len(table.states)
        generator = _generator(model, size)
        rhs = generator @ table.values
        mask = times >= t_min
        residuals: Dict[int, float] = {}
        for level, state in enumerate(table.states):
            alpha = order.at(state)
            derivative = OracleService.caputo_derivative(table.values[level], step, alpha)
            candidate = mask.copy()
            if alpha != 1.0:
                halved = OracleService.caputo_derivative(table.values[level, ::2], 2.0 * step, alpha)
                factor = 2.0 ** (2.0 - alpha)
                extrapolated = np.full(len(times), np.nan)
                extrapolated[::2] = (factor * derivative[::2] - halved) / (factor - 1.0)
                derivative = extrapolated
                candidate[1::2] = False
            residual = np.abs(derivative - rhs[level])[candidate]
            residuals[state] = float(residual.max()) if residual.size else 0.0
        return ResidualReport(residuals, coarse_grid, t_min, step)
