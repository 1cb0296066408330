"""
Crosscheck Service - analytic probabilities against independent computations

Modes:
    oracle    fractional ODE solve, Richardson-extrapolated over two steps
    mc        Monte Carlo (order 1 paths, or the Brownian clock at order 1/2)
    laplace   level recursion against quadrature of the time-domain values
    residual  Caputo residual of an analytic table
"""
import logging
import math
from typing import Dict, Optional, Sequence, Union

import numpy as np

from src.config import settings
from src.models.domain import (
    ConstantOrder, OrderSpec, PerStateOrder, RateModel, SolverConfig, ValidationReport,
)
from src.services.oracle_service import OracleService
from src.services.pmf_service import PmfService
from src.services.simulation_service import SimulationService
from src.utils.exceptions import InputError, ToleranceError
from src.utils.helpers import normalize_counts, total_variation

logger = logging.getLogger(__name__)

MODES = ("oracle", "mc", "laplace", "residual")

# States below this probability are not required to sit inside the Wilson band
BAND_FLOOR = 0.005


def _as_order(order: Union[OrderSpec, float]) -> OrderSpec:
    if isinstance(order, (ConstantOrder, PerStateOrder)):
        return order
    return ConstantOrder(float(order))


class CrosscheckService:
    """Validation suites behind the validate command"""

    @staticmethod
    def run(mode: str, model: RateModel, order: Union[OrderSpec, float], times: Sequence[float],
            **options) -> ValidationReport:
        if mode == "oracle":
            return CrosscheckService.against_oracle(model, order, times, **options)
        if mode == "mc":
            return CrosscheckService.against_monte_carlo(model, order, times, **options)
        if mode == "laplace":
            return CrosscheckService.laplace_consistency(model, order, **options)
        if mode == "residual":
            return CrosscheckService.caputo_residual(model, order, times, **options)
        raise InputError(f"Unknown validation mode {mode!r}; expected one of {', '.join(MODES)}")

    @staticmethod
    def against_oracle(model: RateModel, order: Union[OrderSpec, float], times: Sequence[float],
                       states: int = 7, step: float = 5e-4, tolerance: float = 1e-6,
                       **_) -> ValidationReport:
        """
        Max |analytic - oracle| over states n0..n0+states-1 and the given times

        The oracle runs at step and 2*step and is extrapolated with the
        theoretical order 1 + min(alpha).
        """
        order = _as_order(order)
        times = [float(t) for t in times]
        t_end = max(times)
        if t_end <= 0:
            raise InputError("Oracle comparison needs at least one positive time")
        fine = OracleService.solve_fractional_system(model, order, t_end, SolverConfig(step=step, n_max=states - 1))
        coarse = OracleService.solve_fractional_system(
            model, order, t_end, SolverConfig(step=2.0 * step, n_max=states - 1)
        )
        rate = 1.0 + min(order.at(n) for n in fine.states)
        fine_step = fine.times[1] - fine.times[0]
        coarse_step = coarse.times[1] - coarse.times[0]

        analytic = PmfService.pmf_grid(model, order, states, times)
        deviations: Dict[str, float] = {}
        worst = 0.0
        for column, t in enumerate(times):
            i_fine = int(round(t / fine_step))
            i_coarse = int(round(t / coarse_step))
            if abs(i_fine * fine_step - t) > 1e-9 or abs(i_coarse * coarse_step - t) > 1e-9:
                raise InputError(f"Time {t} is not on the oracle grid with step {2.0 * step}")
            oracle = OracleService.richardson_extrapolate(
                coarse.values[:, i_coarse], fine.values[:, i_fine], rate
            )
            gap = float(np.max(np.abs(analytic.values[:, column] - oracle)))
            deviations[f"{t:g}"] = gap
            worst = max(worst, gap)

        logger.info(f"Oracle comparison: max deviation {worst:.3e} (tolerance {tolerance:g})")
        return ValidationReport(
            mode="oracle", passed=worst < tolerance, max_deviation=worst, tolerance=tolerance,
            details={"states": states, "step": step, "order": rate, "per_time": deviations},
        )

    @staticmethod
    def against_monte_carlo(model: RateModel, order: Union[OrderSpec, float], times: Sequence[float],
                            samples: int = 100_000, seed: int = 0, tolerance: float = 0.01,
                            threads: Optional[int] = None, **_) -> ValidationReport:
        """
        Total variation and Wilson-band coverage per time

        Order 1 reads Gillespie paths at each time; order 1/2 samples the
        classical process at |B(t)|.
        """
        order = _as_order(order)
        if not order.is_constant or order.at(model.n0) not in (1.0, 0.5):
            raise InputError("Monte Carlo validation needs the constant order 1 or 1/2")
        alpha = order.at(model.n0)
        times = [float(t) for t in times if t > 0]
        if not times:
            raise InputError("Monte Carlo comparison needs at least one positive time")

        paths = SimulationService.run_ensemble(model, max(times), samples, seed, threads) if alpha == 1.0 else None
        per_time: Dict[str, Dict[str, object]] = {}
        worst = 0.0
        passed = True
        for index, t in enumerate(times):
            if paths is not None:
                draws = SimulationService.states_at(paths, t)
            else:
                draws = SimulationService.sample_gfbp_half_ensemble(model, t, samples, seed + index, threads)
            analytic = CrosscheckService._analytic_column(model, order, t, max(draws))
            empirical = SimulationService.empirical_pmf(draws, states=analytic.keys())
            tallied = normalize_counts(SimulationService.histogram_counts(draws))
            if total_variation(tallied, empirical.probabilities) > 1e-12:
                raise ToleranceError(f"Empirical frequencies at t={t:g} disagree with the histogram counts")
            distance = total_variation(empirical.probabilities, analytic)
            outside = [
                n for n, p in analytic.items() if p > BAND_FLOOR and not empirical.contains(n, p)
            ]
            per_time[f"{t:g}"] = {"total_variation": distance, "outside_band": outside}
            worst = max(worst, distance)
            passed = passed and distance < tolerance and not outside

        logger.info(f"Monte Carlo comparison over {samples} samples: max TV {worst:.4f}")
        return ValidationReport(
            mode="mc", passed=passed, max_deviation=worst, tolerance=tolerance,
            details={"samples": samples, "seed": seed, "alpha": alpha, "per_time": per_time},
        )

    @staticmethod
    def _analytic_column(model: RateModel, order: OrderSpec, t: float, highest: int) -> Dict[int, float]:
        """Analytic pmf up to the largest observed state, extended until the rest is negligible"""
        column: Dict[int, float] = {}
        n = model.n0
        while True:
            column[n] = PmfService.evaluate_pmf(model, order, n, t).value
            if n >= highest and 1.0 - math.fsum(column.values()) < 1e-6:
                return column
            if n - model.n0 >= settings.state_budget:
                return column
            n += 1

    @staticmethod
    def laplace_consistency(model: RateModel, order: Union[OrderSpec, float],
                            s_values: Sequence[float] = (0.5, 1.0, 2.0), states: int = 5,
                            tolerance: float = 1e-6, **_) -> ValidationReport:
        """Level recursion against quadrature of exp(-s t) p(n, t)"""
        order = _as_order(order)
        deviations: Dict[str, float] = {}
        worst = 0.0
        for s in s_values:
            # tail exp(-s t_cut) / s stays a decade below the tolerance
            t_cut = math.log(10.0 / (s * tolerance)) / s
            for level in range(states):
                n = model.n0 + level
                transform = PmfService.pmf_laplace(model, order, n, s)
                numeric = OracleService.numeric_laplace(
                    lambda t, n=n: PmfService.evaluate_pmf(model, order, n, t).value, s, t_cut
                )
                gap = abs(transform - numeric.value)
                deviations[f"s={s:g},n={n}"] = gap
                worst = max(worst, gap)

        logger.info(f"Laplace comparison: max deviation {worst:.3e}")
        return ValidationReport(
            mode="laplace", passed=worst < tolerance, max_deviation=worst, tolerance=tolerance,
            details={"states": states, "s_values": list(s_values), "per_point": deviations},
        )

    @staticmethod
    def caputo_residual(model: RateModel, order: Union[OrderSpec, float], times: Sequence[float],
                        states: int = 7, tolerance: float = 1e-4, t_min: float = 0.1,
                        **_) -> ValidationReport:
        """Sup-norm Caputo residual of the analytic table"""
        order = _as_order(order)
        table = PmfService.pmf_grid(model, order, states, times)
        report = OracleService.caputo_residual(model, order, table, t_min=t_min)
        worst = report.max_residual
        logger.info(f"Caputo residual: max {worst:.3e} over {states} states")
        return ValidationReport(
            mode="residual", passed=worst < tolerance and not report.coarse_grid,
            max_deviation=worst, tolerance=tolerance,
            details={
                "residuals": {str(n): r for n, r in report.residuals.items()},
                "coarse_grid": report.coarse_grid, "step": report.step, "t_min": report.t_min,
            },
        )
