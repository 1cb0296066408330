"""
Integration Tests - Oracle Service
"""
import math

import numpy as np
import pytest

from src.models.domain import ConstantOrder, PerStateOrder, PmfTable, SolverConfig, SolverScheme, TableSource
from src.services.oracle_service import OracleService
from src.services.pmf_service import PmfService
from src.services.rate_service import RateService, make_rate_model
from src.utils.exceptions import InputError, SolverStabilityError


def extrapolated_oracle(model, order, t_end, step, n_max):
    """Richardson combination of the oracle at step and 2*step on the coarse grid"""
    fine = OracleService.solve_fractional_system(model, order, t_end, SolverConfig(step=step, n_max=n_max))
    coarse = OracleService.solve_fractional_system(model, order, t_end, SolverConfig(step=2 * step, n_max=n_max))
    order_spec = order if isinstance(order, PerStateOrder) else ConstantOrder(order)
    rate = 1.0 + min(order_spec.at(model.n0 + level) for level in range(n_max + 1))
    values = OracleService.richardson_extrapolate(coarse.values, fine.values[:, ::2], rate)
    return np.asarray(coarse.times), values


@pytest.mark.integration
class TestIntegerOrder:
    """Order one reduces to the Kolmogorov forward equations"""

    def test_rk4_poisson(self, poisson_model):
        """Test RK4 against Poisson(t) probabilities"""
        config = SolverConfig(step=1e-3, n_max=6, scheme=SolverScheme.rk4)
        table = OracleService.solve_fractional_system(poisson_model, 1.0, 1.0, config)

        assert table.source is TableSource.oracle
        assert table.times[-1] == 1.0
        for m in range(7):
            assert table.values[m, -1] == pytest.approx(math.exp(-1.0) / math.factorial(m), abs=1e-10)
        assert np.all(table.error_bounds[:, -1] < 1e-10)

    def test_rk4_rejects_fractional_orders(self, poisson_model):
        config = SolverConfig(step=1e-2, n_max=2, scheme=SolverScheme.rk4)
        with pytest.raises(InputError):
            OracleService.solve_fractional_system(poisson_model, 0.7, 1.0, config)

    def test_abm_order_one(self, linear_birth_model):
        """Test the trapezoidal corrector against the pure birth pmf"""
        table = OracleService.solve_fractional_system(
            linear_birth_model, 1.0, 1.0, SolverConfig(step=1e-3, n_max=4)
        )
        for level in range(5):
            expected = PmfService.pmf(linear_birth_model, 1.0, 1 + level, 1.0)
            assert table.values[level, -1] == pytest.approx(expected, abs=5e-5)


@pytest.mark.integration
class TestFractionalSolver:
    """Adams-Bashforth-Moulton product integration"""

    def test_initial_column(self, oracle_model):
        table = OracleService.solve_fractional_system(oracle_model, 0.6, 0.5, SolverConfig(step=0.01, n_max=4))
        assert table.values[0, 0] == 1.0
        assert np.all(table.values[1:, 0] == 0.0)
        assert table.states == [0, 1, 2, 3, 4]

    @pytest.mark.parametrize("alpha", [0.6, 1.0])
    def test_sequential_matches_simultaneous(self, oracle_model, alpha):
        """Test that the state-by-state and whole-system implicit solves agree"""
        sequential = OracleService.solve_fractional_system(
            oracle_model, alpha, 1.0, SolverConfig(step=0.01, n_max=6, corrector="implicit")
        )
        simultaneous = OracleService.solve_fractional_system(
            oracle_model, alpha, 1.0, SolverConfig(step=0.01, n_max=6, corrector="implicit", simultaneous=True)
        )
        np.testing.assert_allclose(sequential.values, simultaneous.values, rtol=0.0, atol=1e-10)

    def test_pece_close_to_implicit(self, oracle_model):
        pece = OracleService.solve_fractional_system(oracle_model, 0.8, 1.0, SolverConfig(step=1e-3, n_max=4))
        implicit = OracleService.solve_fractional_system(
            oracle_model, 0.8, 1.0, SolverConfig(step=1e-3, n_max=4, corrector="implicit")
        )
        np.testing.assert_allclose(pece.values, implicit.values, rtol=0.0, atol=1e-4)

    def test_full_memory_window(self, oracle_model):
        """Test that a window longer than the grid changes nothing"""
        full = OracleService.solve_fractional_system(oracle_model, 0.7, 1.0, SolverConfig(step=0.01, n_max=3))
        windowed = OracleService.solve_fractional_system(
            oracle_model, 0.7, 1.0, SolverConfig(step=0.01, n_max=3, max_memory_terms=1000)
        )
        np.testing.assert_array_equal(full.values, windowed.values)

    def test_odd_step_count_has_no_bounds(self, oracle_model):
        table = OracleService.solve_fractional_system(oracle_model, 0.7, 0.05, SolverConfig(step=0.01, n_max=2))
        assert np.all(np.isnan(table.error_bounds))

    def test_stability_guard(self):
        """Test that a step far too coarse for the rates is refused"""
        model = RateService.preset("tfpp", {"lambda": 100.0})
        with pytest.raises(SolverStabilityError):
            OracleService.solve_fractional_system(model, 1.0, 2.0, SolverConfig(step=0.5, n_max=2))

    def test_solver_config_validation(self):
        with pytest.raises(InputError):
            SolverConfig(step=0.0, n_max=2)
        with pytest.raises(InputError):
            SolverConfig(step=0.1, n_max=0)
        with pytest.raises(InputError):
            SolverConfig(step=0.1, n_max=2, corrector="explicit")

    def test_time_grid_lands_on_end(self):
        times, step = OracleService.time_grid(1.0, 0.3)
        assert len(times) == 4
        assert times[-1] == 1.0
        assert step == pytest.approx(1.0 / 3.0)

    def test_convergence_order(self, poisson_model):
        """Test that the observed order is near one plus the order"""
        study = OracleService.convergence_study(poisson_model, 0.6, 1.0, 1.0 / 200, n_max=3)
        assert study["theoretical_order"] == pytest.approx(1.6)
        assert study["observed_order"] >= 1.5
        expected = PmfService.pmf(poisson_model, 0.6, 0, 1.0)
        assert abs(study["extrapolated"] - expected) < abs(study["finest"] - expected)


@pytest.mark.integration
class TestConvergenceHelpers:
    """Richardson extrapolation and order estimates"""

    def test_richardson_extrapolate(self):
        assert OracleService.richardson_extrapolate(1.0, 1.5, 1.0) == pytest.approx(2.0)
        assert OracleService.richardson_extrapolate(1.0, 1.75, 2.0) == pytest.approx(2.0)

    def test_estimate_convergence_order(self):
        assert OracleService.estimate_convergence_order([1.0, 0.5, 0.25]) == pytest.approx(1.0)
        assert OracleService.estimate_convergence_order([1.0, 0.25, 0.0625]) == pytest.approx(2.0)
        assert OracleService.estimate_convergence_order([1.0, 1.0, 1.0]) == math.inf
        with pytest.raises(InputError):
            OracleService.estimate_convergence_order([1.0, 0.5])


@pytest.mark.integration
class TestNumericLaplace:
    """Quadrature transforms"""

    def test_constant_function(self):
        result = OracleService.numeric_laplace(lambda t: 1.0, 2.0, 40.0)
        assert result.value == pytest.approx(0.5, abs=1e-10)
        assert result.error_bound < 1e-10

    def test_exponential(self):
        result = OracleService.numeric_laplace(lambda t: math.exp(-t), 1.0, 40.0)
        assert result.value == pytest.approx(0.5, abs=1e-10)

    def test_invalid_arguments(self):
        with pytest.raises(InputError):
            OracleService.numeric_laplace(lambda t: 1.0, 0.0, 10.0)
        with pytest.raises(InputError):
            OracleService.numeric_laplace(lambda t: 1.0, 1.0, -1.0)


@pytest.mark.integration
class TestCaputoResidual:
    """Residual of the governing equations on a table"""

    def test_frozen_table(self, generic_model):
        """Test a table stuck at the initial condition: residual equals the right-hand side"""
        times = [0.01 * j for j in range(101)]
        values = np.zeros((2, len(times)))
        values[0] = 1.0
        table = PmfTable(
            n0=1, states=[1, 2], times=times, values=values, error_bounds=np.zeros_like(values),
        )
        report = OracleService.caputo_residual(generic_model, 0.7, table)

        assert report.residuals[1] == pytest.approx(2.0, abs=1e-12)
        assert report.residuals[2] == pytest.approx(1.0, abs=1e-12)
        assert report.coarse_grid is False

    def test_order_one_analytic_table(self, linear_birth_model):
        times = [0.001 * j for j in range(2001)]
        table = PmfService.pmf_grid(linear_birth_model, 1.0, 5, times)
        report = OracleService.caputo_residual(linear_birth_model, 1.0, table)
        assert report.max_residual < 1e-6

    def test_caputo_derivative_of_power(self):
        """Test the L1 scheme on t, whose Caputo derivative is t^(1-a) / Gamma(2-a)"""
        step = 0.01
        times = np.arange(101) * step
        derivative = OracleService.caputo_derivative(times, step, 0.4)
        expected = times ** 0.6 / math.gamma(1.6)
        np.testing.assert_allclose(derivative, expected, rtol=0.0, atol=1e-12)

    def test_coarse_grid_flag(self, generic_model):
        times = [0.05 * j for j in range(21)]
        table = PmfService.pmf_grid(generic_model, 0.7, 3, times)
        report = OracleService.caputo_residual(generic_model, 0.7, table)
        assert report.coarse_grid is True

    def test_grid_requirements(self, generic_model):
        values = np.ones((1, 4))
        short = PmfTable(n0=1, states=[1], times=[0.0, 0.1, 0.2, 0.3], values=values, error_bounds=values)
        with pytest.raises(InputError):
            OracleService.caputo_residual(generic_model, 0.7, short)

        values = np.ones((1, 5))
        uneven = PmfTable(n0=1, states=[1], times=[0.0, 0.1, 0.2, 0.4, 0.5], values=values, error_bounds=values)
        with pytest.raises(InputError):
            OracleService.caputo_residual(generic_model, 0.7, uneven)


@pytest.mark.integration
@pytest.mark.slow
class TestAgreementWithAnalyticEngine:
    """Oracle and pattern sums on the same model"""

    def test_constant_order(self, oracle_model):
        """Test the extrapolated oracle against the analytic pmf at order 0.6"""
        times, values = extrapolated_oracle(oracle_model, 0.6, 2.0, 5e-4, n_max=10)
        for t in [0.5, 1.0, 2.0]:
            column = int(round(t / times[1]))
            for level in range(7):
                expected = PmfService.pmf(oracle_model, 0.6, level, t)
                assert values[level, column] == pytest.approx(expected, abs=1e-6)

    def test_per_state_orders(self, generic_model):
        """Test mixed orders against the multi-order kernels"""
        order = PerStateOrder.from_mapping({1: 0.6, 2: 0.9}, default=0.8)
        times, values = extrapolated_oracle(generic_model, order, 1.0, 5e-4, n_max=5)
        for level in range(4):
            expected = PmfService.pmf_state_dependent(generic_model, order, 1 + level, 1.0)
            assert values[level, -1] == pytest.approx(expected, abs=1e-5)

    def test_four_distinct_orders(self):
        """Test a one-step birth model with a different order in every state"""
        model = make_rate_model(0, 1, lambda n, i: 1.0 + n)
        order = PerStateOrder.from_mapping({0: 0.5, 1: 0.9, 2: 0.7, 3: 0.6}, default=0.8)
        times, values = extrapolated_oracle(model, order, 1.0, 5e-4, n_max=4)
        for level in range(4):
            expected = PmfService.pmf_state_dependent(model, order, level, 1.0)
            assert values[level, -1] == pytest.approx(expected, abs=1e-5)

    def test_caputo_residual_of_analytic_table(self, generic_model):
        times = [0.001 * j for j in range(2001)]
        table = PmfService.pmf_grid(generic_model, 0.7, 7, times)
        report = OracleService.caputo_residual(generic_model, 0.7, table)
        assert report.max_residual < 1e-4

    @pytest.mark.parametrize("s", [0.5, 1.0, 2.0])
    def test_laplace_consistency(self, generic_model, s):
        t_cut = math.log(10.0 / (s * 1e-6)) / s
        for n in range(1, 6):
            numeric = OracleService.numeric_laplace(lambda t: PmfService.pmf(generic_model, 0.8, n, t), s, t_cut)
            assert numeric.value == pytest.approx(PmfService.pmf_laplace(generic_model, 0.8, n, s), abs=1e-6)

    @pytest.mark.parametrize("alpha", [0.5, 0.8, 1.0])
    def test_generic_instance_on_tenth_grid(self, generic_model, alpha):
        """Test the unextrapolated oracle at step 5e-4 on every 0.1 point of [0, 2]"""
        table = OracleService.solve_fractional_system(generic_model, alpha, 2.0, SolverConfig(step=5e-4, n_max=6))
        for column in range(0, len(table.times), 200):
            t = table.times[column]
            for level in range(7):
                expected = PmfService.pmf(generic_model, alpha, 1 + level, t)
                assert abs(table.values[level, column] - expected) < 1e-5

    @pytest.mark.parametrize("alpha, step", [(0.5, 1.0 / 200), (0.8, 1.0 / 200), (1.0, 0.05)])
    def test_generic_instance_convergence_order(self, generic_model, alpha, step):
        study = OracleService.convergence_study(generic_model, alpha, 1.0, step, n_max=3)
        assert study["observed_order"] >= 1.0 + alpha - 0.1
