"""
Unit Tests - Mittag-Leffler function and inversion kernels
"""
import math

import mpmath
import numpy as np
import pytest
from scipy import integrate
from scipy.special import erfcx

from src.services.special_functions import (
    CompleteHomogeneous, evaluate_mittag_leffler, inv_lt_distinct, inv_lt_general,
    inv_lt_multi_order, mittag_leffler, mittag_leffler_mp, partial_fraction_unity,
)
from src.utils.exceptions import DegenerateRatesError, InputError


@pytest.mark.unit
class TestMittagLeffler:
    """E_alpha(z) on both evaluation routes"""

    def test_order_one_is_exponential(self):
        for z in [-5.0, -0.3, 0.0, 2.0]:
            assert mittag_leffler(1.0, z) == pytest.approx(math.exp(z), rel=1e-15)

    def test_zero_argument(self):
        assert mittag_leffler(0.3, 0.0) == 1.0

    @pytest.mark.parametrize("x", [0.1, 1.0, 3.0, 4.9, 5.1, 10.0, 30.0])
    def test_half_order_negative_argument(self, x):
        """Test E_{1/2}(-x) = exp(x^2) erfc(x) across the series and integral routes"""
        assert mittag_leffler(0.5, -x) == pytest.approx(erfcx(x), abs=1e-10)

    def test_half_order_reference_value(self):
        result = evaluate_mittag_leffler(0.5, -1.0)
        assert result.value == pytest.approx(0.42758357615580705, abs=1e-13)
        assert result.error_bound < 1e-10
        assert result.reduced_accuracy is False

    @pytest.mark.parametrize("x", [0.5, 1.0, 2.0])
    def test_half_order_positive_argument(self, x):
        assert mittag_leffler(0.5, x) == pytest.approx(erfcx(-x), rel=1e-12)

    @pytest.mark.parametrize("alpha", [0.1, 0.3, 0.5, 0.7, 0.9, 1.0])
    def test_decreasing_on_negative_axis(self, alpha):
        """Test complete monotonicity along a grid"""
        values = [mittag_leffler(alpha, -x) for x in np.linspace(0.0, 20.0, 41)]
        assert all(a > b for a, b in zip(values, values[1:]))
        assert all(0.0 < v <= 1.0 for v in values)

    def test_reduced_accuracy_flag(self):
        """Test that arguments beyond the certified range are flagged"""
        result = evaluate_mittag_leffler(0.5, -60.0)
        assert result.reduced_accuracy is True
        assert result.value == pytest.approx(erfcx(60.0), rel=1e-8)

    def test_invalid_order(self):
        for alpha in [0.0, 1.2, -0.5, float("nan")]:
            with pytest.raises(InputError):
                mittag_leffler(alpha, -1.0)

    def test_multiprecision_route(self):
        """Test the mpmath evaluation used by the level engine"""
        assert float(mittag_leffler_mp(0.5, 1.0, 30)) == pytest.approx(erfcx(1.0), abs=1e-15)
        assert float(mittag_leffler_mp(0.5, 40.0, 30)) == pytest.approx(erfcx(40.0), rel=1e-12)
        assert float(mittag_leffler_mp(1.0, 2.0, 30)) == pytest.approx(math.exp(-2.0), rel=1e-15)


@pytest.mark.unit
class TestInversionKernels:
    """Inverse Laplace transforms of s^(alpha-1) / prod (s^alpha + mu_j)"""

    def test_single_rate_is_mittag_leffler(self):
        result = inv_lt_distinct(0.6, [2.0], 1.3)
        assert result.value == pytest.approx(mittag_leffler(0.6, -2.0 * 1.3 ** 0.6), rel=1e-14)

    def test_distinct_exponential_case(self):
        """Test (e^(-mu1 t) - e^(-mu2 t)) / (mu2 - mu1) at order one"""
        t = 0.9
        expected = (math.exp(-1.0 * t) - math.exp(-3.0 * t)) / 2.0
        assert inv_lt_distinct(1.0, [1.0, 3.0], t).value == pytest.approx(expected, rel=1e-13)

    def test_general_matches_distinct(self):
        """Test the series kernel against partial fractions on separated rates"""
        mu = [1.0, 2.0, 3.5]
        for alpha in [0.4, 0.6, 1.0]:
            for t in [0.2, 0.8, 2.0]:
                distinct = inv_lt_distinct(alpha, mu, t)
                general = inv_lt_general(alpha, mu, t)
                assert general.value == pytest.approx(distinct.value, abs=1e-12)

    def test_general_repeated_rates(self):
        """Test t^(m-1) e^(-mu t) / (m-1)! for repeated rates at order one"""
        assert inv_lt_general(1.0, [1.0, 1.0], 1.5).value == pytest.approx(1.5 * math.exp(-1.5), rel=1e-13)
        t = 0.7
        assert inv_lt_general(1.0, [2.0, 2.0, 2.0], t).value == pytest.approx(
            0.5 * t * t * math.exp(-2.0 * t), rel=1e-13
        )

    def test_general_error_bound(self):
        result = inv_lt_general(0.5, [4.0, 4.0, 4.0], 3.0)
        assert 0.0 <= result.error_bound < 1e-12
        assert result.value > 0.0

    def test_kernels_at_time_zero(self):
        assert inv_lt_distinct(0.5, [1.0], 0.0).value == 1.0
        assert inv_lt_distinct(0.5, [1.0, 2.0], 0.0).value == 0.0
        assert inv_lt_general(0.5, [1.0, 1.0], 0.0).value == 0.0
        assert inv_lt_multi_order([0.5, 0.8], [1.0, 2.0], 0.0).value == 0.0

    def test_degenerate_rates(self):
        with pytest.raises(DegenerateRatesError):
            inv_lt_distinct(0.5, [1.0, 1.0 + 1e-12], 1.0)

    def test_invalid_inputs(self):
        with pytest.raises(InputError):
            inv_lt_general(0.5, [1.0, -2.0], 1.0)
        with pytest.raises(InputError):
            inv_lt_general(0.5, [1.0], -1.0)
        with pytest.raises(InputError):
            inv_lt_multi_order([0.5], [1.0, 2.0], 1.0)

    def test_multi_order_single_group(self):
        """Test that one shared order reduces to the general kernel"""
        mu = [1.0, 2.0, 2.0]
        multi = inv_lt_multi_order([0.7, 0.7, 0.7], mu, 1.1)
        assert multi.value == pytest.approx(inv_lt_general(0.7, mu, 1.1).value, abs=1e-14)

    def test_multi_order_order_one_limit(self):
        """Test two orders at one against the exponential difference"""
        t = 1.2
        expected = (math.exp(-1.0 * t) - math.exp(-2.5 * t)) / 1.5
        result = inv_lt_multi_order([1.0, 1.0 - 1e-12], [1.0, 2.5], t)
        assert result.value == pytest.approx(expected, abs=1e-9)

    def test_multi_order_four_groups(self):
        """Test four distinct orders against Talbot inversion of the transform"""
        orders = [0.5, 0.9, 0.7, 0.6]
        mu = [1.0, 2.0, 3.0, 4.0]

        def transform(s):
            return s ** (orders[0] - 1) / mpmath.fprod(s ** a + m for a, m in zip(orders, mu))

        result = inv_lt_multi_order(orders, mu, 1.0)
        with mpmath.workdps(30):
            expected = float(mpmath.invertlaplace(transform, 1.0, method="talbot"))
        assert result.value == pytest.approx(expected, abs=1e-10)
        assert 0.0 <= result.error_bound < 1e-12

    def test_multi_order_error_bound_is_certified(self):
        """Test that a loose tail target stays within its reported bound"""
        orders, mu, t = [0.6, 0.8, 0.6], [1.5, 0.5, 3.0], 2.0
        tight = inv_lt_multi_order(orders, mu, t)
        loose = inv_lt_multi_order(orders, mu, t, eps=1e-5)
        assert loose.error_bound < 1e-4
        assert abs(loose.value - tight.value) <= loose.error_bound + tight.error_bound

    @pytest.mark.parametrize("s", [0.5, 1.0, 2.0])
    def test_distinct_kernel_transform(self, s):
        """Test the Laplace transform of the time-domain kernel by quadrature"""
        alpha, mu = 0.7, [1.0, 2.5, 4.0]
        expected = s ** (alpha - 1.0) / math.prod(s ** alpha + m for m in mu)
        value, _ = integrate.quad(
            lambda t: math.exp(-s * t) * inv_lt_distinct(alpha, mu, t).value, 0.0, 40.0 / s, limit=400
        )
        assert value == pytest.approx(expected, abs=1e-8)

    def test_complete_homogeneous(self):
        values = CompleteHomogeneous([1.0, 2.0])
        assert [float(values[r]) for r in range(4)] == [1.0, 3.0, 7.0, 15.0]
        assert float(CompleteHomogeneous([3.0])[4]) == 81.0


@pytest.mark.unit
class TestPartialFractionUnity:
    """Conditioning sum sum_i prod_{j != i} (x + lambda_j) / (lambda_j - lambda_i)"""

    def test_random_draws(self):
        """Test 1000 random draws with separated rates"""
        rng = np.random.default_rng(20240611)
        for _ in range(1000):
            n = int(rng.integers(2, 7))
            lambdas = np.cumsum(np.concatenate([rng.uniform(0.1, 1.0, 1), rng.uniform(0.1, 1.0, n - 1)]))
            x = float(rng.uniform(0.0, 1.0))
            assert partial_fraction_unity(x, lambdas.tolist()) == pytest.approx(1.0, abs=1e-9)

    def test_rejects_repeated_rates(self):
        with pytest.raises(InputError):
            partial_fraction_unity(0.5, [1.0, 1.0])
        with pytest.raises(InputError):
            partial_fraction_unity(0.5, [1.0])
