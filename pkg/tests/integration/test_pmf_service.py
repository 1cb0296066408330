"""
Integration Tests - Pmf Service
"""
import math

import mpmath
import numpy as np
import pytest

from src.models.domain import ConstantOrder, ModelKind, PerStateOrder, RateModelDocument
from src.services.pmf_service import PmfService
from src.services.rate_service import RateService, make_rate_model
from src.services.special_functions import inv_lt_general, mittag_leffler
from src.utils.exceptions import BudgetExceededError, ExplosionRiskError, InputError


def poisson_reference(m: int, t: float, alpha: float) -> float:
    """Time-fractional Poisson pmf at rate 1 as an alternating series in mpmath"""
    with mpmath.workdps(60):
        a = mpmath.mpf(alpha)
        x = mpmath.mpf(t) ** a
        total = mpmath.mpf(0)
        for r in range(400):
            term = mpmath.binomial(m + r, m) * x ** (m + r) * mpmath.rgamma(a * (m + r) + 1)
            total += term if r % 2 == 0 else -term
        return float(total)


def linear_birth_reference(n: int, t: float, alpha: float) -> float:
    """Pure birth pmf with lambda_j = j from n0 = 1"""
    lambdas = list(range(1, n + 1))
    product = math.prod(lambdas[:-1])
    terms = []
    for i, lam_i in enumerate(lambdas):
        denominator = math.prod(lam_l - lam_i for l, lam_l in enumerate(lambdas) if l != i)
        terms.append(mittag_leffler(alpha, -lam_i * t ** alpha) / denominator)
    return product * math.fsum(terms)


@pytest.mark.integration
class TestClosedForms:
    """Special cases with known pmfs"""

    @pytest.mark.parametrize("alpha", [0.5, 0.8, 1.0])
    def test_time_fractional_poisson(self, poisson_model, alpha):
        """Test the rate-one Poisson case against its series"""
        for m in range(0, 7):
            for t in [0.25, 0.5, 1.0, 1.5, 2.0]:
                expected = poisson_reference(m, t, alpha)
                assert PmfService.pmf(poisson_model, alpha, m, t) == pytest.approx(expected, abs=1e-9)

    def test_poisson_patterns_strategy(self, poisson_model):
        value = PmfService.pmf(poisson_model, 0.8, 4, 1.5, strategy="patterns")
        assert value == pytest.approx(poisson_reference(4, 1.5, 0.8), abs=1e-9)

    def test_classical_poisson(self, poisson_model):
        for m in range(0, 6):
            expected = math.exp(-1.3) * 1.3 ** m / math.factorial(m)
            assert PmfService.pmf(poisson_model, 1.0, m, 1.3) == pytest.approx(expected, abs=1e-12)

    @pytest.mark.parametrize("alpha", [0.6, 1.0])
    def test_fractional_pure_birth(self, linear_birth_model, alpha):
        """Test lambda_n = n against the partial-fraction closed form"""
        for n in range(1, 6):
            for t in [0.25, 0.75, 1.5]:
                expected = linear_birth_reference(n, t, alpha)
                assert PmfService.pmf(linear_birth_model, alpha, n, t) == pytest.approx(expected, abs=1e-9)

    def test_survival_first_wait(self, generic_model):
        """Test Pr{W1 > t} = E_alpha(-mu_n0 t^alpha)"""
        t = 0.9
        expected = mittag_leffler(0.7, -2.0 * t ** 0.7)
        assert PmfService.survival_first_wait(generic_model, 0.7, t) == pytest.approx(expected, rel=1e-14)
        assert PmfService.survival_first_wait(generic_model, 0.7, 0.0) == 1.0

    def test_space_time_first_jump(self):
        """Test the first level of the space-time preset against the repeated-rate kernel"""
        model = RateService.preset("stfpp", {"lambda": 1.0, "beta": 0.5})
        t = 0.8
        expected = 0.5 * inv_lt_general(0.9, [1.0, 1.0], t).value
        assert PmfService.pmf(model, 0.9, 1, t) == pytest.approx(expected, abs=1e-12)


@pytest.mark.integration
class TestStrategies:
    """Pattern, signature and level evaluation agree"""

    def test_strategies_agree(self, generic_model):
        n = generic_model.n0 + 4
        for t in [0.3, 1.3]:
            values = [
                PmfService.pmf(generic_model, 0.7, n, t, strategy=strategy)
                for strategy in ("patterns", "signatures", "levels", "auto")
            ]
            for value in values[1:]:
                assert value == pytest.approx(values[0], abs=1e-10)

    def test_initial_condition(self, generic_model):
        assert PmfService.pmf(generic_model, 0.7, 1, 0.0) == 1.0
        assert PmfService.pmf(generic_model, 0.7, 4, 0.0) == 0.0

    def test_invalid_arguments(self, generic_model):
        with pytest.raises(InputError):
            PmfService.pmf(generic_model, 0.7, 0, 1.0)
        with pytest.raises(InputError):
            PmfService.pmf(generic_model, 0.7, 2, -1.0)
        with pytest.raises(InputError):
            PmfService.pmf(generic_model, 0.7, 2, 1.0, strategy="fastest")
        with pytest.raises(InputError):
            PmfService.pmf(generic_model, 1.3, 2, 1.0)

    def test_levels_strategy_needs_separated_totals(self, gfcp_model):
        with pytest.raises(InputError):
            PmfService.pmf(gfcp_model, 0.5, 2, 1.0, strategy="levels")

    def test_pattern_budget(self, generic_model):
        """Test that the explicit sum refuses sets above the budget"""
        with pytest.raises(BudgetExceededError) as info:
            PmfService.evaluate_pmf(generic_model, 0.7, generic_model.n0 + 4, 1.0,
                                    strategy="patterns", pattern_budget=3)
        assert info.value.count == 5
        assert info.value.limit == 3

    def test_error_bounds_reported(self, generic_model):
        result = PmfService.evaluate_pmf(generic_model, 0.7, 3, 1.0)
        assert 0.0 <= result.error_bound < 1e-10
        assert result.reduced_accuracy is False

    def test_path_rate_profile(self, generic_model):
        profile = PmfService.path_rate_profile(generic_model, 0.7, (1, 2, 0))
        assert profile.epochs.lambda_set == (0, 1, 3)
        assert profile.mu == (2.0, 3.0, 5.0)
        assert profile.jump_rate_product == 1.0 * 1.0
        assert profile.orders == (0.7, 0.7, 0.7)


@pytest.mark.integration
class TestStateDependentOrders:
    """One fractional order per state"""

    def test_equal_orders_match_constant(self, generic_model):
        order = PerStateOrder.from_mapping({n: 0.7 for n in range(1, 6)}, default=0.7)
        for n in range(1, 6):
            for t in [0.5, 1.5]:
                expected = PmfService.pmf(generic_model, 0.7, n, t)
                assert PmfService.pmf_state_dependent(generic_model, order, n, t) == pytest.approx(expected, abs=1e-9)

    def test_constant_entry_point_rejects_per_state_orders(self, generic_model):
        order = PerStateOrder.from_mapping({1: 0.5}, default=0.9)
        with pytest.raises(InputError):
            PmfService.pmf(generic_model, order, 2, 1.0)

    def test_mixed_orders_are_non_negative(self, generic_model):
        order = PerStateOrder.from_mapping({1: 0.6, 2: 0.9}, default=0.8)
        values = [PmfService.pmf_state_dependent(generic_model, order, n, 0.7) for n in range(1, 8)]
        assert all(v >= -1e-12 for v in values)
        assert values[0] == pytest.approx(mittag_leffler(0.6, -2.0 * 0.7 ** 0.6), rel=1e-13)

    def test_four_distinct_orders(self):
        """Test a k=1 model whose first four states all have their own order"""
        model = make_rate_model(0, 1, lambda n, i: 1.0 + n)
        order = PerStateOrder.from_mapping({0: 0.5, 1: 0.9, 2: 0.7, 3: 0.6}, default=0.8)
        values = [PmfService.pmf_state_dependent(model, order, n, 1.0) for n in range(4)]
        assert all(0.0 < v < 1.0 for v in values)
        assert values[0] == pytest.approx(mittag_leffler(0.5, -1.0), rel=1e-13)

    def test_mixed_orders_match_laplace_levels(self, generic_model):
        """Test the per-state level recursion against the pattern transform"""
        order = PerStateOrder.from_mapping({1: 0.6, 2: 0.9}, default=0.8)
        for n in range(1, 6):
            levels = PmfService.pmf_laplace(generic_model, order, n, 0.9, strategy="levels")
            patterns = PmfService.pmf_laplace(generic_model, order, n, 0.9, strategy="patterns")
            assert levels == pytest.approx(patterns, rel=1e-12)


@pytest.mark.integration
class TestLaplaceDomain:
    """Transforms of p(n, .)"""

    def test_initial_state_transform(self, generic_model):
        s = 1.7
        expected = s ** (0.7 - 1.0) / (s ** 0.7 + 2.0)
        assert PmfService.pmf_laplace(generic_model, 0.7, 1, s) == pytest.approx(expected, rel=1e-14)

    def test_levels_match_patterns(self, generic_model):
        for n in range(1, 7):
            levels = PmfService.pmf_laplace(generic_model, 0.7, n, 1.3, strategy="levels")
            patterns = PmfService.pmf_laplace(generic_model, 0.7, n, 1.3, strategy="patterns")
            assert levels == pytest.approx(patterns, rel=1e-12)

    def test_transforms_sum_to_one_over_s(self, gfcp_model):
        """Test that the transforms of a conservative pmf add up to 1/s"""
        s = 2.0
        total = math.fsum(PmfService.pmf_laplace(gfcp_model, 0.6, n, s) for n in range(0, 400))
        assert total == pytest.approx(1.0 / s, abs=1e-9)

    def test_invalid_laplace_variable(self, generic_model):
        with pytest.raises(InputError):
            PmfService.pmf_laplace(generic_model, 0.7, 2, 0.0)
        with pytest.raises(InputError):
            PmfService.pmf_laplace(generic_model, 0.7, 2, 1.0, strategy="other")


@pytest.mark.integration
class TestTables:
    """Tabulation until the missing mass is small"""

    def test_normalization_order_one(self, generic_model):
        table = PmfService.pmf_table(generic_model, 1.0, [0.5, 1.0, 1.5, 2.0], 1e-6)
        assert table.flags == []
        assert np.all(table.deficit() < 1e-6)
        assert np.all(table.values >= -1e-12)
        assert table.states[0] == generic_model.n0

    def test_normalization_fractional(self, generic_model):
        table = PmfService.pmf_table(generic_model, 0.7, [0.25, 0.5], 1e-6)
        assert table.flags == []
        assert np.all(table.deficit() < 1e-6)
        assert table.order == {"alpha": 0.7}

    def test_unbounded_jumps(self):
        """Test normalization with jump sizes beyond any bound"""
        model = RateService.preset("cfpp", {"beta": "0.5^i"})
        table = PmfService.pmf_table(model, 0.8, [0.5, 1.0], 1e-6)
        assert table.k_mode == "unbounded"
        assert np.all(table.deficit() < 1e-6)

    def test_time_zero_column(self, poisson_model):
        table = PmfService.pmf_table(poisson_model, 0.5, [0.0, 0.5], 1e-8)
        assert table.values[0, 0] == 1.0
        assert np.all(table.values[1:, 0] == 0.0)

    def test_explosion_gate(self):
        """Test that quadratic rates are refused unless overridden"""
        model = make_rate_model(0, 1, lambda n, i: float((n + 1) ** 2))
        with pytest.raises(ExplosionRiskError):
            PmfService.pmf_table(model, 0.8, [1.0], 1e-6)

        table = PmfService.pmf_table(model, 0.8, [1.0], 1e-6, state_budget=5, override=True)
        assert len(table.states) == 5
        assert "state_budget_exhausted" in table.flags

    def test_finite_rate_list(self):
        """Test a birth process given by an explicit list of rates"""
        model = RateService.preset("fpbp", {"lambdas": [1.0, 2.0, 3.0, 4.0]})
        table = PmfService.pmf_table(model, 0.8, [0.5, 1.0], 1e-9)

        assert table.states == [1, 2, 3, 4]
        assert table.flags == ["rate_table_exhausted"]
        for row, n in enumerate(table.states):
            assert table.values[row, 1] == pytest.approx(PmfService.pmf(model, 0.8, n, 1.0), abs=1e-12)

    def test_finite_rate_table(self):
        document = RateModelDocument(
            n0=0, k=2, kind=ModelKind.table, rates=[[1.0, 0.5], [2.0, 0.5], [3.0, 0.5], [4.0, 0.5], [5.0, 0.5]],
        )
        model = RateService.from_document(document)
        table = PmfService.pmf_table(model, 0.7, [1.0], 1e-9)

        assert table.states == [0, 1, 2, 3, 4]
        assert "rate_table_exhausted" in table.flags
        assert np.all(table.values >= -1e-12)

    def test_pattern_budget_flag(self, generic_model):
        table = PmfService.pmf_table(
            generic_model, 0.7, [1.0], 1e-12, strategy="signatures", pattern_budget=2,
        )
        assert "pattern_budget_exhausted" in table.flags
        assert len(table.states) == 3

    def test_invalid_table_arguments(self, generic_model):
        with pytest.raises(InputError):
            PmfService.pmf_table(generic_model, 0.7, [], 1e-6)
        with pytest.raises(InputError):
            PmfService.pmf_table(generic_model, 0.7, [1.0], 0.0)
        with pytest.raises(InputError):
            PmfService.pmf_table(generic_model, 0.7, [1.0], 1e-6, strategy="patterns")

    def test_grid_matches_pointwise(self, generic_model):
        table = PmfService.pmf_grid(generic_model, ConstantOrder(0.7), 4, [0.5, 1.0])
        for row, n in enumerate(table.states):
            for column, t in enumerate(table.times):
                assert table.values[row, column] == pytest.approx(
                    PmfService.pmf(generic_model, 0.7, n, t), abs=1e-12
                )


@pytest.mark.integration
@pytest.mark.slow
class TestSubordination:
    """Order one half through the Brownian clock"""

    def test_half_order_matches_time_change(self, gfcp_model):
        for n in range(0, 4):
            direct = PmfService.pmf(gfcp_model, 0.5, n, 1.0)
            subordinated = PmfService.subordinated_pmf_half(gfcp_model, n, 1.0)
            assert subordinated.value == pytest.approx(direct, abs=1e-7)
