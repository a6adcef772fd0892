import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.stats import norm

from sd_decide import DiscreteDistribution, Relation
from sd_decide import monotone as M
from sd_decide.errors import StructuralError, ValidationError

MUS = [-1.0, 0.0, 1.0]


@pytest.fixture(scope="module")
def family():
    return M.GridFamily.normal(MUS, reference=1)


@pytest.fixture(scope="module")
def payoff():
    # flat at the reference state, falling in state 0, rising in state 2
    return M.DosePayoff.linear([0.5, 1.0, 1.5], 1.0)


@pytest.fixture(scope="module")
def scrambled(family):
    return M.RandomizedDoseRule.scrambled(family, (0.0, 1.0), seed=0)


def small_family(n=201):
    return M.GridFamily.normal(MUS, reference=1, n_points=n)


class TestGridFamily:
    def test_masses_are_normal_cell_probabilities(self, family):
        # cells carry equal reference mass except the two tail cells, which absorb the truncation
        m = family.masses(1)
        np.testing.assert_allclose(m[1:-1], 1 / 2001, rtol=1e-9)
        cell_edges = norm.ppf(np.arange(1, 2001) / 2001)
        expected = np.diff(norm.cdf(cell_edges, loc=-1.0))
        np.testing.assert_allclose(family.masses(0)[1:-1], expected, rtol=1e-6, atol=1e-15)

    def test_quadrature_integrates_to_one(self, family):
        np.testing.assert_allclose(family.densities @ family.cell_widths, 1.0, atol=1e-9)

    def test_grid_is_mirror_symmetric(self, family):
        np.testing.assert_array_equal(family.grid, -family.grid[::-1])

    def test_points_are_reference_medians(self):
        fam = small_family(11)
        np.testing.assert_allclose(fam.grid, norm.ppf((np.arange(11) + 0.5) / 11), atol=1e-12)

    def test_uniform_spacing(self):
        fam = M.GridFamily.normal(MUS, reference=1, n_points=201, spacing="uniform")
        np.testing.assert_allclose(np.diff(fam.grid), fam.grid[1] - fam.grid[0])
        assert fam.grid[0] == pytest.approx(-9.0)
        with pytest.raises(ValueError):
            M.GridFamily.normal(MUS, spacing="log")

    def test_validation(self):
        with pytest.raises(ValidationError):
            M.GridFamily([0.0, 1.0], [[0.2, 0.2]], [1.0, 1.0], 0)
        with pytest.raises(ValidationError):
            M.GridFamily([1.0, 0.0], [[0.5, 0.5]], [1.0, 1.0], 0)
        with pytest.raises(StructuralError):
            M.GridFamily([0.0, 1.0], [[0.5, 0.5, 0.0]], [1.0, 1.0], 0)

    def test_json_forms(self):
        fam = small_family(51)
        back = M.GridFamily.from_json(fam.to_json())
        np.testing.assert_array_equal(back.densities, fam.densities)
        compact = M.GridFamily.from_json(
            {"normal_family": {"mus": MUS, "sigma": 1.0, "reference": 1}, "grid": {"points": 51}}
        )
        np.testing.assert_array_equal(compact.grid, fam.grid)


class TestPayoff:
    def test_linear(self, payoff):
        assert payoff.value(0.5, 0) == pytest.approx(-0.25)
        assert [payoff.direction(s) for s in range(3)] == [-1, 0, 1]
        assert payoff.max_slope() == 0.5

    def test_tabulated(self):
        pay = M.DosePayoff((0.0, 1.0), actions=[0.0, 0.5, 1.0], table=[[0, 1, 3], [2, 2, 2]])
        assert pay.value(0.25, 0) == 0.5
        assert pay.direction(1) == 0
        assert pay.max_slope() == 4.0

    def test_tabulated_must_be_monotone(self):
        with pytest.raises(ValidationError):
            M.DosePayoff((0.0, 1.0), actions=[0.0, 0.5, 1.0], table=[[0, 1, 0]])

    def test_reference_must_be_flat(self, family):
        with pytest.raises(ValidationError):
            M.check_compatible(family, M.DosePayoff.linear([0.5, 1.5, 1.5], 1.0))

    def test_json_round_trip(self, payoff):
        back = M.DosePayoff.from_json(payoff.to_json())
        np.testing.assert_array_equal(back.b, payoff.b)


class TestMlr:
    def test_shared_density_holds(self):
        fam = M.GridFamily([0.0, 1.0, 2.0], [[0.2, 0.5, 0.3]] * 2, [1.0, 1.0, 1.0], 0)
        pay = M.DosePayoff.linear([1.0, 2.0], 1.0)
        checks = M.verify_mlr(fam, pay)
        assert all(c.holds for c in checks)
        assert checks[1].worst_violation == 0.0

    def test_normal_location(self, family, payoff):
        checks = M.verify_mlr(family, payoff)
        assert [c.holds for c in checks] == [True, True, True]
        assert [c.required for c in checks] == [True, False, True]

    def test_scrambled_density_fails(self):
        fam = M.GridFamily([0.0, 1.0, 2.0], [[0.2, 0.5, 0.3], [0.5, 0.2, 0.3]], [1.0, 1.0, 1.0], 0)
        pay = M.DosePayoff.linear([1.0, 2.0], 1.0)
        (_, c) = M.verify_mlr(fam, pay)
        assert not c.holds
        assert c.worst_violation > 0

    def test_zero_reference_density_is_unverifiable(self):
        fam = M.GridFamily([0.0, 1.0, 2.0], [[0.5, 0.5, 0.0], [0.2, 0.3, 0.5]], [1.0, 1.0, 1.0], 0)
        pay = M.DosePayoff.linear([1.0, 2.0], 1.0)
        (_, c) = M.verify_mlr(fam, pay)
        assert c.unverifiable_points == (2,)
        assert c.holds


class TestActionDistribution:
    def test_constant_rule(self, family):
        rule = M.RandomizedDoseRule(np.full((family.n_points, 3), 0.4), (0, 1))
        assert M.action_distribution(rule, family, 0) == DiscreteDistribution.point_mass(0.4)

    def test_data_independent_rule(self, family):
        vals = np.tile([0.1, 0.2, 0.9, 0.9], (family.n_points, 1))
        d = M.action_distribution(M.RandomizedDoseRule(vals, (0, 1)), family, 2)
        assert d == DiscreteDistribution([0.1, 0.2, 0.9], [0.25, 0.25, 0.5])

    def test_total_mass(self, family):
        rng = np.random.default_rng(7)
        for _ in range(5):
            rule = M.RandomizedDoseRule(rng.random((family.n_points, 7)), (0, 1))
            for s in range(3):
                assert abs(M.action_distribution(rule, family, s).weights.sum() - 1) <= 1e-6

    def test_bounds_enforced(self):
        with pytest.raises(ValidationError):
            M.RandomizedDoseRule([[1.5]], (0, 1))

    def test_grid_mismatch(self, family):
        with pytest.raises(StructuralError):
            M.action_distribution(np.zeros(5), family, 0)


class TestRearrange:
    def test_output_non_decreasing(self, family, scrambled):
        out = M.monotone_rearrange(scrambled, family)
        assert np.all(np.diff(out) >= 0)
        assert out.min() >= 0 and out.max() <= 1

    def test_anti_monotone_is_reflected(self, family):
        rule = M.RandomizedDoseRule(-family.grid)
        np.testing.assert_array_equal(M.monotone_rearrange(rule, family), family.grid)

    def test_idempotent_on_monotone_rule(self, family):
        rule = M.RandomizedDoseRule(np.tanh(family.grid))
        np.testing.assert_array_equal(M.monotone_rearrange(rule, family), rule.values[:, 0])

    def test_preserves_reference_distribution(self, family, scrambled):
        disc = M.rearrangement_discrepancy(scrambled, family)
        assert disc <= 1e-3
        # quantization bound: half a cell of reference mass per v-point gap
        n, nv = family.n_points, scrambled.n_v
        assert disc == pytest.approx((nv - 1) / (2 * n * nv), abs=1e-10)

    def test_halving_cells_halves_discrepancy(self):
        coarse = M.GridFamily.normal(MUS, reference=1, n_points=1001)
        fine = M.GridFamily.normal(MUS, reference=1, n_points=2002)
        d_coarse = M.rearrangement_discrepancy(M.RandomizedDoseRule.scrambled(coarse, seed=3), coarse)
        d_fine = M.rearrangement_discrepancy(M.RandomizedDoseRule.scrambled(fine, seed=3), fine)
        assert d_fine <= 0.5 * d_coarse + 1e-10

    @given(st.integers(0, 2**32 - 1))
    def test_random_rules(self, seed):
        fam = small_family(101)
        rule = M.RandomizedDoseRule(np.random.default_rng(seed).random((101, 5)), (0, 1))
        out = M.monotone_rearrange(rule, fam)
        assert np.all(np.diff(out) >= 0)
        assert set(out) <= set(rule.values.ravel())
        assert M.rearrangement_discrepancy(rule, fam) <= (5 - 1) / (2 * 101 * 5) + 1e-10


class TestPayoffDistribution:
    def test_flat_state_is_point_mass(self, family, payoff, scrambled):
        d = M.payoff_distribution(scrambled, family, payoff, 1)
        assert d == DiscreteDistribution.point_mass(0.0)

    def test_mass(self, family, payoff, scrambled):
        for s in range(3):
            assert abs(M.payoff_distribution(scrambled, family, payoff, s).weights.sum() - 1) <= 1e-6


class TestRearrangedDominance:
    def test_scrambled_rule(self, family, payoff, scrambled):
        checks = M.check_prop7(scrambled, family, payoff)
        for c in checks:
            assert c.within_slack
            assert c.max_violation <= c.mass_slack
            assert c.label == "ok"
        assert checks[1].verdict.relation is Relation.EQUAL

    def test_flat_payoffs_are_equal(self, family, scrambled):
        flat = M.DosePayoff.linear([1.0, 1.0, 1.0], 1.0)
        assert all(c.verdict.relation is Relation.EQUAL for c in M.check_prop7(scrambled, family, flat))

    def test_idempotence(self, family, payoff, scrambled):
        once = M.RandomizedDoseRule(M.monotone_rearrange(scrambled, family), (0, 1))
        checks = M.check_prop7(once, family, payoff)
        assert all(c.verdict.relation is Relation.EQUAL for c in checks)
        assert all(c.max_violation == 0.0 for c in checks)

    def test_mlr_failure_is_labelled(self):
        fam = M.GridFamily([0.0, 1.0, 2.0], [[0.2, 0.5, 0.3], [0.5, 0.2, 0.3]], [1.0, 1.0, 1.0], 0)
        pay = M.DosePayoff.linear([1.0, 2.0], 1.0)
        checks = M.check_prop7(M.RandomizedDoseRule([[0.0], [1.0], [0.5]], (0, 1)), fam, pay)
        assert [c.label for c in checks] == ["ok", "MLR unverified"]

    def test_slack_from_geometry(self, family, payoff):
        assert M.grid_slack(family, payoff) == pytest.approx(2 * family.cell_widths.max() * 0.5)
