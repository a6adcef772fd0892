import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from sd_decide import CriterionKind, CriterionSpec, DecisionProblem, DecisionRule, Prior, solve
from sd_decide.core import bayes_loss_distribution, iter_deterministic_rules, loss_distribution, quantile, random_problem
from sd_decide.criteria import evaluate_criterion
from sd_decide.errors import DomainError, StructuralError, ValidationError

from conftest import problem_shapes

K = CriterionKind


def spec_for(kind, prior_n=1, lam=0.5):
    return CriterionSpec(
        kind,
        lam=lam if kind.needs_lambda else None,
        prior=Prior.uniform(prior_n) if kind.needs_prior else None,
    )


def hybrid_instance():
    """Two states; the single rule's losses are {0: .6, 10: .4} and {0: .4, 10: .6}."""
    p = DecisionProblem(
        ["s0", "s1"], ["x", "y"], ["good", "bad"], [[0.0, 10.0], [0.0, 10.0]], [[0.6, 0.4], [0.4, 0.6]]
    )
    return p, DecisionRule.deterministic([0, 1], 2)


class TestSpec:
    def test_requires_lambda(self):
        with pytest.raises(ValidationError):
            CriterionSpec(K.QUANTILE_MINIMAX)

    def test_requires_prior(self):
        with pytest.raises(ValidationError):
            CriterionSpec(K.BAYES_RISK)

    @pytest.mark.parametrize("lam", [0.0, 1.0, 1.2])
    def test_lambda_domain(self, lam):
        with pytest.raises(DomainError):
            CriterionSpec(K.QUANTILE_MINIMAX, lam=lam)

    def test_json_round_trip(self):
        spec = CriterionSpec(K.BAYES_QUANTILE, lam=0.25, prior=Prior([0.3, 0.7]))
        back = CriterionSpec.from_json(spec.to_json())
        assert back.kind is K.BAYES_QUANTILE
        assert back.lam == 0.25
        np.testing.assert_array_equal(back.prior.weights, [0.3, 0.7])

    def test_prior_dimension(self):
        p, r = hybrid_instance()
        with pytest.raises(StructuralError):
            evaluate_criterion(p, r, CriterionSpec(K.BAYES_RISK, prior=Prior.uniform(3)))


class TestValues:
    @pytest.mark.parametrize("kind", list(K))
    def test_single_state_point_mass(self, kind):
        p = DecisionProblem(["s"], ["x"], ["a", "b"], [[3.0, 1.0]], [[1.0]])
        rule = DecisionRule([[1.0, 0.0]])
        value = evaluate_criterion(p, rule, spec_for(kind))
        regret = kind in (K.MINIMAX_REGRET, K.QUANTILE_MINIMAX_REGRET)
        assert value == (3.0 - 1.0 if regret else 3.0)

    def test_bayes_degenerate_prior(self):
        p = random_problem(np.random.default_rng(2), 3, 2, 2)
        r = DecisionRule([[0.3, 0.7], [1.0, 0.0]])
        value = evaluate_criterion(p, r, CriterionSpec(K.BAYES_RISK, prior=Prior.degenerate(3, 2)))
        assert value == pytest.approx(loss_distribution(p, r, 2).mean(), abs=1e-12)

    def test_hybrid_and_bayes_quantile_diverge(self):
        p, r = hybrid_instance()
        prior = Prior.uniform(2)
        hybrid = evaluate_criterion(p, r, CriterionSpec(K.HYBRID_QUANTILE_BAYES, lam=0.5, prior=prior))
        bq = evaluate_criterion(p, r, CriterionSpec(K.BAYES_QUANTILE, lam=0.5, prior=prior))
        assert hybrid == 5.0
        assert bq == 0.0


class TestSolve:
    def test_one_rule(self):
        p, r = hybrid_instance()
        res = solve(p, [r], CriterionSpec(K.MINIMAX_RISK))
        assert res.optimal_rules == [0]

    def test_minimax_risk_prefers_lower_vector(self):
        p = DecisionProblem(["s", "t"], ["x"], ["a", "b"], [[1.0, 2.0], [1.0, 2.0]], [[1.0], [1.0]])
        rules = [DecisionRule([[1.0, 0.0]]), DecisionRule([[0.0, 1.0]])]
        res = solve(p, rules, CriterionSpec(K.MINIMAX_RISK))
        assert res.optimal_rules == [0]
        assert res.per_rule_values == [1.0, 2.0]

    def test_all_ties_reported(self):
        p = DecisionProblem(["s"], ["x"], ["a", "b"], [[1.0, 1.0]], [[1.0]])
        rules = [DecisionRule([[1.0, 0.0]]), DecisionRule([[0.0, 1.0]])]
        assert solve(p, rules, CriterionSpec(K.MINIMAX_RISK)).optimal_rules == [0, 1]

    def test_empty(self):
        p, _ = hybrid_instance()
        with pytest.raises(ValidationError):
            solve(p, [], CriterionSpec(K.MINIMAX_RISK))

    def test_bayes_tables_agree_across_orders(self, rng):
        for _ in range(20):
            ns, npts = int(rng.integers(1, 4)), int(rng.integers(1, 4))
            p = random_problem(rng, ns, npts, 2)
            rules = list(iter_deterministic_rules(p))
            prior = Prior(rng.dirichlet(np.ones(ns)))
            res = solve(p, rules, CriterionSpec(K.BAYES_RISK, prior=prior))
            via_mix = [bayes_loss_distribution(p, r, prior).mean() for r in rules]
            np.testing.assert_allclose(res.per_rule_values, via_mix, rtol=0, atol=1e-12)
            best = min(via_mix)
            assert res.optimal_rules == [i for i, v in enumerate(via_mix) if v <= best + 1e-12]


def rules_for(p):
    return list(iter_deterministic_rules(p))


class TestProperties:
    @given(problem_shapes(max_points=3), st.floats(0.01, 0.9), st.floats(0.001, 0.09))
    def test_quantile_minimax_non_decreasing_in_lambda(self, shape, lam, step):
        ns, npts, nd, seed = shape
        p = random_problem(np.random.default_rng(seed), ns, npts, nd, integer_loss=True)
        for r in rules_for(p):
            lo = evaluate_criterion(p, r, CriterionSpec(K.QUANTILE_MINIMAX, lam=lam))
            hi = evaluate_criterion(p, r, CriterionSpec(K.QUANTILE_MINIMAX, lam=lam + step))
            assert lo <= hi
            for s in range(ns):
                d = loss_distribution(p, r, s)
                assert quantile(d, lam) <= quantile(d, lam + step)

    @given(problem_shapes(max_points=3))
    def test_regret_non_negative(self, shape):
        ns, npts, nd, seed = shape
        p = random_problem(np.random.default_rng(seed), ns, npts, nd)
        res = solve(p, rules_for(p), CriterionSpec(K.MINIMAX_REGRET))
        assert res.value >= -1e-12

    def test_regret_zero_when_best_action_everywhere(self):
        # the same action is best in both states
        p = DecisionProblem(["s", "t"], ["x"], ["a", "b"], [[0.0, 1.0], [2.0, 3.0]], [[1.0], [1.0]])
        res = solve(p, rules_for(p), CriterionSpec(K.MINIMAX_REGRET))
        assert res.value == 0.0
        assert res.optimal_rules == [0]

    @given(problem_shapes(max_points=3), st.integers(1, 10))
    def test_constant_shift(self, shape, shift):
        ns, npts, nd, seed = shape
        rng = np.random.default_rng(seed)
        p = random_problem(rng, ns, npts, nd, integer_loss=True)
        q = DecisionProblem(p.states, p.sample_points, p.actions, p.loss + shift, p.sampling)
        prior = Prior(rng.dirichlet(np.ones(ns)))
        rules = rules_for(p)
        for kind in (K.MINIMAX_RISK, K.BAYES_RISK):
            spec = CriterionSpec(kind, prior=prior if kind.needs_prior else None)
            a, b = solve(p, rules, spec), solve(q, rules, spec)
            assert b.value == pytest.approx(a.value + shift, abs=1e-9)
            assert a.optimal_rules == b.optimal_rules
        for kind in (K.MINIMAX_REGRET, K.QUANTILE_MINIMAX_REGRET):
            spec = CriterionSpec(kind, lam=0.3 if kind.needs_lambda else None)
            np.testing.assert_allclose(
                solve(p, rules, spec).per_rule_values, solve(q, rules, spec).per_rule_values, atol=1e-9
            )

    @given(problem_shapes(max_points=3), st.floats(0.05, 0.95))
    def test_quantile_minimax_ordinal_invariance(self, shape, lam):
        ns, npts, nd, seed = shape
        p = random_problem(np.random.default_rng(seed), ns, npts, nd, integer_loss=True)
        cubed = DecisionProblem(p.states, p.sample_points, p.actions, p.loss**3, p.sampling)
        rules = rules_for(p)
        spec = CriterionSpec(K.QUANTILE_MINIMAX, lam=lam)
        assert solve(p, rules, spec).optimal_rules == solve(cubed, rules, spec).optimal_rules
