import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.stats import chi2

from sd_decide import Relation
from sd_decide import stein as S
from sd_decide.errors import DomainError, ValidationError

E = S.Estimator


@pytest.fixture(scope="module")
def theta0_study():
    return S.study(S.SteinConfig(draws=10**6, seed=42))


class TestEstimate:
    def test_mle_is_identity(self):
        x = np.array([0.3, -1.2, 2.0])
        np.testing.assert_array_equal(S.estimate(x, E.MLE), x)

    def test_unit_norm_shrinks_to_zero(self):
        x = np.array([0.6, 0.8, 0.0])
        np.testing.assert_allclose(S.estimate(x, E.JS), 0.0, atol=1e-15)
        np.testing.assert_allclose(S.estimate(x, E.JSPP), 0.0, atol=1e-15)

    def test_small_norm_flips_sign(self):
        assert S.shrinkage_factor(0.5, E.JS) == -1.0
        assert S.shrinkage_factor(0.5, E.JSPP) == 0.0

    def test_zero_guard(self):
        x = np.zeros(3)
        np.testing.assert_array_equal(S.estimate(x, E.JS), x)
        np.testing.assert_array_equal(S.estimate(x, E.JSPP), x)

    def test_batched(self):
        x = np.array([[2.0, 0.0, 0.0], [0.0, 0.0, 0.5]])
        np.testing.assert_allclose(S.estimate(x, E.JS), [[1.5, 0, 0], [0, 0, -1.5]])

    def test_non_finite(self):
        with pytest.raises(DomainError):
            S.estimate([np.nan, 0, 0], E.MLE)

    @given(st.lists(st.floats(-10, 10), min_size=3, max_size=3))
    def test_positive_part_never_flips(self, x):
        x = np.array(x)
        est = S.estimate(x, E.JSPP)
        assert np.all(est * x >= 0)
        assert np.linalg.norm(est) <= np.linalg.norm(x) + 1e-12


class TestLoss:
    def test_exact_estimate(self):
        assert S.loss([1.0, 2.0, 3.0], [1.0, 2.0, 3.0]) == 0.0

    def test_unit_offset(self):
        assert S.loss([0.0, 0.0, 0.0], [0.0, 1.0, 0.0]) == 1.0

    @given(
        st.lists(st.floats(-100, 100), min_size=3, max_size=3),
        st.lists(st.floats(-100, 100), min_size=3, max_size=3),
    )
    def test_component_sum(self, theta, est):
        expected = math.fsum((e - t) ** 2 for e, t in zip(est, theta))
        assert S.loss(theta, est) == pytest.approx(expected, rel=1e-12, abs=1e-12)


class TestConfig:
    def test_validation(self):
        with pytest.raises(ValidationError):
            S.SteinConfig(theta=(0, 0))
        with pytest.raises(ValidationError):
            S.SteinConfig(draws=0)
        with pytest.raises(ValidationError):
            S.SteinConfig(seed=-1)
        with pytest.raises(ValidationError):
            S.SteinConfig(estimators=("OLS",))

    def test_json(self):
        cfg = S.SteinConfig(theta=(1, 2, 3), draws=5, seed=9, estimators=("JS",))
        assert cfg.to_json() == {"theta": [1.0, 2.0, 3.0], "draws": 5, "seed": 9, "estimators": ["JS"]}


class TestSimulate:
    @pytest.mark.parametrize(
        "seed, mle, js",
        [
            (0, 2.648573981375196, 1.0261356455129593),
            (1, 6.8400084699485415, 4.986207119320612),
            (2, 1.1042755706265341, 0.009846631510031567),
        ],
    )
    def test_single_draw_regression(self, seed, mle, js):
        out = S.simulate(S.SteinConfig(draws=1, seed=seed))
        assert out[E.MLE].samples[0] == pytest.approx(mle, rel=1e-14)
        assert out[E.JS].samples[0] == pytest.approx(js, rel=1e-14)
        # norm above 1, so the positive part agrees with JS
        assert out[E.JSPP].samples[0] == out[E.JS].samples[0]

    def test_loss_relations_per_draw(self):
        out = S.simulate(S.SteinConfig(draws=2000, seed=5))
        u = out[E.MLE].samples
        js = np.sort(u - 2.0 + 1.0 / u)
        # cancellation near u = 1 leaves absolute rounding only
        np.testing.assert_allclose(out[E.JS].samples, js, rtol=1e-12, atol=1e-14)

    def test_deterministic_across_threads(self):
        cfg = S.SteinConfig(draws=50_000, seed=11)
        a = S.simulate(cfg, chunk_size=4096, threads=1)
        b = S.simulate(cfg, chunk_size=4096, threads=4)
        for k in a:
            np.testing.assert_array_equal(a[k].samples, b[k].samples)
            np.testing.assert_array_equal(a[k].counts, b[k].counts)

    def test_large_runs_use_histogram(self):
        cfg = S.SteinConfig(draws=S.SAMPLE_LIMIT + 1, seed=1, estimators=("MLE",))
        out = S.simulate(cfg)[E.MLE]
        assert out.samples is None
        assert out.counts.sum() == cfg.draws
        # bin-floored CDF agrees with the exact one within the sampling band
        edges = S.hist_edges()
        assert np.max(np.abs(out.binned_cdf() - S.theta0_exact_cdf(E.MLE, edges))) < S.dkw_epsilon(cfg.draws)

    def test_histogram_slots(self):
        counts = S.bin_counts(np.array([0.0, 1e-9, 50.0, 60.0]))
        assert counts[0] == 1
        assert counts[1] == 1
        assert counts[S.HIST_BINS] == 1
        assert counts[-1] == 1

    def test_means_at_theta0(self, theta0_study):
        cdfs = theta0_study.cdfs
        mle, js = cdfs[E.MLE], cdfs[E.JS]
        assert abs(mle.mean - 3.0) <= 3 * mle.std_error
        assert abs(js.mean - 2.0) <= 3 * js.std_error

    @pytest.mark.parametrize("theta", [(1, 1, 1), (2, 0, 0), (3, 3, 3)])
    def test_js_mean_below_mle_risk(self, theta):
        out = S.simulate(S.SteinConfig(theta=theta, draws=10**6, seed=7, estimators=("MLE", "JS")))
        js = out[E.JS]
        assert js.mean < 3.0 - 2 * js.std_error
        assert abs(out[E.MLE].mean - 3.0) <= 4 * out[E.MLE].std_error


class TestExactOracle:
    def test_chi2_matches_scipy(self):
        x = np.linspace(0, 40, 401)
        np.testing.assert_allclose(S.chi2_3_cdf(x), chi2.cdf(x, 3), atol=1e-14)

    def test_jspp_atom_at_zero(self):
        assert S.theta0_exact_cdf(E.JSPP, 0.0) == pytest.approx(chi2.cdf(1.0, 3), abs=1e-14)
        assert S.theta0_exact_cdf(E.JSPP, 0.0) == pytest.approx(0.1987, abs=1e-4)

    def test_mle_median(self):
        assert S.theta0_exact_cdf(E.MLE, 2.366) == pytest.approx(0.5, abs=1e-4)
        assert S.theta0_exact_cdf(E.MLE, chi2.ppf(0.5, 3)) == pytest.approx(0.5, abs=1e-13)

    def test_negative_t(self):
        for k in E:
            assert S.theta0_exact_cdf(k, -0.5) == 0.0

    def test_js_against_polynomial_roots(self):
        for t in (0.1, 1.0, 5.0, 12.0, 30.0):
            lo, hi = sorted(np.roots([1.0, -(2.0 + t), 1.0]).real)
            expected = chi2.cdf(hi, 3) - chi2.cdf(lo, 3)
            assert S.theta0_exact_cdf(E.JS, t) == pytest.approx(expected, abs=1e-13)

    @given(st.floats(0, 100))
    def test_upper_root_bound(self, t):
        _, u2 = S._js_roots(t)
        assert u2 >= max(1.0, t) - 1e-12

    def test_exact_crossings(self):
        js = S.find_crossing(S.exact_cdf_fn(E.JS), S.exact_cdf_fn(E.MLE), (0, 25))
        assert js.count == 1
        lo, hi = js.intervals[0]
        assert 10 <= lo <= hi <= 14
        assert lo == pytest.approx(11.6169, abs=1e-3)
        assert js.signs == (1, -1)
        pp = S.find_crossing(S.exact_cdf_fn(E.JSPP), S.exact_cdf_fn(E.MLE), (0, 25))
        assert pp.count == 0
        assert pp.uniform_sign == 1

    def test_jspp_weakly_above_mle(self):
        t = np.linspace(0, 60, 6001)
        assert np.all(S.theta0_exact_cdf(E.JSPP, t) >= S.theta0_exact_cdf(E.MLE, t) - 1e-15)

    def test_js_below_mle_somewhere(self):
        t = np.linspace(0, 30, 3001)
        assert np.any(S.theta0_exact_cdf(E.JS, t) < S.theta0_exact_cdf(E.MLE, t))

    def test_dkw(self):
        assert S.dkw_epsilon(10**6) == pytest.approx(0.0019495, abs=1e-7)


class TestFindCrossing:
    def test_reports_bracket(self):
        rep = S.find_crossing(lambda t: t, lambda t: np.full_like(t, 0.5), (0, 1))
        assert rep.count == 1
        lo, hi = rep.intervals[0]
        assert lo <= 0.5 <= hi
        assert hi - lo <= 1e-9

    def test_no_crossing_json(self):
        rep = S.find_crossing(lambda t: t + 1, lambda t: t, (0, 1))
        assert rep.to_json() == {"crossings": [], "signs": [1], "no_crossing": True, "uniform_sign": 1}

    def test_band_hides_noise(self):
        rep = S.find_crossing(lambda t: 1e-4 * np.sin(50 * t), lambda t: 0 * t, (0, 1), tol=1e-3)
        assert rep.count == 0
        assert rep.uniform_sign == 0

    def test_range(self):
        with pytest.raises(DomainError):
            S.find_crossing(np.sin, np.cos, (1, 0))


class TestStudy:
    def test_dkw_band(self, theta0_study):
        dkw = theta0_study.dkw
        assert dkw["epsilon"] == pytest.approx(0.0019495, abs=1e-7)
        assert all(dkw["within"].values())

    def test_empirical_crossing_overlaps_exact(self, theta0_study):
        emp = theta0_study.crossings["JS_vs_MLE"]
        exact = theta0_study.exact_crossings["JS_vs_MLE"]
        assert emp.count >= 1
        (x_lo, x_hi), = exact.intervals
        assert any(lo <= x_hi and x_lo <= hi for lo, hi in emp.intervals)

    def test_verdicts(self, theta0_study):
        assert theta0_study.verdicts["JS_vs_MLE"].relation is Relation.INCOMPARABLE
        assert theta0_study.verdicts["JSPP_vs_MLE"].relation is not Relation.SECOND_DOMINATES

    def test_report_json(self, theta0_study):
        out = theta0_study.to_json()
        assert set(out) >= {"config", "means", "std_errors", "histogram", "crossings", "verdicts", "exact_crossings", "dkw"}
        assert len(out["histogram"]["counts"]["MLE"]) == S.HIST_BINS + 2

    def test_nonzero_theta_has_no_oracle(self):
        rep = S.study(S.SteinConfig(theta=(1, 0, 0), draws=1000, seed=0))
        assert rep.dkw is None
        assert rep.exact_crossings == {}
