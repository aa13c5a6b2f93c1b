import math

import numpy as np
import pytest

from hfreturns.distributions import (
    GaussianParams,
    GHParams,
    NIGParams,
    SkewTParams,
    StableParams,
    family_logpdf,
    family_sample,
)
from hfreturns.estimation import (
    N_PARAMS,
    FitResult,
    LrtResult,
    NumericalFitError,
    _from_theta,
    _to_theta,
    embed_in_gh,
    fit_gh_over,
    log_likelihood,
    lr_p_value,
    lr_test,
    mle_fit,
    stable_quantile_init,
)

NIG_TRUTH = NIGParams(0.65, -0.01, 0.64, 0.01)
STABLE_TRUTH = StableParams(1.54, 0.01, 0.48, 0.007)


def _fit(family, params, n, seed, **kw):
    return mle_fit(family, family_sample(params, n, seed), **kw)


class TestReparameterization:
    @pytest.mark.parametrize(
        "p",
        [
            StableParams(1.3, -0.4, 0.7, 0.2),
            NIGParams(2.0, 0.5, 0.3, -1.0),
            GHParams(1.5, 2.0, -1.2, 0.8, 0.1),
            SkewTParams(3.5, 0.6, 1.1, 0.0),
            GaussianParams(0.4, 2.0),
        ],
    )
    def test_round_trip(self, p):
        q = _from_theta(p.family, _to_theta(p))
        assert np.allclose(_to_theta(q), _to_theta(p), rtol=1e-12, atol=1e-12)

    @pytest.mark.parametrize("family", ["stable", "nig", "gh", "skewt"])
    def test_any_theta_is_valid(self, family):
        rng = np.random.default_rng(0)
        k = N_PARAMS[family]
        for _ in range(200):
            p = _from_theta(family, rng.normal(scale=1e3, size=k))
            assert p.family == family  # construction validates the region

    def test_alpha_snap(self):
        th = _to_theta(StableParams(1.00005, 0.3, 1.0, 0.0))
        assert _from_theta("stable", th).alpha == 1.0


class TestGaussian:
    def test_closed_form(self):
        x = np.random.default_rng(3).standard_t(5, size=5000) * 1.7 + 0.3
        r = mle_fit("gaussian", x)
        assert r.params.mu == pytest.approx(x.mean(), abs=1e-9)
        assert r.params.sigma**2 == pytest.approx(x.var(ddof=0), abs=1e-9)
        assert r.converged and r.n == 5000


class TestMleFit:
    def test_needs_50(self):
        with pytest.raises(ValueError):
            mle_fit("nig", np.zeros(49))

    def test_init_family_mismatch(self):
        with pytest.raises(ValueError):
            mle_fit("nig", np.random.default_rng(0).normal(size=100), SkewTParams(3, 0, 1, 0))

    def test_nonfinite_init(self):
        x = np.random.default_rng(0).normal(size=200)
        x[0] = 1e308
        # a Gaussian-tailed GH seed cannot evaluate a point this far out
        with pytest.raises(NumericalFitError, match="initial parameters"):
            mle_fit("nig", x, NIGParams(1e300, 0.0, 1e-300, 0.0))

    def test_iteration_cap_is_not_an_exception(self):
        r = _fit("nig", NIG_TRUTH, 3000, 1, maxiter=3)
        assert isinstance(r, FitResult)
        assert not r.converged

    @pytest.mark.parametrize("family", ["nig", "skewt", "gh", "stable"])
    def test_never_worse_than_init(self, family):
        truth = {"nig": NIG_TRUTH, "skewt": SkewTParams(2.7, -0.01, 0.96, 0.01),
                 "gh": GHParams(-0.54, 0.63, -0.01, 0.65, 0.01), "stable": STABLE_TRUTH}[family]
        x = family_sample(truth, 3000, 5)
        r = mle_fit(family, x)
        assert r.log_likelihood >= log_likelihood(r.init_params, x) - 1e-9
        assert r.log_likelihood == pytest.approx(log_likelihood(r.params, x), rel=1e-14)

    def test_local_optimality(self):
        x = family_sample(NIG_TRUTH, 5000, 11)
        r = mle_fit("nig", x)
        assert r.converged
        th = _to_theta(r.params)
        rng = np.random.default_rng(12)
        for _ in range(100):
            d = rng.normal(size=th.size)
            q = _from_theta("nig", th + 1e-3 * d / np.linalg.norm(d))
            assert r.log_likelihood >= log_likelihood(q, x)

    @pytest.mark.parametrize(
        "family, truth",
        [
            ("nig", NIGParams(1.2, 0.3, 0.8, 0.1)),
            ("skewt", SkewTParams(3.0, 0.4, 1.0, 0.0)),
            ("stable", StableParams(1.6, 0.2, 1.0, 0.0)),
        ],
    )
    def test_location_scale_equivariance(self, family, truth):
        x = family_sample(truth, 5000, 21)
        a, b = 2.5, -1.3
        r1 = mle_fit(family, x)
        r2 = mle_fit(family, a * x + b)
        p1, p2 = r1.params, r2.params
        assert p2.mu == pytest.approx(a * p1.mu + b, abs=1e-4 * a)
        assert p2.delta == pytest.approx(a * p1.delta, rel=1e-4)
        if family == "stable":
            assert p2.alpha == pytest.approx(p1.alpha, abs=1e-4)
            assert p2.beta == pytest.approx(p1.beta, abs=1e-4)
        else:
            assert p2.beta == pytest.approx(p1.beta / a, rel=1e-4, abs=1e-6)
        if family == "nig":
            assert p2.alpha == pytest.approx(p1.alpha / a, rel=1e-4)
        if family == "skewt":
            assert p2.nu == pytest.approx(p1.nu, rel=1e-4)

    def test_to_dict(self):
        r = _fit("nig", NIG_TRUTH, 500, 2)
        d = r.to_dict()
        assert set(d) == {"family", "params", "loglik", "n", "converged", "iterations"}
        assert set(d["params"]) == {"alpha", "beta", "delta", "mu"}

    @pytest.mark.slow
    def test_nig_recovery_bootstrap(self):
        n = 200_000
        x = family_sample(NIG_TRUTH, n, 2024)
        r = mle_fit("nig", x)
        # parametric bootstrap standard errors around the fit
        boot = np.array([
            [q.alpha, q.beta, q.delta, q.mu]
            for q in (mle_fit("nig", family_sample(r.params, n, 5000 + b), r.params).params for b in range(20))
        ])
        se = boot.std(axis=0, ddof=1)
        est = np.array([r.params.alpha, r.params.beta, r.params.delta, r.params.mu])
        truth = np.array([NIG_TRUTH.alpha, NIG_TRUTH.beta, NIG_TRUTH.delta, NIG_TRUTH.mu])
        assert np.all(np.abs(est - truth) <= 3 * se), (est, truth, se)

    @pytest.mark.slow
    def test_stable_alpha_recovery(self):
        r = _fit("stable", STABLE_TRUTH, 200_000, 2025)
        assert abs(r.params.alpha - STABLE_TRUTH.alpha) <= 0.02


class TestQuantileInit:
    def test_gaussian_edge(self):
        x = np.random.default_rng(4).normal(scale=math.sqrt(2), size=200_000)
        p = stable_quantile_init(x)
        assert p.alpha >= 1.95 and abs(p.beta) <= 0.05

    def test_symmetric_gives_zero_beta(self):
        x = np.random.default_rng(5).standard_t(2, size=5001)
        p = stable_quantile_init(np.concatenate([x, -x]))
        assert p.beta == 0.0

    def test_cauchy(self):
        x = np.random.default_rng(6).standard_cauchy(200_000)
        p = stable_quantile_init(x)
        assert p.alpha == pytest.approx(1.0, abs=0.05)
        assert p.delta == pytest.approx(1.0, abs=0.05)

    @pytest.mark.parametrize("alpha, beta", [(1.5, 0.0), (1.2, 0.5), (1.8, -0.6), (0.8, 0.3)])
    def test_recovers_stable_truth(self, alpha, beta):
        p = stable_quantile_init(family_sample(StableParams(alpha, beta, 1.0, 0.0), 100_000, 7))
        assert p.alpha == pytest.approx(alpha, abs=0.06)
        assert p.beta == pytest.approx(beta, abs=0.15)
        assert p.delta == pytest.approx(1.0, rel=0.05)

    def test_zero_iqr(self):
        with pytest.raises(ValueError):
            stable_quantile_init(np.r_[np.zeros(200), 1.0])

    def test_too_few(self):
        with pytest.raises(ValueError):
            stable_quantile_init(np.arange(99.0))

    def test_output_always_valid(self):
        rng = np.random.default_rng(8)
        for _ in range(50):
            x = rng.standard_t(rng.uniform(0.3, 30), size=500) * rng.uniform(0.1, 10)
            stable_quantile_init(x)  # StableParams validates its region


def _fake(family, ll, n=1000):
    return FitResult(family, None, ll, n, 1, True, True, None)


class TestLrTest:
    def test_table_value(self):
        assert lr_p_value(5.49, 1) == pytest.approx(0.0191, abs=5e-5)

    def test_underflow_display(self):
        r = LrtResult(4551.78, 1, lr_p_value(4551.78, 1))
        assert r.p_value < 1e-16 and r.p_display == "<1e-16"

    def test_identical(self):
        r = lr_test(_fake("gh", -10.0), _fake("nig", -10.0))
        assert (r.statistic, r.df, r.p_value) == (0.0, 1, 1.0)

    def test_tiny_negative_clamped(self):
        assert lr_test(_fake("gh", -10.0 - 1e-8), _fake("skewt", -10.0)).statistic == 0.0

    def test_statistic(self):
        r = lr_test(_fake("gh", -100.0), _fake("nig", -102.745))
        assert r.statistic == pytest.approx(5.49)
        assert r.to_dict()["p_display"] == f"{r.p_value:.4g}"

    def test_mismatched_n(self):
        with pytest.raises(ValueError):
            lr_test(_fake("gh", 0.0, 10), _fake("nig", 0.0, 11))

    def test_full_below_nested(self):
        with pytest.raises(NumericalFitError):
            lr_test(_fake("gh", -10.0), _fake("nig", -9.0))

    def test_not_nested(self):
        with pytest.raises(ValueError):
            lr_test(_fake("nig", 0.0), _fake("skewt", 0.0))


class TestNesting:
    def test_nig_embedding_is_exact(self):
        p = NIGParams(1.3, -0.2, 0.7, 0.05)
        x = np.linspace(-20, 20, 101)
        assert np.allclose(family_logpdf(embed_in_gh(p), x), family_logpdf(p, x), rtol=0, atol=1e-12)

    def test_skewt_embedding_is_close(self):
        p = SkewTParams(2.7, -0.3, 0.96, 0.01)
        x = np.linspace(-15, 15, 61)
        d = family_logpdf(embed_in_gh(p), x) - family_logpdf(p, x)
        assert np.max(np.abs(d)) < 0.05

    def test_not_nested(self):
        with pytest.raises(ValueError):
            embed_in_gh(STABLE_TRUTH)

    def test_gh_over_dominates_nested(self):
        x = family_sample(NIG_TRUTH, 5000, 31)
        nig = mle_fit("nig", x)
        st = mle_fit("skewt", x)
        gh = fit_gh_over([nig, st], x)
        assert gh.log_likelihood >= max(nig.log_likelihood, st.log_likelihood) - 1e-6
        lr_test(gh, nig)
        lr_test(gh, st)

    def test_lrt_invariant_to_standardization(self):
        x = family_sample(NIG_TRUTH, 5000, 41)
        z = (x - x.mean()) / x.std(ddof=1)
        stats_ = []
        for data in (x, z):
            nig = mle_fit("nig", data)
            stats_.append(lr_test(fit_gh_over([nig], data), nig).statistic)
        assert stats_[0] == pytest.approx(stats_[1], abs=1e-6)
