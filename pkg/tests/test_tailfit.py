import logging
import math

import numpy as np
import pytest

from hfreturns.ingest import ReturnSeries, standardize
from hfreturns.tailfit import (
    ParetoParams,
    TailFitReport,
    alpha_mle,
    empirical_ccdf,
    tail_fit,
    tail_values,
    write_ccdf_csv,
    xmin_scan,
)


def spliced(n_body, n_tail, alpha, x_min, seed):
    """Lognormal body truncated below ``x_min`` with a Pareto tail above it."""
    rng = np.random.default_rng(seed)
    body = rng.lognormal(0.0, 1.0, size=3 * n_body)
    body = body[body < x_min][:n_body]
    tail = ParetoParams(alpha, x_min).sample(n_tail, rng)
    return np.concatenate([body, tail])


class TestPareto:
    def test_cdf(self):
        p = ParetoParams(3.0, 2.0)
        assert p.cdf(2.0) == 0.0 and p.cdf(1.0) == 0.0
        assert p.cdf(4.0) == pytest.approx(1 - 0.25, rel=1e-15)

    def test_sample_matches_cdf(self):
        p = ParetoParams(4.6, 7.76)
        x = np.sort(p.sample(20_000, 1))
        assert x.min() >= 7.76
        emp = np.arange(1, x.size + 1) / x.size
        assert np.max(np.abs(emp - p.cdf(x))) < 1.628 / math.sqrt(x.size)

    @pytest.mark.parametrize("a, x", [(1.0, 1.0), (2.0, 0.0)])
    def test_invalid(self, a, x):
        with pytest.raises(ValueError):
            ParetoParams(a, x)


class TestAlphaMle:
    def test_single_point(self):
        a, se = alpha_mle([math.e * 3.0], 3.0)
        assert a == pytest.approx(2.0, rel=1e-15)
        assert se == pytest.approx(1.0, rel=1e-15)

    def test_recovery(self):
        x = ParetoParams(4.6, 7.76).sample(100_000, 2)
        a, se = alpha_mle(x, 7.76)
        assert a == pytest.approx(4.6, abs=0.04)
        assert se == pytest.approx(3.6 / math.sqrt(1e5), rel=0.02)

    def test_degenerate(self):
        with pytest.raises(ValueError, match="equal x_min"):
            alpha_mle([2.0, 2.0, 2.0], 2.0)

    @pytest.mark.parametrize("data, xm", [([], 1.0), ([0.5, 2.0], 1.0), ([2.0], 0.0)])
    def test_invalid(self, data, xm):
        with pytest.raises(ValueError):
            alpha_mle(data, xm)

    def test_permutation_invariant(self):
        x = ParetoParams(3.0, 1.0).sample(1000, 3)
        perm = np.random.default_rng(4).permutation(x)
        assert alpha_mle(perm, 1.0)[0] == pytest.approx(alpha_mle(x, 1.0)[0], rel=1e-13)


class TestXminScan:
    def test_pure_pareto(self):
        x = ParetoParams(3.0, 1.0).sample(100_000, 5)
        r = xmin_scan(x, exhaustive=True)
        assert r.x_min <= 1.2
        assert r.alpha == pytest.approx(3.0, abs=0.05)

    def test_splice(self):
        hits = 0
        for seed in range(100):
            r = xmin_scan(spliced(8000, 2000, 3.5, 5.0, seed))
            hits += 4.0 <= r.x_min <= 6.5
        assert hits >= 90

    def test_too_few_above_candidates(self):
        with pytest.raises(ValueError):
            xmin_scan(np.arange(1.0, 41.0), n_tail_min=50)

    def test_needs_100(self):
        with pytest.raises(ValueError, match="100"):
            xmin_scan(np.arange(1.0, 100.0))

    def test_positive_only(self):
        with pytest.raises(ValueError, match="positive"):
            xmin_scan(np.linspace(-1, 1, 200))

    def test_explicit_candidates(self):
        x = spliced(800, 200, 3.0, 5.0, 6)
        r = xmin_scan(x, candidates=[1.0, 5.0, 8.0])
        assert {c for c, _, _ in r.scan} <= set(np.sort(x).tolist())
        with pytest.raises(ValueError):
            xmin_scan(x, candidates=[1e9])

    def test_selected_is_scan_minimum(self):
        r = xmin_scan(spliced(8000, 2000, 3.5, 5.0, 7))
        ks = [k for _, _, k in r.scan]
        assert r.ks_at_xmin == min(ks)
        assert r.x_min == r.scan[ks.index(min(ks))][0]  # first minimum, smallest x_min
        assert r.n_tail >= 50 and r.alpha > 1

    def test_scan_matches_direct_fit(self):
        x = spliced(800, 200, 3.0, 5.0, 8)
        r = xmin_scan(x)
        y = np.sort(x)
        for c, a, k in r.scan[::25]:
            tail = y[y >= c]
            a_direct, _ = alpha_mle(tail, c)
            assert a == pytest.approx(a_direct, rel=1e-10)
            f = ParetoParams(a_direct, c).cdf(tail)
            i = np.arange(1, tail.size + 1)
            d = max(np.max(i / tail.size - f), np.max(f - (i - 1) / tail.size))
            assert k == pytest.approx(d, rel=1e-9, abs=1e-14)

    def test_thinning(self):
        x = spliced(8000, 2000, 3.5, 5.0, 9)
        assert len(xmin_scan(x, max_candidates=100).scan) <= 100
        assert len(xmin_scan(x, max_candidates=None).scan) > 2000

    @pytest.mark.parametrize("c", [2.0, 3.7])
    def test_scale_equivariance(self, c):
        x = spliced(8000, 2000, 3.5, 5.0, 10)
        r1, r2 = xmin_scan(x), xmin_scan(c * x)
        assert r2.x_min == pytest.approx(c * r1.x_min, rel=1e-12)
        assert r2.alpha == pytest.approx(r1.alpha, abs=1e-6)
        assert r2.n_tail == r1.n_tail

    def test_coverage(self):
        hits = 0
        for seed in range(100):
            r = xmin_scan(spliced(8000, 2000, 3.0, 5.0, 100 + seed))
            hits += abs(r.alpha - 3.0) <= 3 * (r.alpha - 1) / math.sqrt(r.n_tail)
        assert hits >= 95


def _mixture(seed, n_body=100_000, n_tail=10_000):
    rng = np.random.default_rng(seed)
    body = rng.normal(size=n_body)
    right = ParetoParams(4.6, 7.76).sample(n_tail, rng)
    left = -ParetoParams(4.28, 6.70).sample(n_tail, rng)
    return np.concatenate([body, right, left])


class TestTailFit:
    def test_symmetric_data(self):
        x = np.random.default_rng(11).standard_t(3, size=5000)
        s = ReturnSeries.from_values(np.concatenate([x, -x]))
        left, right = tail_fit(s, "left"), tail_fit(s, "right")
        assert (left.alpha, left.x_min, left.n_tail, left.scan) == (right.alpha, right.x_min, right.n_tail, right.scan)
        assert (left.side, right.side) == ("left", "right")

    def test_mixture_recovery(self):
        x = _mixture(12)
        assert tail_fit(x, "right").alpha == pytest.approx(4.6, abs=0.15)
        assert tail_fit(x, "left").alpha == pytest.approx(4.28, abs=0.15)

    def test_empty_left_tail(self):
        with pytest.raises(ValueError, match="empty"):
            tail_fit(np.abs(np.random.default_rng(0).normal(size=500)), "left")

    def test_bad_side(self):
        with pytest.raises(ValueError):
            tail_values([1.0, -1.0], "up")

    def test_warns_when_not_standardized(self, caplog):
        x = np.random.default_rng(13).standard_t(3, size=2000) * 5 + 1
        with caplog.at_level(logging.WARNING):
            tail_fit(ReturnSeries.from_values(x), "right")
        assert "not standardized" in caplog.text
        caplog.clear()
        with caplog.at_level(logging.WARNING):
            tail_fit(standardize(ReturnSeries.from_values(x)), "right")
        assert "not standardized" not in caplog.text

    def test_report_dict(self):
        r = tail_fit(_mixture(14, 20_000, 2000), "right")
        assert isinstance(r, TailFitReport)
        d = r.to_dict()
        assert {"side", "alpha", "alpha_se", "x_min", "n_tail", "ks_at_xmin", "scan"} <= set(d)
        assert "scan" not in r.to_dict(include_scan=False)


class TestCcdf:
    def test_values(self):
        x, p = empirical_ccdf([3.0, 1.0, 2.0, 2.0])
        assert list(x) == [1.0, 2.0, 3.0]
        assert list(p) == [1.0, 0.75, 0.25]

    def test_csv(self, tmp_path):
        path = tmp_path / "c.csv"
        write_ccdf_csv(path, [0.5, 2.0])
        assert path.read_text().splitlines() == ["x,ccdf", "0.5,1.0", "2.0,0.5"]
