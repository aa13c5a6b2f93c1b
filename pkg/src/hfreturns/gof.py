"""Goodness-of-fit statistics, asymptotic critical points and bootstrap p-values."""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import stats

from .distributions import FamilyParams, family_cdf, family_sample

log = logging.getLogger(__name__)

__all__ = [
    "ADBoundaryError",
    "GofReport",
    "LEVELS",
    "ks_stat",
    "ad_stat",
    "cvm_stat",
    "chi2_test",
    "ks_critical",
    "critical_points",
    "gof_report",
    "bootstrap_pvalue",
]

LEVELS = (0.05, 0.01)

_KS_C = {0.05: 1.358, 0.01: 1.628}
_CVM_CRIT = {0.05: 0.4614, 0.01: 0.7435}
_AD_CRIT = {0.05: 2.492, 0.01: 3.878}

# F values within AD_WARN of 0 or 1 trigger a warning and are clipped to
# [AD_CLAMP, 1 - AD_CLAMP] for the AD logarithms; exact 0 or 1 is an error
AD_WARN = 1e-12
AD_CLAMP = 1e-15

Cdf = Callable[[np.ndarray], np.ndarray]


class ADBoundaryError(ArithmeticError):
    """A model CDF value equals 0 or 1 exactly, so the AD statistic is infinite."""

    def __init__(self, index: int, value: float):
        super().__init__(
            f"model CDF is {value!r} at sorted observation {index}; "
            "Anderson-Darling logarithm is infinite (tail underflow)"
        )
        self.index = index


def _sorted_cdf_values(data, cdf: Cdf) -> np.ndarray:
    x = np.asarray(data, dtype=float)
    if x.ndim != 1 or x.size == 0:
        raise ValueError("data must be a non-empty 1-d sequence")
    if np.any(np.diff(x) < 0):
        raise ValueError("data must be sorted ascending")
    f = np.asarray(cdf(x), dtype=float)
    if f.shape != x.shape or np.any(~np.isfinite(f)) or f.min() < 0 or f.max() > 1:
        raise ValueError("cdf must return values in [0, 1] for every observation")
    return f


def _ks_from_f(f: np.ndarray) -> float:
    n = f.size
    i = np.arange(1, n + 1)
    return float(max(np.max(i / n - f), np.max(f - (i - 1) / n)))


def _cvm_from_f(f: np.ndarray) -> float:
    n = f.size
    mid = (2.0 * np.arange(1, n + 1) - 1.0) / (2.0 * n)
    return float(np.sum((f - mid) ** 2) + 1.0 / (12.0 * n))


def _ad_from_f(f: np.ndarray) -> float:
    n = f.size
    hit = np.flatnonzero((f <= 0.0) | (f >= 1.0))
    if hit.size:
        raise ADBoundaryError(int(hit[0]), float(f[hit[0]]))
    near = (f < AD_WARN) | (f > 1.0 - AD_WARN)
    if np.any(near):
        log.warning(
            "%d CDF values within %g of 0 or 1; clamping to [%g, 1 - %g]",
            int(near.sum()), AD_WARN, AD_CLAMP, AD_CLAMP,
        )
        f = np.clip(f, AD_CLAMP, 1.0 - AD_CLAMP)
    w = 2.0 * np.arange(1, n + 1) - 1.0
    s = np.sum(w * (np.log(f) + np.log1p(-f[::-1])))
    return float(-n - s / n)


def ks_stat(data, cdf: Cdf) -> float:
    """Kolmogorov-Smirnov distance between sorted ``data`` and ``cdf``."""
    return _ks_from_f(_sorted_cdf_values(data, cdf))


def ad_stat(data, cdf: Cdf) -> float:
    """Anderson-Darling ``A^2`` of sorted ``data`` against ``cdf``.

    Raises
    ------
    ADBoundaryError
        If ``cdf`` is exactly 0 or 1 at some observation.
    """
    return _ad_from_f(_sorted_cdf_values(data, cdf))


def cvm_stat(data, cdf: Cdf) -> float:
    """Cramer-von Mises ``W^2`` of sorted ``data`` against ``cdf``."""
    return _cvm_from_f(_sorted_cdf_values(data, cdf))


def _chi2_from_f(f: np.ndarray, n_bins: int) -> tuple[float, int, np.ndarray]:
    n = f.size
    # under the model, bin k of the equiprobable partition is F in [k/K, (k+1)/K)
    idx = np.minimum((f * n_bins).astype(np.int64), n_bins - 1)
    counts = np.bincount(idx, minlength=n_bins)
    expected = n / n_bins
    stat = float(np.sum((counts - expected) ** 2) / expected)
    return stat, n_bins - 1, counts


def chi2_test(data, model_cdf: Cdf, n_bins: int = 199) -> tuple[float, int]:
    """Pearson chi-square against ``n_bins`` bins equiprobable under the model.

    Returns ``(statistic, df)`` with ``df = n_bins - 1`` (no correction for
    estimated parameters).
    """
    if n_bins < 3:
        raise ValueError("n_bins must be at least 3")
    x = np.sort(np.asarray(data, dtype=float))
    if x.size < 5 * n_bins:
        raise ValueError(f"chi2_test needs n >= 5 * n_bins = {5 * n_bins}, got {x.size}")
    f = _sorted_cdf_values(x, model_cdf)
    if f[-1] - f[0] <= 0:
        raise ValueError("model assigns no probability to the range of the data")
    stat, df, _ = _chi2_from_f(f, n_bins)
    return stat, df


def ks_critical(n: int, level: float) -> float:
    """Asymptotic KS critical value ``c(level) / sqrt(n)``."""
    if level not in _KS_C:
        raise ValueError(f"unsupported level {level}; choose from {sorted(_KS_C)}")
    if n < 35:
        raise ValueError("asymptotic KS critical values need n >= 35")
    return _KS_C[level] / math.sqrt(n)


def critical_points(n: int, n_bins: int = 199, levels=LEVELS) -> dict:
    """Critical values per test and level (keys are level strings like ``"0.05"``)."""
    out: dict = {"chi2": {}, "ks": {}, "ad": {}, "cvm": {}}
    for lv in levels:
        key = f"{lv:g}"
        out["chi2"][key] = float(stats.chi2.isf(lv, n_bins - 1))
        out["ks"][key] = ks_critical(n, lv)
        out["ad"][key] = _AD_CRIT[lv]
        out["cvm"][key] = _CVM_CRIT[lv]
    return out


@dataclass(frozen=True)
class GofReport:
    family: str
    n: int
    chi2: dict
    ks: float
    ad: float | None
    cvm: float
    critical_points: dict
    decisions: dict = field(default_factory=dict)
    notes: list = field(default_factory=list)

    def statistic(self, test: str) -> float | None:
        return self.chi2.get("statistic") if test == "chi2" else getattr(self, test)

    def to_dict(self) -> dict:
        return {
            "family": self.family,
            "n": self.n,
            "statistics": {
                "chi2": self.chi2,
                "ks": self.ks,
                "ad": self.ad,
                "cvm": self.cvm,
            },
            "critical_points": self.critical_points,
            "decisions": self.decisions,
            "notes": list(self.notes),
        }


def gof_report(
    data,
    cdf: Cdf | FamilyParams,
    *,
    family: str | None = None,
    n_bins: int = 199,
    levels=LEVELS,
) -> GofReport:
    """All four statistics, critical points and reject/accept decisions.

    ``cdf`` is either a callback or a family parameter set. An AD failure
    (CDF exactly 0 or 1 in the tails) is recorded as ``ad = None`` with a
    note instead of aborting the report.
    """
    if not callable(cdf):
        family = family or cdf.family
        params = cdf
        cdf = lambda x: family_cdf(params, x)  # noqa: E731
    x = np.sort(np.asarray(getattr(data, "values", data), dtype=float))
    n = x.size
    if n < 35:
        raise ValueError("gof_report needs at least 35 observations")
    f = _sorted_cdf_values(x, cdf)
    notes = []
    chi2 = None
    if n >= 5 * n_bins:
        s, df, _ = _chi2_from_f(f, n_bins)
        chi2 = {"statistic": s, "df": df, "bins": n_bins}
    else:
        notes.append(f"chi2 skipped: n < 5 * {n_bins}")
    try:
        ad = _ad_from_f(f)
    except ADBoundaryError as exc:
        ad = None
        notes.append(str(exc))
    ks = _ks_from_f(f)
    cvm = _cvm_from_f(f)
    crit = critical_points(n, n_bins, levels)
    decisions: dict = {}
    values = {"chi2": chi2["statistic"] if chi2 else None, "ks": ks, "ad": ad, "cvm": cvm}
    for test, stat in values.items():
        decisions[test] = {
            k: (None if stat is None else ("reject" if stat > c else "accept"))
            for k, c in crit[test].items()
        }
    return GofReport(family or "custom", n, chi2 or {}, ks, ad, cvm, crit, decisions, notes)


# ---------------------------------------------------------------------------
# parametric bootstrap
# ---------------------------------------------------------------------------


def _statistic(name: str, sorted_x: np.ndarray, cdf: Cdf, n_bins: int) -> float:
    f = _sorted_cdf_values(sorted_x, cdf)
    if name == "ks":
        return _ks_from_f(f)
    if name == "ad":
        return _ad_from_f(f)
    if name == "cvm":
        return _cvm_from_f(f)
    if name == "chi2":
        return _chi2_from_f(f, n_bins)[0]
    raise ValueError(f"unknown statistic {name!r}")


def _fit_and_cdf(family: str, x: np.ndarray, init):
    """Refit ``family`` to ``x`` and return (fitted params, cdf callback)."""
    if family == "pareto":
        from .tailfit import ParetoParams, alpha_mle

        a, _ = alpha_mle(x, init.x_min)
        p = ParetoParams(a, init.x_min)
        return p, p.cdf
    from .estimation import mle_fit

    p = mle_fit(family, x, init).params
    return p, lambda v: family_cdf(p, v)


def _sample(family: str, params, n: int, seed: int) -> np.ndarray:
    if family == "pareto":
        return params.sample(n, seed)
    return family_sample(params, n, seed)


def bootstrap_pvalue(
    data,
    family: str,
    fitted,
    B: int = 199,
    statistic: str = "ks",
    seed: int = 0,
    *,
    n_bins: int = 199,
    max_failure_rate: float = 0.05,
    workers: int = 1,
) -> float:
    """Parametric-bootstrap p-value for ``statistic`` with refitting.

    Replicate ``b`` is simulated from ``fitted`` with seed ``seed + b`` and
    refitted starting at ``fitted``. ``p = (1 + #{T_b >= T_obs}) / (B + 1)``.
    ``family="pareto"`` takes a :class:`~hfreturns.tailfit.ParetoParams` and
    refits the exponent at its fixed ``x_min``. ``workers`` only changes
    scheduling; replicate seeds make the result independent of it.
    """
    if B < 99:
        raise ValueError("bootstrap_pvalue needs B >= 99")
    if statistic not in ("ks", "ad", "cvm", "chi2"):
        raise ValueError(f"unknown statistic {statistic!r}")
    x = np.sort(np.asarray(getattr(data, "values", data), dtype=float))
    n = x.size
    if family == "pareto":
        t_obs = _statistic(statistic, x, fitted.cdf, n_bins)
    else:
        t_obs = _statistic(statistic, x, lambda v: family_cdf(fitted, v), n_bins)
    def replicate(b: int):
        xb = np.sort(_sample(family, fitted, n, seed + b))
        try:
            _, cdf_b = _fit_and_cdf(family, xb, fitted)
            return _statistic(statistic, xb, cdf_b, n_bins), None
        except (ArithmeticError, ValueError) as exc:
            return None, exc

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(replicate, range(B)))
    else:
        results = [replicate(b) for b in range(B)]
    failed = [(b, exc) for b, (_, exc) in enumerate(results) if exc is not None]
    for b, exc in failed:
        log.warning("bootstrap replicate %d failed: %s", b, exc)
    if len(failed) > max_failure_rate * B:
        raise ArithmeticError(
            f"{len(failed)} of {B} bootstrap refits failed (limit {max_failure_rate:.0%})"
        )
    exceed = sum(1 for t, _ in results if t is not None and t >= t_obs)
    return (1 + exceed) / (B + 1)
