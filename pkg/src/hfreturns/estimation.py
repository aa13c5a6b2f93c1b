"""Maximum-likelihood fitting, quantile initialization and likelihood-ratio tests."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy import optimize, stats
from scipy.interpolate import RegularGridInterpolator

from .distributions import (
    FamilyParams,
    GaussianParams,
    GHParams,
    NIGParams,
    SkewTParams,
    StableParams,
    family_logpdf,
    params_to_dict,
)

log = logging.getLogger(__name__)

__all__ = [
    "FitResult",
    "LrtResult",
    "NumericalFitError",
    "N_PARAMS",
    "log_likelihood",
    "mle_fit",
    "stable_quantile_init",
    "lr_test",
    "lr_p_value",
    "embed_in_gh",
    "mle_fit_multistart",
    "fit_gh_over",
]

N_PARAMS = {"stable": 4, "gh": 5, "nig": 4, "skewt": 4, "gaussian": 2}

# stable alpha is kept inside (ALPHA_LO, 2); below ALPHA_LO the FFT grid cannot
# resolve the characteristic function
ALPHA_LO = 0.3
ALPHA_SNAP = 1e-4


class NumericalFitError(ArithmeticError):
    """Raised when the likelihood cannot be evaluated at a starting point."""


@dataclass(frozen=True)
class FitResult:
    family: str
    params: FamilyParams
    log_likelihood: float
    n: int
    iterations: int
    converged: bool
    objective_tolerance_met: bool
    init_params: FamilyParams

    def to_dict(self) -> dict:
        p = params_to_dict(self.params)
        p.pop("family")
        return {
            "family": self.family,
            "params": p,
            "loglik": self.log_likelihood,
            "n": self.n,
            "converged": self.converged,
            "iterations": self.iterations,
        }


def _values(data) -> np.ndarray:
    return np.asarray(getattr(data, "values", data), dtype=float)


def log_likelihood(params: FamilyParams, data) -> float:
    """Sum of log-densities (numpy pairwise summation, fixed order)."""
    return float(np.sum(family_logpdf(params, _values(data))))


# ---------------------------------------------------------------------------
# unconstrained reparameterizations
# ---------------------------------------------------------------------------


def _logit(p):
    return math.log(p / (1.0 - p))


def _sigmoid(z):
    if z >= 0:
        return 1.0 / (1.0 + math.exp(-z))
    e = math.exp(z)
    return e / (1.0 + e)


def _atanh(x):
    x = min(max(x, -1 + 1e-15), 1 - 1e-15)
    return math.atanh(x)


def _to_theta(p: FamilyParams) -> np.ndarray:
    fam = p.family
    if fam == "stable":
        a = min(max((p.alpha - ALPHA_LO) / (2.0 - ALPHA_LO), 1e-9), 1 - 1e-9)
        return np.array([_logit(a), _atanh(p.beta), math.log(p.delta), p.mu])
    if fam == "nig":
        return np.array([math.log(p.alpha), _atanh(p.beta / p.alpha), math.log(p.delta), p.mu])
    if fam == "gh":
        return np.array(
            [p.lam, math.log(p.alpha), _atanh(p.beta / p.alpha), math.log(p.delta), p.mu]
        )
    if fam == "skewt":
        return np.array([math.log(p.nu), p.beta, math.log(p.delta), p.mu])
    if fam == "gaussian":
        return np.array([p.mu, math.log(p.sigma)])
    raise ValueError(f"unknown family {fam!r}")


# |tanh| rounds to exactly 1 beyond ~19; shrinking by a few ulps keeps
# |beta| < alpha strict for every finite theta
_RATIO_MAX = 1.0 - 2.0**-50


def _pos(z: float) -> float:
    return math.exp(min(max(z, -700.0), 700.0))


def _ratio(z: float) -> float:
    return _RATIO_MAX * math.tanh(z)


def _from_theta(fam: str, th) -> FamilyParams:
    th = [float(v) for v in th]
    if fam == "stable":
        alpha = ALPHA_LO + (2.0 - ALPHA_LO) * _sigmoid(th[0])
        if abs(alpha - 1.0) < ALPHA_SNAP:
            alpha = 1.0
        return StableParams(alpha, math.tanh(th[1]), _pos(th[2]), th[3])
    if fam == "nig":
        a = _pos(th[0])
        return NIGParams(a, a * _ratio(th[1]), _pos(th[2]), th[3])
    if fam == "gh":
        a = _pos(th[1])
        return GHParams(th[0], a, a * _ratio(th[2]), _pos(th[3]), th[4])
    if fam == "skewt":
        return SkewTParams(_pos(th[0]), th[1], _pos(th[2]), th[3])
    if fam == "gaussian":
        return GaussianParams(th[0], _pos(th[1]))
    raise ValueError(f"unknown family {fam!r}")


# ---------------------------------------------------------------------------
# McCulloch quantile estimator
# ---------------------------------------------------------------------------

# rows: nu_alpha, columns: nu_beta
_NU_ALPHA = np.array([2.439, 2.5, 2.6, 2.7, 2.8, 3.0, 3.2, 3.5, 4.0, 5.0, 6.0, 8.0, 10.0, 15.0, 25.0])
_NU_BETA = np.array([0.0, 0.1, 0.2, 0.3, 0.5, 0.7, 1.0])
_PSI_ALPHA = np.array([
    [2.000, 2.000, 2.000, 2.000, 2.000, 2.000, 2.000],
    [1.916, 1.924, 1.924, 1.924, 1.924, 1.924, 1.924],
    [1.808, 1.813, 1.829, 1.829, 1.829, 1.829, 1.829],
    [1.729, 1.730, 1.737, 1.745, 1.745, 1.745, 1.745],
    [1.664, 1.663, 1.663, 1.668, 1.676, 1.676, 1.676],
    [1.563, 1.560, 1.553, 1.548, 1.547, 1.547, 1.547],
    [1.484, 1.480, 1.471, 1.460, 1.448, 1.438, 1.438],
    [1.391, 1.386, 1.378, 1.364, 1.337, 1.318, 1.318],
    [1.279, 1.273, 1.266, 1.250, 1.210, 1.184, 1.150],
    [1.128, 1.121, 1.114, 1.101, 1.067, 1.027, 0.973],
    [1.029, 1.021, 1.014, 1.004, 0.974, 0.935, 0.874],
    [0.896, 0.892, 0.884, 0.883, 0.855, 0.823, 0.769],
    [0.818, 0.812, 0.806, 0.801, 0.780, 0.756, 0.691],
    [0.698, 0.695, 0.692, 0.689, 0.676, 0.656, 0.597],
    [0.593, 0.590, 0.588, 0.586, 0.579, 0.563, 0.513],
])
_PSI_BETA = np.array([
    [0.0, 2.160, 1.000, 1.000, 1.000, 1.000, 1.000],
    [0.0, 1.592, 3.390, 1.000, 1.000, 1.000, 1.000],
    [0.0, 0.759, 1.800, 1.000, 1.000, 1.000, 1.000],
    [0.0, 0.482, 1.048, 1.694, 1.000, 1.000, 1.000],
    [0.0, 0.360, 0.760, 1.232, 2.229, 1.000, 1.000],
    [0.0, 0.253, 0.518, 0.823, 1.575, 1.000, 1.000],
    [0.0, 0.203, 0.410, 0.632, 1.244, 1.906, 1.000],
    [0.0, 0.165, 0.332, 0.499, 0.943, 1.560, 1.000],
    [0.0, 0.136, 0.271, 0.404, 0.689, 1.230, 2.195],
    [0.0, 0.109, 0.216, 0.323, 0.539, 0.827, 1.917],
    [0.0, 0.096, 0.190, 0.284, 0.472, 0.693, 1.759],
    [0.0, 0.082, 0.163, 0.243, 0.412, 0.601, 1.596],
    [0.0, 0.074, 0.147, 0.220, 0.377, 0.546, 1.482],
    [0.0, 0.064, 0.128, 0.191, 0.330, 0.478, 1.362],
    [0.0, 0.056, 0.112, 0.167, 0.285, 0.428, 1.274],
])
# rows: alpha (ascending), columns: beta
_ALPHA_GRID = np.array([0.5, 0.6, 0.7, 0.8, 0.9, 1.0, 1.1, 1.2, 1.3, 1.4, 1.5, 1.6, 1.7, 1.8, 1.9, 2.0])
_BETA_GRID = np.array([0.0, 0.25, 0.5, 0.75, 1.0])
_PHI_SCALE = np.array([
    [2.588, 3.073, 4.534, 6.636, 9.144],
    [2.337, 2.634, 3.542, 4.808, 6.247],
    [2.189, 2.392, 3.004, 3.844, 4.775],
    [2.098, 2.244, 2.676, 3.265, 3.912],
    [2.040, 2.149, 2.461, 2.886, 3.356],
    [2.000, 2.085, 2.311, 2.624, 2.973],
    [1.980, 2.040, 2.205, 2.435, 2.696],
    [1.965, 2.007, 2.125, 2.294, 2.491],
    [1.955, 1.984, 2.067, 2.188, 2.333],
    [1.946, 1.967, 2.022, 2.106, 2.211],
    [1.939, 1.952, 1.988, 2.045, 2.116],
    [1.933, 1.940, 1.962, 1.997, 2.043],
    [1.927, 1.930, 1.943, 1.961, 1.987],
    [1.921, 1.922, 1.927, 1.936, 1.947],
    [1.914, 1.915, 1.916, 1.918, 1.921],
    [1.908, 1.908, 1.908, 1.908, 1.908],
])
_PHI_LOC = np.array([
    [0.0, -0.061, -0.279, -0.659, -1.198],
    [0.0, -0.078, -0.272, -0.581, -0.997],
    [0.0, -0.089, -0.262, -0.520, -0.853],
    [0.0, -0.096, -0.250, -0.469, -0.742],
    [0.0, -0.099, -0.237, -0.424, -0.652],
    [0.0, -0.098, -0.223, -0.380, -0.576],
    [0.0, -0.095, -0.208, -0.346, -0.508],
    [0.0, -0.090, -0.192, -0.310, -0.447],
    [0.0, -0.084, -0.173, -0.276, -0.390],
    [0.0, -0.075, -0.154, -0.241, -0.335],
    [0.0, -0.066, -0.134, -0.206, -0.283],
    [0.0, -0.056, -0.111, -0.170, -0.232],
    [0.0, -0.043, -0.088, -0.132, -0.179],
    [0.0, -0.030, -0.061, -0.092, -0.123],
    [0.0, -0.017, -0.032, -0.049, -0.064],
    [0.0, 0.000, 0.000, 0.000, 0.000],
])

_psi_alpha = RegularGridInterpolator((_NU_ALPHA, _NU_BETA), _PSI_ALPHA)
_psi_beta = RegularGridInterpolator((_NU_ALPHA, _NU_BETA), _PSI_BETA)
_phi_scale = RegularGridInterpolator((_ALPHA_GRID, _BETA_GRID), _PHI_SCALE)
_phi_loc = RegularGridInterpolator((_ALPHA_GRID, _BETA_GRID), _PHI_LOC)


def stable_quantile_init(data) -> StableParams:
    """Quantile-matching stable estimate from the 5/25/50/75/95% quantiles.

    Table lookup with bilinear interpolation; inputs outside the tables are
    clipped to their edges, so the result is always a valid parameter set.
    """
    x = _values(data)
    if x.size < 100:
        raise ValueError("stable_quantile_init needs at least 100 observations")
    # upper quantiles taken as reflections so symmetric samples give beta = 0 exactly
    q05, q25, q50 = np.quantile(x, [0.05, 0.25, 0.5])
    q95, q75 = -np.quantile(-x, [0.05, 0.25])
    if not q75 > q25:
        raise ValueError("interquartile range is zero; quantile estimator undefined")
    nu_a = (q95 - q05) / (q75 - q25)
    nu_b = (q95 + q05 - 2.0 * q50) / (q95 - q05)
    sgn = math.copysign(1.0, nu_b) if nu_b != 0 else 0.0
    pt = [[min(max(nu_a, _NU_ALPHA[0]), _NU_ALPHA[-1]), min(abs(nu_b), 1.0)]]
    if nu_a <= _NU_ALPHA[0]:
        alpha, beta = 2.0, 0.0
    else:
        alpha = float(_psi_alpha(pt)[0])
        beta = sgn * min(float(_psi_beta(pt)[0]), 1.0)
    alpha = min(max(alpha, _ALPHA_GRID[0]), 2.0)
    q = [[alpha, abs(beta)]]
    scale = (q75 - q25) / float(_phi_scale(q)[0])
    zeta = q50 + scale * math.copysign(1.0, beta) * float(_phi_loc(q)[0]) if beta else q50
    if alpha == 1.0:
        mu = zeta
    else:
        mu = zeta - beta * scale * math.tan(math.pi * alpha / 2.0)
    if abs(alpha - 1.0) < ALPHA_SNAP:
        alpha = 1.0
    return StableParams(alpha, beta, scale, mu)


def _default_init(family: str, x: np.ndarray) -> FamilyParams:
    if family == "stable":
        return stable_quantile_init(x)
    med = float(np.median(x))
    q25, q75 = np.quantile(x, [0.25, 0.75])
    delta = max(float(q75 - q25) / 2.0, 1e-12)
    if family == "gaussian":
        return GaussianParams(float(x.mean()), float(x.std()))
    # alpha * delta = 1 keeps the seed equivariant under rescaling of the data
    if family == "nig":
        return NIGParams(1.0 / delta, 0.0, delta, med)
    if family == "gh":
        return GHParams(-0.5, 1.0 / delta, 0.0, delta, med)
    if family == "skewt":
        return SkewTParams(4.0, 0.0, delta * 2.0, med)
    raise ValueError(f"unknown family {family!r}")


# ---------------------------------------------------------------------------
# optimizer
# ---------------------------------------------------------------------------


class _Objective:
    """Mean negative log-likelihood on the unconstrained scale."""

    def __init__(self, family, x):
        self.family = family
        self.x = x
        self.nfev = 0

    def __call__(self, th) -> float:
        self.nfev += 1
        try:
            p = _from_theta(self.family, th)
        except (ValueError, OverflowError):
            return math.inf
        with np.errstate(all="ignore"):
            v = -float(np.mean(family_logpdf(p, self.x)))
        return v if math.isfinite(v) else math.inf

    def grad(self, th, step) -> np.ndarray:
        g = np.empty_like(th)
        for i in range(th.size):
            e = np.zeros_like(th)
            e[i] = step
            fp, fm = self(th + e), self(th - e)
            if not (math.isfinite(fp) and math.isfinite(fm)):
                f0 = self(th)
                fp = fp if math.isfinite(fp) else f0
                fm = fm if math.isfinite(fm) else f0
            g[i] = (fp - fm) / (2 * step)
        return g


def mle_fit(
    family: str,
    data,
    init: FamilyParams | None = None,
    *,
    maxiter: int = 2000,
    rtol: float = 1e-8,
) -> FitResult:
    """Maximum-likelihood fit of ``family`` to ``data``.

    Quasi-Newton search (central-difference gradients) on an unconstrained
    reparameterization, then a Nelder-Mead polish started from a small
    simplex. Converged when the polish improves the objective by less than
    ``rtol`` relatively and neither stage hit ``maxiter``.

    Raises
    ------
    NumericalFitError
        If the log-likelihood is not finite at the starting parameters.
    """
    x = _values(data)
    n = x.size
    if n < 50:
        raise ValueError("mle_fit needs at least 50 observations")
    if family == "gaussian":
        p = GaussianParams(float(x.mean()), float(x.std()))
        ll = log_likelihood(p, x)
        return FitResult(family, p, ll, n, 0, True, True, init or p)

    p0 = init if init is not None else _default_init(family, x)
    if p0.family != family:
        raise ValueError(f"init is a {p0.family} parameter set, expected {family}")
    obj = _Objective(family, x)
    th0 = _to_theta(p0)
    f0 = obj(th0)
    if not math.isfinite(f0):
        raise NumericalFitError(f"log-likelihood is not finite at the initial parameters {p0}")

    step = 1e-4 if family == "stable" else 1e-6
    r1 = optimize.minimize(
        obj,
        th0,
        jac=lambda th: obj.grad(th, step),
        method="BFGS",
        options={"gtol": 1e-7, "maxiter": maxiter},
    )
    th1 = r1.x if r1.fun <= f0 else th0
    f1 = min(r1.fun, f0)

    simplex = np.vstack([th1] + [th1 + 1e-4 * np.eye(th1.size)[i] for i in range(th1.size)])
    budget = max(maxiter - r1.nit, 1)
    r2 = optimize.minimize(
        obj,
        th1,
        method="Nelder-Mead",
        options={
            "initial_simplex": simplex,
            "xatol": 1e-5,
            "fatol": rtol * max(abs(f1), 1e-300),
            "maxiter": budget,
            "maxfev": 4 * budget,
        },
    )
    th2, f2 = (r2.x, r2.fun) if r2.fun <= f1 else (th1, f1)
    iterations = int(r1.nit + r2.nit)
    # the simplex stage stops on fatol = rtol * |f|, i.e. relative improvement < rtol
    tol_met = bool(r2.success)
    converged = tol_met and iterations < maxiter
    p = _from_theta(family, th2)
    ll = log_likelihood(p, x)
    ll0 = log_likelihood(p0, x)
    if ll < ll0:
        p, ll = p0, ll0
    if not converged:
        log.warning("%s fit did not converge after %d iterations", family, iterations)
    return FitResult(family, p, ll, n, iterations, converged, tol_met, p0)


# ---------------------------------------------------------------------------
# likelihood-ratio test
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LrtResult:
    statistic: float
    df: int
    p_value: float
    full: str = "gh"
    nested: str = ""

    @property
    def p_display(self) -> str:
        return "<1e-16" if self.p_value < 1e-16 else f"{self.p_value:.4g}"

    def to_dict(self) -> dict:
        return {
            "full": self.full,
            "nested": self.nested,
            "statistic": self.statistic,
            "df": self.df,
            "p_value": self.p_value,
            "p_display": self.p_display,
        }


def lr_p_value(statistic: float, df: int) -> float:
    return float(stats.chi2.sf(statistic, df))


def lr_test(full: FitResult, nested: FitResult) -> LrtResult:
    """``-2 log Lambda`` for a nested fit against the full model (chi-square p)."""
    if full.n != nested.n:
        raise ValueError(f"fits use different sample sizes ({full.n} vs {nested.n})")
    diff = full.log_likelihood - nested.log_likelihood
    if diff < -1e-6:
        raise NumericalFitError(
            f"full-model log-likelihood is below the nested one by {-diff:.3g}; "
            "the full fit did not reach its optimum"
        )
    stat = max(2.0 * diff, 0.0)
    df = N_PARAMS[full.family] - N_PARAMS[nested.family]
    if df < 1:
        raise ValueError(f"{nested.family} is not a restriction of {full.family}")
    return LrtResult(stat, df, lr_p_value(stat, df), full.family, nested.family)


def embed_in_gh(params: FamilyParams) -> GHParams:
    """Map a NIG or skew-t parameter set to (a point next to) it inside GH.

    NIG is GH at ``lambda = -1/2`` exactly. Skew-t is the GH boundary
    ``lambda = -nu/2, alpha -> |beta|``; the embedding steps 0.1% inside.
    """
    if params.family == "nig":
        return GHParams(-0.5, params.alpha, params.beta, params.delta, params.mu)
    if params.family == "skewt":
        alpha = max(abs(params.beta) * 1.001, 1e-3 / params.delta)
        return GHParams(-0.5 * params.nu, alpha, params.beta, params.delta, params.mu)
    if params.family == "gh":
        return params
    raise ValueError(f"{params.family} is not nested in GH")


def mle_fit_multistart(family: str, data, inits) -> FitResult:
    """Run :func:`mle_fit` from each start and keep the highest likelihood."""
    best = None
    for p0 in inits:
        try:
            r = mle_fit(family, data, p0)
        except NumericalFitError as exc:
            log.warning("start %s skipped: %s", p0, exc)
            continue
        if best is None or r.log_likelihood > best.log_likelihood:
            best = r
    if best is None:
        raise NumericalFitError(f"no usable starting point for the {family} fit")
    return best


def fit_gh_over(nested: list[FitResult], data) -> FitResult:
    """GH fit started from the default seed and from every nested optimum.

    Starting at the nested optima guarantees the full-model likelihood is at
    least the nested one, which the likelihood-ratio test relies on.
    """
    x = _values(data)
    inits = [_default_init("gh", x)] + [embed_in_gh(r.params) for r in nested]
    return mle_fit_multistart("gh", x, inits)
