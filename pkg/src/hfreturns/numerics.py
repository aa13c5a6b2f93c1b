"""Special functions and characteristic-function inversion.

The Bessel and gamma routines wrap :mod:`scipy.special` behind explicit
domain checks; the inversion routine tabulates a density from its
characteristic function with a single FFT.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import special

__all__ = [
    "CFContractError",
    "InversionGrid",
    "bessel_k",
    "log_bessel_k",
    "log_gamma",
    "cf_invert",
]


class CFContractError(ValueError):
    """Raised when a characteristic function cannot be inverted on a grid."""


def _clean_order(order: float) -> float:
    # scipy's kv/kve return inf for subnormal orders; K_v is even and smooth
    # in v, so such orders are exactly 0 to double precision
    return 0.0 if abs(order) < 1e-300 else float(order)


def _log_kve_large(v: float, x):
    """Hankel expansion of ``log(exp(x) K_v(x))``; scipy returns nan past ~1e9."""
    mu = 4.0 * v * v
    with np.errstate(over="ignore"):
        # x * x may overflow to inf, which only drops a negligible term
        series = 1.0 + (mu - 1.0) / (8.0 * x) + (mu - 1.0) * (mu - 9.0) / (128.0 * x * x)
    return 0.5 * np.log(math.pi / (2.0 * x)) + np.log(series)


def bessel_k(order: float, x, scaled: bool = False):
    """Modified Bessel function of the third kind, ``K_order(x)``.

    Parameters
    ----------
    order : float
        Real order. ``K_{-v} = K_v``.
    x : float or array_like
        Strictly positive argument.
    scaled : bool
        If True return ``exp(x) * K_order(x)``, which does not underflow
        for large ``x``.

    Raises
    ------
    ValueError
        If any ``x <= 0`` or the order is not finite.
    OverflowError
        If the unscaled value overflows double precision.
    """
    if not math.isfinite(order):
        raise ValueError(f"Bessel order must be finite, got {order}")
    xa = np.asarray(x, dtype=float)
    if np.any(~(xa > 0)):
        raise ValueError("bessel_k requires x > 0")
    order = _clean_order(order)
    if scaled:
        out = special.kve(order, xa)
    else:
        out = special.kv(order, xa)
    lost = np.isnan(out)
    if np.any(lost):
        xl = xa[lost] if xa.ndim else xa
        fill = np.exp(_log_kve_large(abs(order), xl) - (0.0 if scaled else xl))
        if out.ndim:
            out[lost] = fill
        else:
            out = np.asarray(fill)
    if np.any(np.isinf(out)):
        raise OverflowError(
            "K_v(x) overflows for the requested arguments; use log_bessel_k "
            "or scaled=True for small x / large order"
        )
    return out if out.ndim else float(out)


def log_bessel_k(order: float, x, scaled: bool = False):
    """``log K_order(x)`` for positive ``x``, safe from under- and overflow.

    With ``scaled=True`` return ``log(exp(x) K_order(x))``, which lets callers
    cancel the ``-x`` term analytically instead of in floating point.
    """
    xa = np.asarray(x, dtype=float)
    v = _clean_order(abs(order))
    with np.errstate(divide="ignore", over="ignore"):
        out = np.log(special.kve(v, xa))
    bad = ~np.isfinite(out)
    if np.any(bad):
        xb = np.asarray(xa[bad] if xa.ndim else xa)
        with np.errstate(divide="ignore", invalid="ignore"):
            # small argument: K_v(x) ~ Gamma(v) / 2 * (2/x)^v
            if v > 0:
                small = special.gammaln(v) + (v - 1.0) * math.log(2.0) - v * np.log(xb)
            else:
                small = np.log(-np.log(xb / 2.0) - np.euler_gamma)
            small = small + xb
            large = _log_kve_large(v, xb)
        approx = np.where(xb > 1.0, large, small)
        if xa.ndim:
            out[bad] = approx
        else:
            out = float(approx)
    if not scaled:
        out = out - xa
    return out if np.ndim(out) else float(out)


def log_gamma(x: float) -> float:
    """Natural log of the gamma function for ``x > 0``."""
    if not x > 0:
        raise ValueError(f"log_gamma requires x > 0, got {x}")
    return float(special.gammaln(x))


@dataclass(frozen=True)
class InversionGrid:
    """Equispaced abscissae for FFT inversion.

    ``n_points`` must be a power of two no smaller than 1024. The grid's
    period is ``n_points * spacing``; anything the density puts outside one
    period is folded back in (aliasing), so callers choose a span wide
    enough for their tails.
    """

    x_min: float
    x_max: float
    n_points: int = 2**16
    degenerate: bool = False
    spacing: float = field(init=False)

    def __post_init__(self):
        if not self.x_min < self.x_max:
            raise ValueError("InversionGrid requires x_min < x_max")
        n = self.n_points
        if n < 2**10 or n & (n - 1):
            raise ValueError("n_points must be a power of two >= 1024")
        object.__setattr__(self, "spacing", (self.x_max - self.x_min) / (n - 1))

    @classmethod
    def centered(cls, center: float, spacing: float, n_points: int = 2**16, **kw):
        half = spacing * (n_points // 2)
        return cls(center - half, center - half + spacing * (n_points - 1), n_points, **kw)

    @property
    def x(self) -> np.ndarray:
        return self.x_min + self.spacing * np.arange(self.n_points)

    @property
    def frequencies(self) -> np.ndarray:
        n = self.n_points
        dt = 2.0 * np.pi / (n * self.spacing)
        return (np.arange(n) - n // 2) * dt


def cf_invert(
    cf: Callable[[np.ndarray], np.ndarray],
    grid: InversionGrid,
    *,
    decay_tol: float = 1e-8,
) -> tuple[np.ndarray, np.ndarray]:
    """Tabulate the density of a characteristic function on ``grid``.

    Evaluates ``f(x_j) = (1/2pi) sum_k cf(t_k) exp(-i t_k x_j) dt`` for all
    grid nodes with one FFT. Values in ``[-1e-12 * peak, 0)`` are clamped to
    zero; anything more negative means the grid is misconfigured.

    Raises
    ------
    CFContractError
        If ``cf(0) != 1`` or ``|cf|`` has not decayed below ``decay_tol`` at
        the Nyquist frequency (a non-resolvable law such as a point mass),
        unless the grid is flagged ``degenerate``.
    """
    c0 = complex(np.asarray(cf(np.zeros(1)))[0])
    if abs(c0 - 1.0) > 1e-12:
        raise CFContractError(f"cf(0) must equal 1, got {c0}")
    n = grid.n_points
    t = grid.frequencies
    phi = np.asarray(cf(t), dtype=complex)
    if not grid.degenerate:
        edge = max(abs(phi[0]), abs(phi[-1]))
        if edge > decay_tol:
            raise CFContractError(
                f"|cf| = {edge:.3g} at the Nyquist frequency {abs(t[0]):.4g}; "
                "refine the grid spacing or flag the grid degenerate"
            )
    dt = t[1] - t[0]
    g = np.fft.fft(phi * np.exp(-1j * t * grid.x_min))
    sign = np.where(np.arange(n) % 2, -1.0, 1.0)
    pdf = (dt / (2.0 * np.pi)) * sign * g.real
    floor = -1e-12 * max(1.0, float(pdf.max()))
    if pdf.min() < floor and not grid.degenerate:
        raise CFContractError(
            f"inverted density has ripple {pdf.min():.3g} below {floor:.3g}"
        )
    np.maximum(pdf, 0.0, out=pdf)
    return grid.x, pdf
