"""Independent oracles for the frozen [DERIVED] test vectors.

Nothing here imports the package. Bessel values come from direct quadrature
of the integral representation (mpmath), the stable density from
Fourier-weighted quadrature of the inversion integral (QUADPACK QAWF), and
NIG quantiles from mpmath quadrature plus root finding.

Run ``python tests/oracles/compute_oracles.py``; the printed values are the
constants frozen in the test modules.
"""

import math

import mpmath as mp
import numpy as np
from scipy import integrate

mp.mp.dps = 25


def bessel_k_quad(v, x):
    # K_v(x) = int_0^inf exp(-x cosh t) cosh(v t) dt; the integrand is below
    # 1e-100 beyond t = 40 for the arguments used here
    return mp.quad(lambda t: mp.e ** (-x * mp.cosh(t)) * mp.cosh(v * t), [0, 1, 5, 40])


def stable_pdf_quad(x, alpha, beta):
    """(1/pi) int_0^inf Re[exp(-i t x) phi(t)] dt for delta=1, mu=0 (alpha != 1)."""
    tan = math.tan(math.pi * alpha / 2)

    def re_phi(t):
        return math.exp(-(t**alpha)) * math.cos(beta * tan * t**alpha)

    def im_phi(t):
        return math.exp(-(t**alpha)) * math.sin(beta * tan * t**alpha)

    # Re[e^{-itx} phi] = cos(tx) Re phi + sin(tx) Im phi
    c = integrate.quad(re_phi, 0, np.inf, weight="cos", wvar=x, limlst=200)[0]
    s = integrate.quad(im_phi, 0, np.inf, weight="sin", wvar=x, limlst=200)[0]
    return (c + s) / math.pi


def nig_pdf_formula(x, a, b, d, m, bessel=mp.besselk):
    g = mp.sqrt(a * a - b * b)
    q = mp.sqrt(d * d + (x - m) ** 2)
    return a * d * bessel(1, a * q) * mp.e ** (d * g + b * (x - m)) / (mp.pi * q)


def nig_quantile(p, a, b, d, m):
    def cdf(y):
        return mp.quad(lambda x: nig_pdf_formula(x, a, b, d, m), [-mp.inf, -20, -5, 0, y])

    return mp.findroot(lambda y: cdf(y) - p, 2.0)


if __name__ == "__main__":
    print("K_1(1) =", mp.nstr(bessel_k_quad(1, 1), 16))
    print("stable pdf at 2 (alpha=0.5, beta=1) =", repr(stable_pdf_quad(2.0, 0.5, 1.0)))
    print("NIG pdf at 0 (1, 0, 1, 0) =", mp.nstr(nig_pdf_formula(0, 1, 0, 1, 0, bessel_k_quad), 16))
    print("NIG 90th percentile (1, 0.3, 1, 0) =", mp.nstr(nig_quantile(0.9, 1, mp.mpf("0.3"), 1, 0), 14))
