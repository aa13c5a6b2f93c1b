"""Power-law tail estimation: continuous Pareto MLE with a KS-minimizing cutoff scan."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field

import numpy as np

log = logging.getLogger(__name__)

__all__ = [
    "ParetoParams",
    "TailFitReport",
    "alpha_mle",
    "xmin_scan",
    "tail_fit",
    "tail_values",
    "empirical_ccdf",
    "write_ccdf_csv",
]


@dataclass(frozen=True)
class ParetoParams:
    """Continuous power law ``P(X >= x) = (x / x_min)^(1 - alpha)`` for ``x >= x_min``."""

    alpha: float
    x_min: float
    family = "pareto"

    def __post_init__(self):
        if not self.alpha > 1:
            raise ValueError(f"Pareto alpha must exceed 1, got {self.alpha}")
        if not self.x_min > 0:
            raise ValueError(f"Pareto x_min must be positive, got {self.x_min}")

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        r = np.maximum(x, self.x_min) / self.x_min
        return -np.expm1((1.0 - self.alpha) * np.log(r))

    def sample(self, n: int, seed) -> np.ndarray:
        if n < 1:
            raise ValueError("n must be >= 1")
        u = np.random.default_rng(seed).uniform(size=n)
        # 1 - u lies in (0, 1], so no infinite draws
        return self.x_min * (1.0 - u) ** (-1.0 / (self.alpha - 1.0))


@dataclass(frozen=True)
class TailFitReport:
    side: str
    alpha: float
    alpha_se: float
    x_min: float
    n_tail: int
    ks_at_xmin: float
    scan: list = field(default_factory=list, repr=False)
    n_side: int = 0

    def to_dict(self, include_scan: bool = True) -> dict:
        d = {
            "side": self.side,
            "alpha": self.alpha,
            "alpha_se": self.alpha_se,
            "x_min": self.x_min,
            "n_tail": self.n_tail,
            "n_side": self.n_side,
            "ks_at_xmin": self.ks_at_xmin,
        }
        if include_scan:
            d["scan"] = [{"x_min": c, "alpha": a, "ks": k} for c, a, k in self.scan]
        return d


def alpha_mle(tail_data, x_min: float) -> tuple[float, float]:
    """Continuous power-law exponent ``1 + n / sum(ln(x / x_min))`` and its standard error."""
    x = np.asarray(tail_data, dtype=float)
    if not x_min > 0:
        raise ValueError("x_min must be positive")
    if x.size == 0:
        raise ValueError("tail_data is empty")
    if x.min() < x_min:
        raise ValueError("every tail point must be >= x_min")
    s = float(np.sum(np.log(x / x_min)))
    if not s > 0:
        raise ValueError("all tail points equal x_min; the exponent is undefined")
    alpha = 1.0 + x.size / s
    return alpha, (alpha - 1.0) / math.sqrt(x.size)


def _scan_sorted(y: np.ndarray, starts: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Exponent and KS distance with the tail starting at each index of sorted ``y``."""
    logy = np.log(y)
    suffix = np.concatenate([np.cumsum(logy[::-1])[::-1], [0.0]])
    alphas = np.empty(starts.size)
    ks = np.empty(starts.size)
    n = y.size
    for j, k in enumerate(starts):
        m = n - k
        c = y[k]
        s = suffix[k] - m * logy[k]
        a = 1.0 + m / s
        f = -np.expm1((1.0 - a) * (logy[k:] - logy[k]))
        i = np.arange(1, m + 1)
        ks[j] = max(np.max(i / m - f), np.max(f - (i - 1) / m))
        alphas[j] = a
    return alphas, ks


def xmin_scan(
    data,
    candidates=None,
    *,
    n_tail_min: int = 50,
    max_candidates: int | None = 2000,
    exhaustive: bool = False,
    side: str = "right",
) -> TailFitReport:
    """Choose ``x_min`` by minimizing the KS distance of the fitted power law.

    Default candidates are the distinct data values from the 75th percentile
    up to the one leaving ``n_tail_min`` points, thinned evenly to at most
    ``max_candidates`` (``None`` keeps all). ``exhaustive=True`` starts the
    range at the smallest value instead. Ties pick the smallest ``x_min``.
    """
    y = np.sort(np.asarray(data, dtype=float))
    if y.size < 100:
        raise ValueError(f"xmin_scan needs at least 100 points, got {y.size}")
    if y[0] <= 0:
        raise ValueError("xmin_scan requires positive data")
    n = y.size
    last = n - n_tail_min  # largest start index leaving n_tail_min points
    if last < 0:
        raise ValueError(f"fewer than n_tail_min={n_tail_min} points")
    if candidates is not None:
        c = np.unique(np.asarray(candidates, dtype=float))
        starts = np.searchsorted(y, c, side="left")
        keep = starts <= last
        if not np.any(keep):
            raise ValueError(f"fewer than n_tail_min={n_tail_min} points above every candidate")
        starts = starts[keep]
    else:
        first = 0 if exhaustive else int(np.searchsorted(y, np.quantile(y, 0.75), side="left"))
        # first occurrence of each distinct value
        distinct = np.flatnonzero(np.concatenate([[True], y[1:] != y[:-1]]))
        starts = distinct[(distinct >= first) & (distinct <= last)]
        if starts.size == 0:
            raise ValueError(f"fewer than n_tail_min={n_tail_min} points above every candidate")
        if max_candidates and starts.size > max_candidates:
            pick = np.unique(np.round(np.linspace(0, starts.size - 1, max_candidates)).astype(int))
            starts = starts[pick]
    starts = np.unique(starts)
    alphas, ks = _scan_sorted(y, starts)
    best = int(np.argmin(ks))  # argmin takes the first, i.e. smallest x_min
    k = int(starts[best])
    m = n - k
    a = float(alphas[best])
    scan = [(float(y[s]), float(al), float(d)) for s, al, d in zip(starts, alphas, ks)]
    return TailFitReport(
        side=side,
        alpha=a,
        alpha_se=(a - 1.0) / math.sqrt(m),
        x_min=float(y[k]),
        n_tail=m,
        ks_at_xmin=float(ks[best]),
        scan=scan,
        n_side=n,
    )


def tail_values(values, side: str) -> np.ndarray:
    """Positive returns (right) or negated negative returns (left)."""
    x = np.asarray(getattr(values, "values", values), dtype=float)
    if side == "right":
        return x[x > 0]
    if side == "left":
        return -x[x < 0]
    raise ValueError(f"side must be 'left' or 'right', got {side!r}")


def tail_fit(series, side: str, **scan_kw) -> TailFitReport:
    """Power-law fit of one tail of a (standardized) return series."""
    if hasattr(series, "is_standardized") and not series.is_standardized():
        log.warning("tail_fit on a series that is not standardized")
    t = tail_values(series, side)
    if t.size == 0:
        raise ValueError(f"the {side} tail is empty")
    return xmin_scan(t, side=side, **scan_kw)


def empirical_ccdf(values) -> tuple[np.ndarray, np.ndarray]:
    """Sorted distinct values and the empirical ``P(X >= x)`` at each."""
    y = np.sort(np.asarray(values, dtype=float))
    n = y.size
    x, first = np.unique(y, return_index=True)
    return x, (n - first) / n


def write_ccdf_csv(path, values) -> None:
    x, p = empirical_ccdf(values)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["x", "ccdf"])
        for xi, pi in zip(x, p):
            w.writerow([repr(float(xi)), repr(float(pi))])
