"""Aggregation across time scales, DFA, reshuffling nulls and distribution collapse."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import special

from .gof import ks_critical
from .ingest import ReturnSeries

log = logging.getLogger(__name__)

__all__ = [
    "RESHUFFLE_MODES",
    "DfaResult",
    "ScalingReport",
    "aggregate",
    "default_scales",
    "dfa",
    "reshuffle",
    "ks_two_sample",
    "collapse_scan",
    "convergence_scan",
    "rescaled_histograms",
    "write_histogram_csv",
]

RESHUFFLE_MODES = ("global", "day_block", "within_day_slot")
_KS_C = {0.05: 1.358, 0.01: 1.628}


def _as_series(series) -> ReturnSeries:
    if isinstance(series, ReturnSeries):
        return series
    return ReturnSeries.from_values(series)


def default_scales(day_length: int) -> list[int]:
    """Powers of two from 1 up to half the day length."""
    out, s = [], 1
    while s <= day_length // 2:
        out.append(s)
        s *= 2
    return out or [1]


def aggregate(series, factor: int) -> ReturnSeries:
    """Non-overlapping within-day block sums of ``factor`` returns.

    Trailing partial blocks of each day are dropped; no block spans two days.
    """
    s = _as_series(series)
    if factor < 1 or int(factor) != factor:
        raise ValueError("factor must be a positive integer")
    factor = int(factor)
    if factor == 1:
        return s
    lengths = s.day_lengths()
    if factor > lengths.min() // 2:
        raise ValueError(
            f"factor {factor} exceeds half the shortest day ({lengths.min()} returns)"
        )
    bounds = s.day_bounds()
    vals, offs, slots = [], [], []
    pos = 0
    for lo, hi in zip(bounds[:-1], bounds[1:]):
        k = (hi - lo) // factor
        block = s.values[lo : lo + k * factor].reshape(k, factor).sum(axis=1)
        vals.append(block)
        offs.append(pos)
        slots.append(s.slots[lo : lo + k * factor : factor] // factor)
        pos += k
    return replace(
        s,
        values=np.concatenate(vals),
        day_offsets=np.array(offs),
        slots=np.concatenate(slots),
        scale_seconds=s.scale_seconds * factor,
        flagged_slots=(),
    )


@dataclass(frozen=True)
class DfaResult:
    hurst: float
    windows: np.ndarray
    fluctuations: np.ndarray

    @property
    def curve(self) -> list[tuple[int, float]]:
        return [(int(w), float(f)) for w, f in zip(self.windows, self.fluctuations)]


def _dfa_fluctuation(profile: np.ndarray, s: int) -> float:
    n = profile.size
    m = n // s
    segs = np.concatenate(
        [profile[: m * s].reshape(m, s), profile[n - m * s :].reshape(m, s)]
    )
    t = np.arange(s) - (s - 1) / 2.0
    tt = float(t @ t)
    c = segs - segs.mean(axis=1, keepdims=True)
    slope = (c @ t) / tt
    resid = c - slope[:, None] * t[None, :]
    return math.sqrt(float(np.mean(resid * resid)))


def dfa(series, *, n_windows: int = 20, min_window: int = 16, max_window: int | None = None) -> DfaResult:
    """First-order detrended fluctuation analysis.

    Windows are ~``n_windows`` log-spaced integers in ``[min_window, n/4]``;
    each window size uses forward and backward segmentations of the profile.
    """
    x = np.asarray(getattr(series, "values", series), dtype=float)
    n = x.size
    if n < 2**10:
        raise ValueError(f"dfa needs at least 1024 points, got {n}")
    hi = max_window or n // 4
    windows = np.unique(np.round(np.geomspace(min_window, hi, n_windows)).astype(int))
    profile = np.cumsum(x - x.mean())
    fl = np.array([_dfa_fluctuation(profile, int(s)) for s in windows])
    if np.any(fl <= 0):
        raise ValueError("zero fluctuation: the series is constant at some window size")
    slope = np.polyfit(np.log(windows), np.log(fl), 1)[0]
    return DfaResult(float(slope), windows, fl)


def reshuffle(series, mode: str, seed: int) -> ReturnSeries:
    """Permutation null preserving the multiset of returns.

    ``global`` permutes all returns and keeps the day layout; ``day_block``
    permutes whole days; ``within_day_slot`` permutes each time-of-day slot
    across days. The generator is seeded with ``(seed, mode)``.
    """
    if mode not in RESHUFFLE_MODES:
        raise ValueError(f"mode must be one of {RESHUFFLE_MODES}, got {mode!r}")
    s = _as_series(series)
    rng = np.random.default_rng([int(seed), RESHUFFLE_MODES.index(mode)])
    if mode == "global":
        return s.with_values(rng.permutation(s.values))
    if mode == "day_block":
        order = rng.permutation(s.n_days)
        b = s.day_bounds()
        idx = np.concatenate([np.arange(b[d], b[d + 1]) for d in order])
        lengths = s.day_lengths()[order]
        offs = np.concatenate([[0], np.cumsum(lengths)[:-1]])
        dates = tuple(s.dates[d] for d in order) if s.dates else ()
        return replace(s, values=s.values[idx], slots=s.slots[idx], day_offsets=offs, dates=dates)
    if not s.is_aligned():
        raise ValueError("within_day_slot reshuffle requires aligned days")
    mat = s.values.reshape(s.n_days, -1)
    return s.with_values(rng.permuted(mat, axis=0).ravel())


def ks_two_sample(a, b) -> float:
    """Two-sample Kolmogorov-Smirnov distance."""
    a = np.sort(np.asarray(a, dtype=float))
    b = np.sort(np.asarray(b, dtype=float))
    both = np.concatenate([a, b])
    fa = np.searchsorted(a, both, side="right") / a.size
    fb = np.searchsorted(b, both, side="right") / b.size
    return float(np.max(np.abs(fa - fb)))


def _ks_normal(x: np.ndarray) -> float:
    x = np.sort(x)
    n = x.size
    f = special.ndtr(x)
    i = np.arange(1, n + 1)
    return float(max(np.max(i / n - f), np.max(f - (i - 1) / n)))


@dataclass(frozen=True)
class ScalingReport:
    scales: list
    hurst: float
    collapse: list
    reference: str
    mode: str
    n_per_scale: list = field(default_factory=list)
    critical_values: list = field(default_factory=list)
    dfa_curve: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "reference": self.reference,
            "hurst": self.hurst,
            "scales": list(self.scales),
            "collapse": list(self.collapse),
            "n_per_scale": list(self.n_per_scale),
            "critical_values": list(self.critical_values),
            "dfa_curve": [{"window": w, "F": f} for w, f in self.dfa_curve],
        }


def _critical(n: int, m: int | None = None) -> dict | None:
    """Asymptotic KS points, or None where the sample is too small for them."""
    if n < 35:
        return None
    if m is None:
        return {f"{lv:g}": ks_critical(n, lv) for lv in _KS_C}
    # two-sample version of the asymptotic point
    eff = n * m / (n + m)
    return {f"{lv:g}": c / math.sqrt(eff) for lv, c in _KS_C.items()}


def _check_scales(scales) -> list[int]:
    sc = [int(v) for v in scales]
    if not sc or any(v < 1 for v in sc) or any(b <= a for a, b in zip(sc, sc[1:])):
        raise ValueError("scales must be strictly increasing positive integers")
    return sc


def collapse_scan(
    series,
    scales=None,
    hurst: float | None = 0.5,
    reference: str = "standard_normal",
    *,
    mode: str = "raw",
) -> ScalingReport:
    """KS distance between ``aggregate(series, n) / n**hurst`` and a reference.

    ``reference`` is ``"standard_normal"`` or ``"base_scale"`` (the empirical
    distribution of the unaggregated series). ``hurst=None`` estimates it by
    :func:`dfa`.
    """
    s = _as_series(series)
    if reference not in ("standard_normal", "base_scale"):
        raise ValueError(f"unknown reference {reference!r}")
    if not s.is_standardized(1e-6):
        log.warning("collapse_scan on a series that is not standardized")
    sc = _check_scales(scales if scales is not None else default_scales(int(s.day_lengths().min())))
    curve: list = []
    if hurst is None:
        d = dfa(s)
        hurst = d.hurst
        curve = d.curve
    dist, ns, crit = [], [], []
    for n in sc:
        z = aggregate(s, n).values / n**hurst
        if reference == "standard_normal":
            dist.append(_ks_normal(z))
            crit.append(_critical(z.size))
        else:
            dist.append(ks_two_sample(z, s.values))
            crit.append(_critical(z.size, s.values.size))
        ns.append(int(z.size))
    return ScalingReport(sc, float(hurst), dist, reference, mode, ns, crit, curve)


def convergence_scan(series, scales=None, *, mode: str = "raw") -> ScalingReport:
    """KS distance to N(0, 1) of each re-standardized aggregate."""
    s = _as_series(series)
    sc = _check_scales(scales if scales is not None else default_scales(int(s.day_lengths().min())))
    dist, ns, crit = [], [], []
    for n in sc:
        v = aggregate(s, n).values
        sd = v.std(ddof=1)
        if not sd > 0:
            raise ValueError(f"aggregate at scale {n} has zero variance")
        dist.append(_ks_normal((v - v.mean()) / sd))
        ns.append(int(v.size))
        crit.append(_critical(v.size))
    return ScalingReport(sc, 0.5, dist, "standard_normal", mode, ns, crit)


def rescaled_histograms(series, scales, hurst: float, *, bins=None) -> list[tuple[float, float, int]]:
    """Rows ``(bin_center, density, scale)`` of each rescaled aggregate's histogram."""
    s = _as_series(series)
    edges = np.linspace(-10.0, 10.0, 201) if bins is None else np.asarray(bins, dtype=float)
    centers = 0.5 * (edges[1:] + edges[:-1])
    rows = []
    for n in _check_scales(scales):
        z = aggregate(s, n).values / n**hurst
        dens, _ = np.histogram(z, bins=edges)
        # normalize by all points so mass outside the range is not redistributed
        dens = dens / (z.size * np.diff(edges))
        rows.extend((float(c), float(d), n) for c, d in zip(centers, dens))
    return rows


def write_histogram_csv(path, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["bin_center", "density", "scale"])
        for c, d, n in rows:
            w.writerow([repr(c), repr(d), n])
