"""From raw index ticks to standardized intraday log-return series.

Ticks are resampled on a fixed intraday grid with the last-tick rule,
differenced within each day only (the overnight gap is never a return), and
optionally normalized by the intraday volatility profile.
"""

from __future__ import annotations

import csv
import datetime as dt
import io
import json
import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Iterator, NamedTuple, Sequence, TextIO

import numpy as np

log = logging.getLogger(__name__)

__all__ = [
    "TickParseError",
    "TickRecord",
    "TickSeries",
    "SessionSpec",
    "DayGrid",
    "ReturnSeries",
    "parse_ticks",
    "resample",
    "log_returns",
    "deseasonalize",
    "standardize",
    "sample_stats",
    "write_series",
    "read_series",
]


class TickParseError(ValueError):
    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


class TickRecord(NamedTuple):
    timestamp: dt.datetime
    price: float


@dataclass(frozen=True)
class TickSeries:
    """Parsed ticks, sorted by time, one record per timestamp."""

    timestamps: np.ndarray  # datetime64[s]
    prices: np.ndarray
    n_reordered: int = 0
    n_duplicates: int = 0

    def __len__(self):
        return self.prices.size

    def __getitem__(self, i) -> TickRecord:
        return TickRecord(self.timestamps[i].astype(dt.datetime), float(self.prices[i]))

    def __iter__(self) -> Iterator[TickRecord]:
        for i in range(len(self)):
            yield self[i]

    @classmethod
    def from_records(cls, records: Iterable[TickRecord]) -> "TickSeries":
        recs = list(records)
        ts = np.array([np.datetime64(r.timestamp, "s") for r in recs], dtype="datetime64[s]")
        px = np.array([r.price for r in recs], dtype=float)
        return _finalize_ticks(ts, px)


def _finalize_ticks(ts: np.ndarray, px: np.ndarray) -> TickSeries:
    n_reordered = int(np.count_nonzero(ts[1:] < ts[:-1])) if ts.size > 1 else 0
    order = np.argsort(ts, kind="stable")
    ts, px = ts[order], px[order]
    # keep the last record of each timestamp
    if ts.size:
        last = np.append(ts[1:] != ts[:-1], True)
        n_dup = int(ts.size - np.count_nonzero(last))
        ts, px = ts[last], px[last]
    else:
        n_dup = 0
    if n_reordered:
        log.warning("%d out-of-order tick rows were re-sorted", n_reordered)
    return TickSeries(ts, px, n_reordered, n_dup)


def _parse_timestamp(text: str) -> dt.datetime:
    return dt.datetime.fromisoformat(text.strip())


def parse_ticks(stream: TextIO | str) -> TickSeries:
    """Parse ``timestamp,price`` rows (ISO-8601 local time, optional header).

    Raises
    ------
    TickParseError
        For a malformed row or a nonpositive price, naming the line number.
    """
    if isinstance(stream, str):
        stream = io.StringIO(stream)
    stamps: list[np.datetime64] = []
    prices: list[float] = []
    for lineno, row in enumerate(csv.reader(stream), start=1):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != 2:
            raise TickParseError(lineno, f"expected 2 fields, got {len(row)}")
        try:
            stamp = _parse_timestamp(row[0])
            price = float(row[1])
        except ValueError:
            if lineno == 1 and not stamps:
                continue  # header
            raise TickParseError(lineno, f"cannot parse row {row!r}") from None
        if not (price > 0 and math.isfinite(price)):
            raise TickParseError(lineno, f"price must be positive, got {row[1].strip()}")
        stamps.append(np.datetime64(stamp, "s"))
        prices.append(price)
    return _finalize_ticks(np.array(stamps, dtype="datetime64[s]"), np.array(prices, dtype=float))


@dataclass(frozen=True)
class SessionSpec:
    open_time: dt.time = dt.time(9, 0)
    close_time: dt.time = dt.time(17, 29)
    interval_seconds: int = 15

    def __post_init__(self):
        if not self.open_time < self.close_time:
            raise ValueError("session open_time must precede close_time")
        if self.interval_seconds <= 0:
            raise ValueError("interval_seconds must be positive")

    @property
    def n_instants(self) -> int:
        """Grid instants per full day; a partial final slot is dropped."""
        return self.length_seconds // self.interval_seconds + 1

    @property
    def length_seconds(self) -> int:
        o, c = self.open_time, self.close_time
        return (c.hour - o.hour) * 3600 + (c.minute - o.minute) * 60 + (c.second - o.second)

    def offsets(self) -> np.ndarray:
        """Grid instants in seconds after midnight."""
        o = self.open_time
        start = o.hour * 3600 + o.minute * 60 + o.second
        return start + self.interval_seconds * np.arange(self.n_instants)

    def to_dict(self) -> dict:
        return {
            "open_time": self.open_time.isoformat(),
            "close_time": self.close_time.isoformat(),
            "interval_seconds": self.interval_seconds,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SessionSpec":
        return cls(
            dt.time.fromisoformat(d["open_time"]),
            dt.time.fromisoformat(d["close_time"]),
            int(d["interval_seconds"]),
        )


class DayGrid(NamedTuple):
    date: dt.date
    first_slot: int  # index of prices[0] on the session grid
    prices: np.ndarray


def resample(ticks: TickSeries, session: SessionSpec = SessionSpec()) -> list[DayGrid]:
    """Last-tick prices at each session grid instant, per day.

    Slots before a day's first tick are trimmed; a day without ticks at or
    before the close produces no grid.
    """
    if len(ticks) == 0:
        return []
    ts = ticks.timestamps
    days = ts.astype("datetime64[D]")
    secs = (ts - days).astype(np.int64)
    offsets = session.offsets()
    grids = []
    bounds = np.flatnonzero(np.append(True, days[1:] != days[:-1]))
    bounds = np.append(bounds, ts.size)
    for lo, hi in zip(bounds[:-1], bounds[1:]):
        day_secs = secs[lo:hi]
        # index of the last tick at or before each instant
        idx = np.searchsorted(day_secs, offsets, side="right") - 1
        have = idx >= 0
        if not have.any():
            log.warning("no ticks before the close on %s; day dropped", days[lo])
            continue
        first = int(np.argmax(have))
        prices = ticks.prices[lo:hi][idx[first:]]
        grids.append(DayGrid(days[lo].astype(dt.date), first, prices))
    return grids


@dataclass(frozen=True)
class ReturnSeries:
    """Intraday log-returns on a fixed grid.

    ``values[day_offsets[d]:day_offsets[d+1]]`` are the returns of day ``d``;
    ``slots`` holds each return's time-of-day index (return ``k`` spans grid
    instants ``k`` and ``k+1``). ``standardization = (location, scale)`` maps
    values back to raw returns as ``value * scale + location``.
    """

    values: np.ndarray
    day_offsets: np.ndarray
    slots: np.ndarray
    scale_seconds: int = 15
    standardization: tuple[float, float] = (0.0, 1.0)
    deseasonalized: bool = False
    session: SessionSpec | None = None
    flagged_slots: tuple[int, ...] = ()
    dates: tuple[str, ...] = ()

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        offs = np.asarray(self.day_offsets, dtype=np.int64)
        slots = np.asarray(self.slots, dtype=np.int64)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "day_offsets", offs)
        object.__setattr__(self, "slots", slots)
        if v.size:
            if offs.size == 0 or offs[0] != 0 or offs[-1] >= v.size or np.any(np.diff(offs) <= 0):
                raise ValueError("day_offsets must start at 0 and increase strictly within the series")
        if slots.shape != v.shape:
            raise ValueError("slots must align with values")

    @classmethod
    def from_values(cls, values, day_length: int | None = None, **kw) -> "ReturnSeries":
        """Wrap a plain array, optionally split into days of ``day_length``."""
        v = np.asarray(values, dtype=float)
        if day_length is None:
            day_length = max(v.size, 1)
        offs = np.arange(0, v.size, day_length)
        slots = np.arange(v.size) % day_length
        return cls(v, offs, slots, **kw)

    def __len__(self):
        return self.values.size

    @property
    def n_days(self) -> int:
        return self.day_offsets.size

    def day_bounds(self) -> np.ndarray:
        return np.append(self.day_offsets, self.values.size)

    def days(self) -> list[np.ndarray]:
        b = self.day_bounds()
        return [self.values[lo:hi] for lo, hi in zip(b[:-1], b[1:])]

    def day_lengths(self) -> np.ndarray:
        return np.diff(self.day_bounds())

    def is_aligned(self) -> bool:
        b = self.day_bounds()
        first = self.slots[b[0] : b[1]]
        return all(np.array_equal(self.slots[lo:hi], first) for lo, hi in zip(b[:-1], b[1:]))

    def with_values(self, values, **changes) -> "ReturnSeries":
        return replace(self, values=np.asarray(values, dtype=float), **changes)

    def unstandardized(self) -> np.ndarray:
        loc, scale = self.standardization
        return self.values * scale + loc

    def is_standardized(self, tol: float = 1e-6) -> bool:
        v = self.values
        return v.size > 1 and abs(v.mean()) < tol and abs(v.var(ddof=1) - 1.0) < tol


def log_returns(
    grids: Sequence[DayGrid],
    session: SessionSpec = SessionSpec(),
    *,
    max_leading_gap: int | None = 20,
) -> ReturnSeries:
    """Within-day log-returns of resampled prices.

    Days are aligned on a common slot window: days whose leading trim
    exceeds ``max_leading_gap`` slots are dropped (with a warning), and the
    rest are cut to the latest first slot so every day has the same slots.
    ``max_leading_gap=None`` keeps every day unaligned.
    """
    grids = [g for g in grids if g.prices.size >= 2]
    if max_leading_gap is not None:
        kept = [g for g in grids if g.first_slot <= max_leading_gap]
        if len(kept) < len(grids):
            log.warning("dropped %d short days", len(grids) - len(kept))
        grids = kept
        if grids:
            start = max(g.first_slot for g in grids)
            grids = [DayGrid(g.date, start, g.prices[start - g.first_slot :]) for g in grids]
    if not grids:
        raise ValueError("no day has at least two grid prices")
    values, offsets, slots, dates = [], [], [], []
    pos = 0
    for g in grids:
        p = np.asarray(g.prices, dtype=float)
        if np.any(p <= 0):
            raise ValueError(f"nonpositive price on {g.date}")
        r = np.diff(np.log(p))
        offsets.append(pos)
        values.append(r)
        slots.append(g.first_slot + np.arange(r.size))
        dates.append(str(g.date))
        pos += r.size
    return ReturnSeries(
        np.concatenate(values),
        np.array(offsets),
        np.concatenate(slots),
        scale_seconds=session.interval_seconds,
        session=session,
        dates=tuple(dates),
    )


def _slot_matrix(series: ReturnSeries) -> np.ndarray:
    if not series.is_aligned():
        raise ValueError("days are not aligned on a common slot grid")
    return series.values.reshape(series.n_days, -1)


def deseasonalize(series: ReturnSeries) -> ReturnSeries:
    """Divide each return by the across-day mean absolute return of its slot.

    Slots whose mean absolute return is zero are left unchanged and listed
    in ``flagged_slots`` of the result.
    """
    m = _slot_matrix(series)
    scale = np.abs(m).mean(axis=0)
    zero = scale == 0
    out = m / np.where(zero, 1.0, scale)
    flagged = tuple(int(s) for s in series.slots[: m.shape[1]][zero])
    if flagged:
        log.warning("slots with zero mean absolute return left unchanged: %s", flagged)
    return series.with_values(out.ravel(), deseasonalized=True, flagged_slots=flagged)


def standardize(series: ReturnSeries) -> ReturnSeries:
    """Shift and scale to sample mean 0 and variance 1 (``ddof=1``)."""
    v = series.values
    if v.size < 2:
        raise ValueError("standardize needs at least two values")
    loc = float(v.mean())
    scale = float(v.std(ddof=1))
    if not scale > 0:
        raise ValueError("cannot standardize a series with zero variance")
    z = (v - loc) / scale
    # exact centring/scaling after rounding
    z -= z.mean()
    z /= z.std(ddof=1)
    l0, s0 = series.standardization
    return series.with_values(z, standardization=(l0 + loc * s0, s0 * scale))


@dataclass(frozen=True)
class SampleStats:
    n: int
    max: float
    min: float
    mean: float
    variance: float
    skewness: float
    kurtosis_raw: float
    kurtosis_excess: float

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def sample_stats(series) -> SampleStats:
    """Moment statistics; kurtosis as ``m4 / m2^2`` and its excess over 3."""
    v = np.asarray(getattr(series, "values", series), dtype=float)
    n = v.size
    if n < 3:
        raise ValueError("sample_stats needs at least three values")
    d = v - v.mean()
    m2 = np.mean(d**2)
    m3 = np.mean(d**3)
    m4 = np.mean(d**4)
    if m2 == 0:
        raise ValueError("zero variance")
    kurt = m4 / m2**2
    return SampleStats(
        n=n,
        max=float(v.max()),
        min=float(v.min()),
        mean=float(v.mean()),
        variance=float(v.var(ddof=1)),
        skewness=float(m3 / m2**1.5),
        kurtosis_raw=float(kurt),
        kurtosis_excess=float(kurt - 3.0),
    )


def _sidecar(path: Path) -> Path:
    return path.with_suffix(".json")


def write_series(series: ReturnSeries, path) -> None:
    """Write ``day_index,slot_index,value`` CSV plus a JSON sidecar."""
    path = Path(path)
    day_idx = np.repeat(np.arange(series.n_days), series.day_lengths())
    with open(path, "w", newline="") as fh:
        fh.write("day_index,slot_index,value\n")
        for d, s, v in zip(day_idx.tolist(), series.slots.tolist(), series.values.tolist()):
            fh.write(f"{d},{s},{v!r}\n")
    meta = {
        "scale_seconds": series.scale_seconds,
        "session": series.session.to_dict() if series.session else None,
        "standardization": {"location": series.standardization[0], "scale": series.standardization[1]},
        "deseasonalized": series.deseasonalized,
        "n": len(series),
        "days": series.n_days,
        "dates": list(series.dates),
        "flagged_slots": list(series.flagged_slots),
    }
    _sidecar(path).write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")


def read_series(path) -> ReturnSeries:
    path = Path(path)
    raw = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    day_idx = raw[:, 0].astype(np.int64)
    slots = raw[:, 1].astype(np.int64)
    values = raw[:, 2]
    offsets = np.flatnonzero(np.append(True, day_idx[1:] != day_idx[:-1]))
    meta = {}
    side = _sidecar(path)
    if side.exists():
        meta = json.loads(side.read_text())
    st = meta.get("standardization") or {"location": 0.0, "scale": 1.0}
    session = SessionSpec.from_dict(meta["session"]) if meta.get("session") else None
    return ReturnSeries(
        values,
        offsets,
        slots,
        scale_seconds=int(meta.get("scale_seconds", 15)),
        standardization=(float(st["location"]), float(st["scale"])),
        deseasonalized=bool(meta.get("deseasonalized", False)),
        session=session,
        flagged_slots=tuple(meta.get("flagged_slots", ())),
        dates=tuple(meta.get("dates", ())),
    )
