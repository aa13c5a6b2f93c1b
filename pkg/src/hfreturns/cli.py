"""Command-line front end: ingest, fit, gof, lrt, tails, scaling, simulate, pipeline.

Exit status: 0 success, 1 validation error, 2 numerical failure, 64 usage error.
"""

from __future__ import annotations

import argparse
import datetime as dt
import json
import logging
import sys
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import __version__
from .distributions import FAMILIES, family_sample, make_params, params_from_dict, params_to_dict
from .estimation import FitResult, fit_gh_over, lr_test, mle_fit
from .gof import LEVELS, bootstrap_pvalue, gof_report
from .ingest import (
    ReturnSeries,
    SessionSpec,
    deseasonalize,
    log_returns,
    parse_ticks,
    read_series,
    resample,
    sample_stats,
    standardize,
    write_series,
)
from .scaling import (
    RESHUFFLE_MODES,
    collapse_scan,
    convergence_scan,
    default_scales,
    dfa,
    rescaled_histograms,
    reshuffle,
    write_histogram_csv,
)
from .tailfit import tail_fit, tail_values, write_ccdf_csv

log = logging.getLogger("hfreturns")

EXIT_OK, EXIT_VALIDATION, EXIT_NUMERICAL, EXIT_USAGE = 0, 1, 2, 64

SCALING_MODES = ("raw",) + RESHUFFLE_MODES


class UsageError(Exception):
    pass


class StageError(Exception):
    """Wraps a pipeline failure with the stage that raised it."""

    def __init__(self, stage: str, exc: Exception):
        super().__init__(f"stage '{stage}' failed: {exc}")
        self.stage = stage
        self.original = exc


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------


@dataclass
class RunConfig:
    open_time: str = "09:00"
    close_time: str = "17:29"
    interval_seconds: int = 15
    deseasonalize: bool = False
    standardize: bool = True
    families: list = field(default_factory=lambda: ["stable", "gh", "nig", "skewt", "gaussian"])
    gof_levels: list = field(default_factory=lambda: list(LEVELS))
    chi2_bins: int = 199
    bootstrap: int = 0
    statistic: str = "ks"
    n_tail_min: int = 50
    max_candidates: int = 2000
    exhaustive: bool = False
    scales: list | None = None
    hurst: str = "0.5"
    reference: str = "standard_normal"
    modes: list = field(default_factory=lambda: list(SCALING_MODES))
    seed: int | None = None
    threads: int = 1
    out: str = "."

    # config-file sections and the keys they may hold
    SECTIONS = {
        "session": ("open_time", "close_time", "interval_seconds"),
        "ingest": ("deseasonalize", "standardize"),
        "fit": ("families",),
        "gof": ("gof_levels", "chi2_bins", "bootstrap", "statistic"),
        "tails": ("n_tail_min", "max_candidates", "exhaustive"),
        "scaling": ("scales", "hurst", "reference", "modes"),
        "run": ("seed", "threads", "out"),
    }

    @property
    def session(self) -> SessionSpec:
        return SessionSpec(
            dt.time.fromisoformat(self.open_time),
            dt.time.fromisoformat(self.close_time),
            int(self.interval_seconds),
        )

    @classmethod
    def load(cls, path: str | None, overrides: dict) -> "RunConfig":
        """Defaults, then the config file, then explicit flags."""
        cfg = cls()
        names = {f.name for f in fields(cls)}
        if path:
            doc = json.loads(Path(path).read_text())
            if not isinstance(doc, dict):
                raise ValueError("config file must hold a JSON object")
            for section, body in doc.items():
                allowed = cls.SECTIONS.get(section)
                if allowed is None or not isinstance(body, dict):
                    raise ValueError(f"unknown config section {section!r}")
                for key, value in body.items():
                    if key not in allowed:
                        raise ValueError(f"unknown key {key!r} in config section {section!r}")
                    setattr(cfg, key, value)
        for key, value in overrides.items():
            if key in names and value is not None:
                setattr(cfg, key, value)
        cfg.session  # validates the window
        bad = [f for f in cfg.families if f not in FAMILIES]
        if bad:
            raise ValueError(f"unknown families {bad}; choose from {FAMILIES}")
        bad = [m for m in cfg.modes if m not in SCALING_MODES]
        if bad:
            raise ValueError(f"unknown scaling modes {bad}; choose from {SCALING_MODES}")
        return cfg

    def to_dict(self) -> dict:
        return {k: v for k, v in asdict(self).items() if k != "out"}


# ---------------------------------------------------------------------------
# io helpers
# ---------------------------------------------------------------------------


def _clean(obj):
    """Convert numpy scalars/arrays and non-finite floats for JSON."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_clean(v) for v in obj.tolist()]
    if isinstance(obj, np.generic):
        obj = obj.item()
    if isinstance(obj, float) and not np.isfinite(obj):
        return None
    return obj


def write_json(path: Path, doc: dict) -> None:
    path.write_text(json.dumps(_clean(doc), indent=2, sort_keys=True) + "\n")


def _out_dir(cfg: RunConfig) -> Path:
    p = Path(cfg.out)
    p.mkdir(parents=True, exist_ok=True)
    return p


def load_returns(path: str) -> ReturnSeries:
    """A ReturnSeries CSV (with header) or a plain one-value-per-line file."""
    p = Path(path)
    if not p.exists():
        raise ValueError(f"input file not found: {path}")
    with open(p) as fh:
        first = fh.readline()
    if first.startswith("day_index"):
        return read_series(p)
    values = np.loadtxt(p, delimiter=",", ndmin=1, dtype=float)
    if values.ndim != 1:
        raise ValueError(f"{path}: expected one value per line")
    return ReturnSeries.from_values(values)


def _fit_from_json(path: str, family: str) -> FitResult:
    doc = json.loads(Path(path).read_text())
    if doc.get("family") != family:
        raise ValueError(f"{path} holds a {doc.get('family')} fit, expected {family}")
    p = params_from_dict({"family": family, **doc["params"]})
    return FitResult(family, p, float(doc["loglik"]), int(doc["n"]), int(doc["iterations"]),
                     bool(doc["converged"]), bool(doc["converged"]), p)


def _require_seed(cfg: RunConfig, command: str) -> int:
    if cfg.seed is None:
        raise UsageError(f"'{command}' is randomized and requires --seed")
    return int(cfg.seed)


# ---------------------------------------------------------------------------
# stages
# ---------------------------------------------------------------------------


def stage_ingest(ticks_path: str, cfg: RunConfig, out: Path) -> tuple[ReturnSeries, dict]:
    with open(ticks_path, encoding="utf-8") as fh:
        ticks = parse_ticks(fh)
    session = cfg.session
    series = log_returns(resample(ticks, session), session)
    raw_stats = sample_stats(series)
    if cfg.deseasonalize:
        series = deseasonalize(series)
    if cfg.standardize:
        series = standardize(series)
    write_series(series, out / "returns.csv")
    doc = {
        "ticks": len(ticks),
        "reordered_rows": ticks.n_reordered,
        "duplicate_timestamps": ticks.n_duplicates,
        "days": series.n_days,
        "returns_per_day": int(series.day_lengths()[0]),
        "n": len(series),
        "deseasonalized": series.deseasonalized,
        "flagged_slots": list(series.flagged_slots),
        "standardization": {"location": series.standardization[0], "scale": series.standardization[1]},
        "raw_stats": raw_stats.to_dict(),
        "stats": sample_stats(series).to_dict(),
    }
    write_json(out / "ingest.json", doc)
    return series, doc


def stage_fit(series: ReturnSeries, families, out: Path) -> dict[str, FitResult]:
    fits: dict[str, FitResult] = {}
    for fam in families:
        if fam == "gh":
            continue
        fits[fam] = mle_fit(fam, series)
    if "gh" in families:
        nested = [fits[f] for f in ("nig", "skewt") if f in fits]
        fits["gh"] = fit_gh_over(nested, series)
    for fam in families:
        write_json(out / f"fit_{fam}.json", fits[fam].to_dict())
    return {f: fits[f] for f in families}


def stage_gof(series: ReturnSeries, fits: dict, cfg: RunConfig, out: Path, seed=None) -> dict:
    docs = {}
    for fam, fit in fits.items():
        rep = gof_report(series, fit.params, n_bins=cfg.chi2_bins, levels=tuple(cfg.gof_levels))
        doc = rep.to_dict()
        if cfg.bootstrap:
            doc["bootstrap"] = {
                "B": cfg.bootstrap,
                "statistic": cfg.statistic,
                "seed": seed,
                "p_value": bootstrap_pvalue(series.values, fam, fit.params, cfg.bootstrap,
                                            cfg.statistic, seed, n_bins=cfg.chi2_bins,
                                            workers=cfg.threads),
            }
        write_json(out / f"gof_{fam}.json", doc)
        docs[fam] = doc
    return docs


def stage_lrt(series: ReturnSeries, fits: dict, out: Path) -> dict:
    fits = dict(fits)
    for fam in ("nig", "skewt"):
        if fam not in fits:
            fits[fam] = mle_fit(fam, series)
    if "gh" not in fits:
        fits["gh"] = fit_gh_over([fits["nig"], fits["skewt"]], series)
    tests = [lr_test(fits["gh"], fits[f]).to_dict() for f in ("nig", "skewt")]
    doc = {"n": fits["gh"].n, "loglik": {f: fits[f].log_likelihood for f in ("gh", "nig", "skewt")},
           "tests": tests}
    write_json(out / "lrt.json", doc)
    return doc


def stage_tails(series: ReturnSeries, sides, cfg: RunConfig, out: Path) -> dict:
    docs = {}
    for side in sides:
        rep = tail_fit(series, side, n_tail_min=cfg.n_tail_min,
                       max_candidates=cfg.max_candidates, exhaustive=cfg.exhaustive)
        write_json(out / f"tails_{side}.json", rep.to_dict())
        write_ccdf_csv(out / f"ccdf_{side}.csv", tail_values(series, side))
        docs[side] = rep.to_dict(include_scan=False)
    return docs


def _hurst(cfg: RunConfig, series: ReturnSeries, fits: dict | None = None) -> float | None:
    h = str(cfg.hurst)
    if h == "dfa":
        return None
    if h == "stable":
        if not fits or "stable" not in fits:
            raise ValueError("hurst='stable' needs a stable fit")
        return 1.0 / fits["stable"].params.alpha
    return float(h)


def stage_scaling(series: ReturnSeries, cfg: RunConfig, out: Path, seed: int, fits=None) -> dict:
    day_len = int(series.day_lengths().min())
    scales = cfg.scales or default_scales(day_len)
    hurst = _hurst(cfg, series, fits)
    docs = {}
    hist_rows = []
    for mode in cfg.modes:
        s = series if mode == "raw" else reshuffle(series, mode, seed)
        rep = collapse_scan(s, scales, hurst, cfg.reference, mode=mode)
        conv = convergence_scan(s, scales, mode=mode)
        d = dfa(s)
        doc = rep.to_dict()
        doc["dfa_hurst"] = d.hurst
        doc["dfa_curve"] = [{"window": w, "F": f} for w, f in d.curve]
        doc["convergence"] = conv.collapse
        write_json(out / f"scaling_{mode}.json", doc)
        with open(out / f"collapse_{mode}.csv", "w") as fh:
            fh.write("scale,n,collapse_ks,convergence_ks,critical_0.05,critical_0.01\n")
            for i, n in enumerate(rep.scales):
                cv = conv.critical_values[i] or {}
                c05, c01 = (repr(cv[k]) if k in cv else "" for k in ("0.05", "0.01"))
                fh.write(f"{n},{rep.n_per_scale[i]},{rep.collapse[i]!r},{conv.collapse[i]!r},"
                         f"{c05},{c01}\n")
        if mode == "raw":
            hist_rows = rescaled_histograms(s, scales, rep.hurst)
        docs[mode] = doc
    write_histogram_csv(out / "histogram.csv", hist_rows)
    return docs


def _write_samples(path: Path, values: np.ndarray) -> None:
    with open(path, "w") as fh:
        fh.writelines(f"{v!r}\n" for v in values.tolist())


def synthetic_ticks(params, days: int, session: SessionSpec, seed: int, *,
                    start: dt.date = dt.date(2009, 1, 2), scale: float = 1e-4,
                    price0: float = 9300.0) -> list[str]:
    """Tick rows whose resampled log-returns are exactly ``scale`` times family draws.

    One tick sits on every grid instant; an extra off-grid tick with a noisy
    price is placed inside each interval and is always superseded by the next
    on-grid tick. Days run over consecutive weekdays.
    """
    rng = np.random.default_rng([seed, 1])
    k = session.n_instants
    draws = family_sample(params, days * (k - 1), seed)
    rows = []
    day = start
    price = price0
    for d in range(days):
        while day.weekday() >= 5:
            day += dt.timedelta(days=1)
        base = dt.datetime.combine(day, dt.time(0, 0))
        r = draws[d * (k - 1):(d + 1) * (k - 1)] * scale
        logp = np.log(price) + np.concatenate([[0.0], np.cumsum(r)])
        prices = np.exp(logp)
        jitter = rng.integers(1, session.interval_seconds, size=k - 1)
        noise = prices[:-1] * np.exp(rng.normal(0, scale, size=k - 1))
        pl, nl = prices.tolist(), noise.tolist()
        for i, off in enumerate(session.offsets().tolist()):
            t = base + dt.timedelta(seconds=off)
            rows.append(f"{t.isoformat()},{pl[i]!r}")
            if i < k - 1:
                rows.append(f"{(t + dt.timedelta(seconds=int(jitter[i]))).isoformat()},{nl[i]!r}")
        price = float(prices[-1]) * float(np.exp(rng.normal(0, 10 * scale)))
        day += dt.timedelta(days=1)
    return rows


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def cmd_ingest(args, cfg):
    stage_ingest(args.ticks, cfg, _out_dir(cfg))


def cmd_fit(args, cfg):
    series = load_returns(args.returns)
    fams = args.family or cfg.families
    stage_fit(series, fams, _out_dir(cfg))


def cmd_gof(args, cfg):
    series = load_returns(args.returns)
    seed = _require_seed(cfg, "gof --bootstrap") if cfg.bootstrap else cfg.seed
    fams = args.family or cfg.families
    fits = {}
    for fam in fams:
        fits[fam] = _fit_from_json(args.fit, fam) if args.fit else None
    missing = [f for f, v in fits.items() if v is None]
    if missing:
        fits.update(stage_fit(series, missing, _out_dir(cfg)))
    stage_gof(series, fits, cfg, _out_dir(cfg), seed)


def cmd_lrt(args, cfg):
    stage_lrt(load_returns(args.returns), {}, _out_dir(cfg))


def cmd_tails(args, cfg):
    sides = ["left", "right"] if args.side == "both" else [args.side]
    stage_tails(load_returns(args.returns), sides, cfg, _out_dir(cfg))


def cmd_scaling(args, cfg):
    seed = _require_seed(cfg, "scaling")
    stage_scaling(load_returns(args.returns), cfg, _out_dir(cfg), seed)


def cmd_simulate(args, cfg):
    seed = _require_seed(cfg, "simulate")
    values = {k: getattr(args, k) for k in ("lam", "alpha", "beta", "delta", "mu", "nu", "sigma")
              if getattr(args, k) is not None}
    if "lam" in values:
        values["lambda"] = values.pop("lam")
    params = make_params(args.family, **values)
    out = _out_dir(cfg)
    if args.ticks:
        rows = synthetic_ticks(params, args.days, cfg.session, seed)
        path = Path(args.output) if args.output else out / "ticks.csv"
        path.write_text("timestamp,price\n" + "\n".join(rows) + "\n")
    else:
        if args.n is None:
            raise UsageError("simulate needs --n (or --ticks)")
        path = Path(args.output) if args.output else out / f"samples_{args.family}.csv"
        _write_samples(path, family_sample(params, args.n, seed))


def run_pipeline(ticks_path: str, cfg: RunConfig) -> dict:
    seed = _require_seed(cfg, "pipeline")
    out = _out_dir(cfg)

    def stage(name, fn, *a):
        try:
            return fn(*a)
        except (ValueError, ArithmeticError) as exc:
            raise StageError(name, exc) from exc

    series, ingest_doc = stage("ingest", stage_ingest, ticks_path, cfg, out)
    fams = list(cfg.families)
    for need in ("nig", "skewt"):
        if "gh" in fams and need not in fams:
            fams.append(need)
    fits = stage("fit", stage_fit, series, fams, out)
    gof_docs = stage("gof", stage_gof, series, fits, cfg, out, seed)
    lrt_doc = stage("lrt", stage_lrt, series, fits, out) if "gh" in fits else None
    tails = stage("tails", stage_tails, series, ["left", "right"], cfg, out)
    scaling = stage("scaling", stage_scaling, series, cfg, out, seed, fits)
    report = {
        "version": __version__,
        "seed": seed,
        "config": cfg.to_dict(),
        "sample_statistics": ingest_doc["stats"],
        "raw_sample_statistics": ingest_doc["raw_stats"],
        "n": ingest_doc["n"],
        "days": ingest_doc["days"],
        "parameters": {f: {"params": {k: v for k, v in params_to_dict(r.params).items() if k != "family"},
                           "loglik": r.log_likelihood, "converged": r.converged}
                       for f, r in fits.items()},
        "goodness_of_fit": {f: d["statistics"] for f, d in gof_docs.items()},
        "critical_points": next(iter(gof_docs.values()))["critical_points"] if gof_docs else {},
        "likelihood_ratio": lrt_doc["tests"] if lrt_doc else [],
        "tails": tails,
        "scaling": {m: {"hurst": d["hurst"], "dfa_hurst": d["dfa_hurst"], "scales": d["scales"],
                        "collapse": d["collapse"], "convergence": d["convergence"]}
                    for m, d in scaling.items()},
        "files": sorted(p.name for p in out.iterdir() if p.is_file() and p.name != "report.json"),
    }
    write_json(out / "report.json", report)
    return report


def cmd_pipeline(args, cfg):
    run_pipeline(args.ticks, cfg)


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _csv_list(kind=str):
    def parse(text):
        try:
            return [kind(v) for v in text.split(",") if v.strip()]
        except ValueError as exc:
            raise argparse.ArgumentTypeError(str(exc)) from None
    return parse


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="JSON config file (sections per module)")
    common.add_argument("--out", help="output directory (default: current directory)")
    common.add_argument("--seed", type=int, help="random seed (required by randomized commands)")
    common.add_argument("--threads", type=int, help="worker cap; never changes results")
    common.add_argument("--log-level", default="WARNING")
    common.add_argument("--open-time", dest="open_time")
    common.add_argument("--close-time", dest="close_time")
    common.add_argument("--interval-seconds", dest="interval_seconds", type=int)

    p = _Parser(prog="hfreturns", description="Heavy-tailed return analysis toolkit.")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("ingest", parents=[common], help="ticks -> returns.csv + ingest.json")
    s.add_argument("ticks")
    s.add_argument("--deseasonalize", action="store_true", default=None)
    s.add_argument("--no-standardize", dest="standardize", action="store_false", default=None)
    s.set_defaults(func=cmd_ingest)

    s = sub.add_parser("fit", parents=[common], help="maximum-likelihood fits")
    s.add_argument("returns")
    s.add_argument("--family", action="append", choices=FAMILIES)
    s.set_defaults(func=cmd_fit)

    s = sub.add_parser("gof", parents=[common], help="goodness-of-fit statistics")
    s.add_argument("returns")
    s.add_argument("--family", action="append", choices=FAMILIES)
    s.add_argument("--fit", help="fit_<family>.json to test instead of refitting")
    s.add_argument("--chi2-bins", dest="chi2_bins", type=int)
    s.add_argument("--bootstrap", type=int, help="parametric bootstrap replicates (>= 99)")
    s.add_argument("--statistic", choices=("ks", "ad", "cvm", "chi2"))
    s.set_defaults(func=cmd_gof)

    s = sub.add_parser("lrt", parents=[common], help="GH vs NIG and skew-t likelihood ratios")
    s.add_argument("returns")
    s.set_defaults(func=cmd_lrt)

    s = sub.add_parser("tails", parents=[common], help="power-law tail fits")
    s.add_argument("returns")
    s.add_argument("--side", choices=("left", "right", "both"), default="both")
    s.add_argument("--n-tail-min", dest="n_tail_min", type=int)
    s.add_argument("--max-candidates", dest="max_candidates", type=int)
    s.add_argument("--exhaustive", action="store_true", default=None)
    s.set_defaults(func=cmd_tails)

    s = sub.add_parser("scaling", parents=[common], help="aggregation, DFA and reshuffles")
    s.add_argument("returns")
    s.add_argument("--scales", type=_csv_list(int))
    s.add_argument("--hurst", help="number, 'dfa', or 'stable' (1/alpha of a stable fit)")
    s.add_argument("--reference", choices=("standard_normal", "base_scale"))
    s.add_argument("--modes", type=_csv_list())
    s.set_defaults(func=cmd_scaling)

    s = sub.add_parser("simulate", parents=[common], help="synthetic samples or tick files")
    s.add_argument("--family", required=True, choices=FAMILIES)
    for name in ("alpha", "beta", "delta", "mu", "nu", "sigma"):
        s.add_argument(f"--{name}", type=float)
    s.add_argument("--lambda", dest="lam", type=float)
    s.add_argument("--n", type=int)
    s.add_argument("--ticks", action="store_true", help="emit a tick CSV instead of samples")
    s.add_argument("--days", type=int, default=5)
    s.add_argument("--output", help="output file path")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("pipeline", parents=[common], help="all stages on a tick file")
    s.add_argument("ticks")
    s.set_defaults(func=cmd_pipeline)
    return p


_CONFIG_KEYS = {f.name for f in fields(RunConfig)}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=getattr(logging, str(args.log_level).upper(), logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")
    overrides = {k: v for k, v in vars(args).items() if k in _CONFIG_KEYS}
    try:
        cfg = RunConfig.load(args.config, overrides)
        args.func(args, cfg)
    except UsageError as exc:
        print(f"hfreturns: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except StageError as exc:
        print(f"hfreturns: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL if isinstance(exc.original, ArithmeticError) else EXIT_VALIDATION
    except ArithmeticError as exc:
        print(f"hfreturns: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ValueError, OSError, json.JSONDecodeError, KeyError) as exc:
        print(f"hfreturns: error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
