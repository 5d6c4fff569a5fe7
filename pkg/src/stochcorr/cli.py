"""Command-line entry point: ``stochcorr simulate|fit|forecast|report``.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numerical
non-convergence (details in ``errors.json`` under the output directory).
"""

from __future__ import annotations

import argparse
import csv
import datetime as _dt
import io
import json
import logging
import math
import os
import re
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .config import ConfigError, RunConfig, config_sha256, default_config, load_config
from .harness import emit_report, round_sig, run_sweep
from .inference import (
    DependenceFit,
    calibrate_distance_to_default,
    fit_dependence_path,
    summarize_path,
    terminal_mixture_forecast,
)
from .special_functions import ConvergenceError
from .vasicek import VasicekObs

__all__ = ["ChargeOffSeries", "DataError", "ingest_csv", "main", "FIT_VERSION",
           "REPORT_COLUMNS", "FORECAST_COLUMNS"]

log = logging.getLogger("stochcorr")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4
FIT_VERSION = 1
REPORT_COLUMNS = ("category", "mean", "q95", "max", "at_bound_fraction", "kappa")
FORECAST_COLUMNS = ("category", "dd", "p_jd", "p_surv", "p_fpt", "kappa")


class DataError(ValueError):
    pass


@dataclass(frozen=True)
class ChargeOffSeries:
    category: str
    quarters: tuple  # (year, quarter) pairs
    rates: tuple
    n_floored: int = 0

    def __len__(self):
        return len(self.rates)

    def observations(self, epsilon_floor) -> VasicekObs:
        return VasicekObs.from_rates(self.rates, epsilon_floor=epsilon_floor)


_QUARTER_RE = re.compile(r"^(\d{4})\s*[Qq]([1-4])$")
_QUARTER_END = {(3, 31): 1, (6, 30): 2, (9, 30): 3, (12, 31): 4}


def _parse_quarter(text):
    text = text.strip()
    m = _QUARTER_RE.match(text)
    if m:
        return int(m.group(1)), int(m.group(2))
    try:
        d = _dt.date.fromisoformat(text)
    except ValueError:
        raise ValueError(f"unrecognised date {text!r} (expected 2008Q3 or YYYY-MM-DD)") from None
    q = _QUARTER_END.get((d.month, d.day))
    if q is None:
        raise ValueError(f"date {text} is not a quarter end")
    return d.year, q


def ingest_csv(path, percent=None, epsilon_floor=1e-6):
    """Parse ``date,<cat1>,<cat2>,...`` into one series per category.

    ``percent=None`` auto-detects per column: a maximum above 1 means the
    column is in percent. A header cell ending in ``(percent)`` or ``[%]``
    also selects percent mode for that column. Blank cells are rejected.
    """
    try:
        with open(path, encoding="utf-8-sig", newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise DataError(f"{path}: {exc.strerror}") from exc
    if not rows or not rows[0]:
        raise DataError(f"{path}: missing header row")
    header = [h.strip() for h in rows[0]]
    if header[0].lower() != "date" or len(header) < 2:
        raise DataError(f"{path}:1: header must be 'date,<category>,...'")
    cats, flagged = [], []
    for h in header[1:]:
        m = re.match(r"^(.*?)\s*(\(percent\)|\[%\])$", h, flags=re.IGNORECASE)
        cats.append(m.group(1) if m else h)
        flagged.append(bool(m))
    if len(set(cats)) != len(cats) or any(not c for c in cats):
        raise DataError(f"{path}:1: category names must be unique and non-empty")
    quarters, values = [], []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(header):
            raise DataError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
        try:
            q = _parse_quarter(row[0])
            vals = [float(c) for c in row[1:]]
        except ValueError as exc:
            raise DataError(f"{path}:{lineno}: {exc}") from None
        if not all(math.isfinite(v) for v in vals):
            raise DataError(f"{path}:{lineno}: non-finite rate")
        if quarters and q <= quarters[-1]:
            raise DataError(f"{path}:{lineno}: quarter {q[0]}Q{q[1]} is not after "
                            f"{quarters[-1][0]}Q{quarters[-1][1]} (input must be chronological)")
        quarters.append(q)
        values.append(vals)
    if not quarters:
        raise DataError(f"{path}: no data rows")
    data = np.asarray(values, dtype=float)
    out = []
    for j, cat in enumerate(cats):
        col = data[:, j]
        is_pct = flagged[j] or (percent if percent is not None else bool(col.max() > 1.0))
        if is_pct:
            col = col / 100.0
        if np.any(col < 0) or np.any(col >= 1):
            raise DataError(f"{path}: column {cat!r} has rates outside [0, 1) after scaling")
        n_floored = int(np.sum(col < epsilon_floor))
        if n_floored:
            log.warning("%s: floored %d zero/near-zero rates to %g", cat, n_floored, epsilon_floor)
        out.append(ChargeOffSeries(cat, tuple(quarters), tuple(float(v) for v in col), n_floored))
    return out


# ---------------------------------------------------------------- output helpers

def _provenance(cfg: RunConfig):
    return {"config_sha256": config_sha256(cfg), "seed": cfg.seed}


def _safe_name(category):
    return re.sub(r"[^A-Za-z0-9_.-]+", "_", category).strip("_") or "category"


def _write_text(path, text):
    try:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    except OSError as exc:
        raise OSError(f"could not write {path}: {exc.strerror}") from exc


def _write_json(path, doc):
    _write_text(path, json.dumps(doc, indent=2, sort_keys=True) + "\n")


def _write_csv(path, columns, rows, provenance):
    buf = io.StringIO()
    for k in sorted(provenance):
        buf.write(f"# {k}={provenance[k]}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([r[c] if isinstance(r[c], str) else repr(round_sig(r[c])) for c in columns])
    _write_text(path, buf.getvalue())


def _write_errors(out, cfg, errors):
    _write_json(os.path.join(out, "errors.json"), {"provenance": _provenance(cfg), "errors": errors})


# ---------------------------------------------------------------- commands

def cmd_simulate(cfg: RunConfig, only=None):
    specs = cfg.sweep_specs()
    if only:
        specs = [s for s in specs if s.parameter.value in only]
    if not specs:
        raise ConfigError("no sweeps selected")
    out = cfg.output_dir
    os.makedirs(out, exist_ok=True)
    errors = []
    for spec in specs:
        table = run_sweep(spec)
        emit_report(table, out, stem=f"sweep_{spec.parameter.value}", provenance=_provenance(cfg))
        errors += [dict(sweep_param=spec.parameter.value, **f) for f in table.failures]
    if errors:
        _write_errors(out, cfg, errors)
        return EXIT_NUMERIC
    return EXIT_OK


def _fit_one(args):
    series, cfg = args
    obs = series.observations(cfg.fit.epsilon_floor)
    main_fit = fit_dependence_path(obs, cfg.fit.to_fit_config())
    sens = {}
    for eta in cfg.fit.eta_sensitivity:
        f = (main_fit if eta == cfg.fit.eta
             else fit_dependence_path(obs, cfg.fit.to_fit_config(eta=eta)))
        sens[repr(float(eta))] = dict(summarize_path(f), converged=f.converged,
                                      psi=f.psi, objective_value=f.objective_value)
    return series, obs, main_fit, sens


def cmd_fit(cfg: RunConfig, data_path, percent=None, workers=1):
    series = ingest_csv(data_path, percent=percent, epsilon_floor=cfg.fit.epsilon_floor)
    out = cfg.output_dir
    os.makedirs(out, exist_ok=True)
    for s in series:
        if len(s) < 8:
            raise DataError(f"{data_path}: category {s.category!r} has fewer than 8 quarters")
    jobs = [(s, cfg) for s in series]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            results = list(ex.map(_fit_one, jobs))
    else:
        results = [_fit_one(j) for j in jobs]
    prov = _provenance(cfg)
    errors = []
    for s, obs, fit, sens in results:
        name = _safe_name(s.category)
        doc = {"version": FIT_VERSION, "category": s.category, "provenance": prov,
               "quarters": [f"{y}Q{q}" for y, q in s.quarters], "p_bar": obs.p_bar,
               "n_floored": obs.n_floored, "eta": cfg.fit.eta,
               "transition_convention": cfg.fit.transition_convention, "fit": fit.to_dict()}
        _write_json(os.path.join(out, f"fit_{name}.json"), doc)
        _write_json(os.path.join(out, f"eta_sensitivity_{name}.json"),
                    {"version": FIT_VERSION, "category": s.category, "provenance": prov,
                     "by_eta": sens})
        if not fit.converged:
            errors.append({"category": s.category, "error": "optimizer did not converge",
                           "message": fit.message})
    if errors:
        _write_errors(out, cfg, errors)
        return EXIT_NUMERIC
    return EXIT_OK


def _load_fits(fits_dir):
    try:
        names = sorted(n for n in os.listdir(fits_dir)
                       if n.startswith("fit_") and n.endswith(".json"))
    except OSError as exc:
        raise DataError(f"{fits_dir}: {exc.strerror}") from exc
    if not names:
        raise DataError(f"{fits_dir}: no fit_*.json artifacts found")
    docs = []
    for n in names:
        path = os.path.join(fits_dir, n)
        try:
            with open(path, encoding="utf-8") as fh:
                doc = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise DataError(f"{path}: unreadable fit artifact ({exc})") from exc
        if doc.get("version") != FIT_VERSION:
            raise DataError(f"{path}: unsupported fit version {doc.get('version')!r}")
        docs.append((doc, DependenceFit.from_dict(doc["fit"])))
    return docs


def cmd_report(cfg: RunConfig, fits_dir=None):
    out = cfg.output_dir
    os.makedirs(out, exist_ok=True)
    rows = []
    for doc, fit in _load_fits(fits_dir or out):
        s = summarize_path(fit)
        rows.append({"category": doc["category"], **{k: s[k] for k in REPORT_COLUMNS[1:]}})
    _write_csv(os.path.join(out, "summary.csv"), REPORT_COLUMNS, rows, _provenance(cfg))
    return EXIT_OK


def cmd_forecast(cfg: RunConfig, fits_dir=None, allow_unconverged=False):
    out = cfg.output_dir
    os.makedirs(out, exist_ok=True)
    f = cfg.forecast
    fit_cfg = cfg.fit.to_fit_config()
    rows, errors = [], []
    for doc, fit in _load_fits(fits_dir or out):
        calib = calibrate_distance_to_default(doc["p_bar"], f.asset_sigma_per_sqrt_year,
                                              f.asset_mu_per_year, f.calibration_horizon_years,
                                              f.barrier)
        try:
            fc = terminal_mixture_forecast(fit, calib, f.horizon_years, f.n_rho_draws, cfg.seed,
                                           fit_cfg, f.interpolation_nodes, f.fpt_grid_points,
                                           allow_unconverged=allow_unconverged)
        except ConvergenceError as exc:
            errors.append({"category": doc["category"], "error": str(exc)})
            continue
        rows.append({"category": doc["category"], "dd": calib.dd, "p_jd": fc.p_jd,
                     "p_surv": fc.p_surv, "p_fpt": fc.p_fpt,
                     "kappa": fit.kappa})
    _write_csv(os.path.join(out, "forecast.csv"), FORECAST_COLUMNS, rows, _provenance(cfg))
    if errors:
        _write_errors(out, cfg, errors)
        return EXIT_NUMERIC
    return EXIT_OK


# ---------------------------------------------------------------- argument parsing

def _seed(text):
    v = int(text)
    if not 0 <= v < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must be a u64")
    return v


def _common(**kw):
    # flags are accepted before or after the subcommand
    c = argparse.ArgumentParser(add_help=False, **kw)
    c.add_argument("--config", help="run configuration JSON (default: bundled baseline)")
    c.add_argument("--seed", type=_seed, help="override the configured seed")
    c.add_argument("--out", help="output directory (overrides config output_dir)")
    c.add_argument("-v", "--verbose", action="store_true")
    return c


def build_parser():
    common = _common(argument_default=argparse.SUPPRESS)
    p = argparse.ArgumentParser(prog="stochcorr", parents=[_common()],
                                description="Stochastic-correlation credit risk toolkit")
    sub = p.add_subparsers(dest="command", required=True)
    s = sub.add_parser("simulate", parents=[common], help="run the configured sweeps")
    s.add_argument("--only", action="append", metavar="PARAM",
                   help="restrict to a sweep parameter (repeatable)")
    s = sub.add_parser("fit", parents=[common], help="fit latent correlation paths")
    s.add_argument("--data", required=True, help="charge-off CSV")
    s.add_argument("--percent", action="store_true", default=None,
                   help="treat all rate columns as percent")
    s.add_argument("--workers", type=int, default=1)
    s = sub.add_parser("forecast", parents=[common], help="terminal-mixture forecasts")
    s.add_argument("--fits", help="directory with fit_*.json (default: output dir)")
    s.add_argument("--allow-unconverged", action="store_true")
    s = sub.add_parser("report", parents=[common], help="path summaries per category")
    s.add_argument("--fits", help="directory with fit_*.json (default: output dir)")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config) if args.config else default_config()
        cfg = cfg.with_overrides(seed=args.seed, output_dir=args.out)
        cfg.validate()
        if args.command == "simulate":
            return cmd_simulate(cfg, args.only)
        if args.command == "fit":
            return cmd_fit(cfg, args.data, args.percent, args.workers)
        if args.command == "forecast":
            return cmd_forecast(cfg, args.fits, args.allow_unconverged)
        return cmd_report(cfg, args.fits)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ConvergenceError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
