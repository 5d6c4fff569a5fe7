"""One-parameter-at-a-time sweeps of the mixed joint-event probabilities.

Every cell draws ``rho_t`` for its horizon from the correlation diffusion
and averages the conditional joint default, survival and joint
first-passage probabilities. All cells of a sweep share the seed, so
comparisons across parameter values use common random numbers.
"""

from __future__ import annotations

import csv
import enum
import io
import json
import math
import os
from dataclasses import dataclass, field, replace

import numpy as np

from .circular import DEFAULT_MAX_DT, CorrelationModel, DiffusionKind, Mapping, sample_terminal_correlation
from .joint_distribution import AssetParams, conditional_joint_cdf
from .passage import (
    TimeGrid2D,
    conditional_fpt_probability,
    conditional_survival_probability,
    mix_over_correlation,
)
from .special_functions import ConvergenceError, QuadratureSpec, SeriesSpec

__all__ = [
    "SweepParameter",
    "Baseline",
    "SweepSpec",
    "SweepTable",
    "CSV_COLUMNS",
    "SWEEP_JSON_SCHEMA",
    "run_sweep",
    "run_cell",
    "emit_report",
    "read_sweep_csv",
]

CSV_COLUMNS = ("sweep_param", "param_value", "horizon_years", "p_jd", "p_jd_se", "p_surv",
               "p_surv_se", "p_fpt", "p_fpt_se", "n_draws", "seed")
DEFAULT_HORIZONS = tuple(round(0.1 * k, 10) for k in range(1, 12))
QUANTITIES = ("p_jd", "p_surv", "p_fpt")


class SweepParameter(str, enum.Enum):
    GBM_SIGMA = "GbmSigma"
    VON_SIGMA = "VonSigma"
    VON_LAMBDA = "VonLambda"


@dataclass(frozen=True)
class Baseline:
    """Asset and correlation settings held fixed while one parameter moves."""

    assets: AssetParams = AssetParams(0.05, 0.10, (100.0, 100.0), (97.0, 97.0))
    correlation: CorrelationModel = CorrelationModel(
        DiffusionKind.VON_MISES, 1.0, 1.0, 0.25 * math.pi, Mapping.COSINE)
    theta0: float = 0.375 * math.pi  # starts below the mean correlation cos(pi/4)

    def with_value(self, parameter: SweepParameter, value):
        value = float(value)
        if parameter is SweepParameter.GBM_SIGMA:
            return replace(self, assets=self.assets.replace(sigma=value))
        c = self.correlation
        if parameter is SweepParameter.VON_SIGMA:
            return replace(self, correlation=CorrelationModel(c.kind, value, c.lam, c.mu, c.mapping))
        return replace(self, correlation=CorrelationModel(c.kind, c.sigma_theta, value, c.mu,
                                                          c.mapping))


@dataclass(frozen=True)
class SweepSpec:
    parameter: SweepParameter
    values: tuple
    horizons: tuple = DEFAULT_HORIZONS
    n_rho_draws: int = 2000
    baseline: Baseline = Baseline()
    seed: int = 0
    quantities: tuple = QUANTITIES
    interpolation_nodes: int = 33
    fpt_grid_points: int = 64
    max_dt: float = DEFAULT_MAX_DT
    series: SeriesSpec = SeriesSpec()
    quad: QuadratureSpec = QuadratureSpec()

    def __post_init__(self):
        object.__setattr__(self, "parameter", SweepParameter(self.parameter))
        object.__setattr__(self, "values", tuple(float(v) for v in self.values))
        object.__setattr__(self, "horizons", tuple(float(v) for v in self.horizons))
        if not self.values:
            raise ValueError("sweep values must be non-empty")
        h = np.asarray(self.horizons)
        if h.size == 0 or np.any(h <= 0) or np.any(np.diff(h) <= 0):
            raise ValueError("horizons must be non-empty, positive and increasing")
        if self.n_rho_draws < 2:
            raise ValueError("n_rho_draws must be >= 2")
        unknown = set(self.quantities) - set(QUANTITIES)
        if unknown:
            raise ValueError(f"unknown quantities {sorted(unknown)}")


@dataclass
class SweepTable:
    rows: list
    failures: list = field(default_factory=list)

    def column(self, name, value=None, horizon=None):
        return [r[name] for r in self.rows
                if (value is None or r["param_value"] == value)
                and (horizon is None or r["horizon_years"] == horizon)]

    def cell(self, value, horizon):
        for r in self.rows:
            if r["param_value"] == value and r["horizon_years"] == horizon:
                return r
        raise KeyError((value, horizon))


def run_cell(baseline: Baseline, horizon, spec: SweepSpec):
    """The three mixed probabilities (with standard errors) for one cell."""
    draws = sample_terminal_correlation(baseline.correlation, baseline.theta0, horizon,
                                        spec.n_rho_draws, spec.seed, max_dt=spec.max_dt)
    # |rho| = 1 has measure zero but can appear after rounding
    draws = np.clip(draws, -1.0 + 1e-12, 1.0 - 1e-12)
    assets = baseline.assets
    out = {k: float("nan") for k in ("p_jd", "p_jd_se", "p_surv", "p_surv_se", "p_fpt",
                                      "p_fpt_se")}
    if "p_jd" in spec.quantities:
        b1, b2 = assets.barriers
        v = np.atleast_1d(conditional_joint_cdf(b1, b2, draws, assets, horizon))
        out["p_jd"], out["p_jd_se"] = float(v.mean()), float(v.std(ddof=1) / math.sqrt(v.size))
    if "p_surv" in spec.quantities:
        m = mix_over_correlation(
            lambda r: conditional_survival_probability(horizon, r, assets, spec.series, spec.quad),
            draws=draws, interpolation_nodes=spec.interpolation_nodes)
        out["p_surv"], out["p_surv_se"] = m.mean, m.standard_error
    if "p_fpt" in spec.quantities:
        grid = TimeGrid2D.graded(horizon, horizon, spec.fpt_grid_points)
        m = mix_over_correlation(
            lambda r: conditional_fpt_probability(horizon, horizon, r, assets, grid,
                                                  spec.series, spec.quad).value,
            draws=draws, interpolation_nodes=spec.interpolation_nodes)
        out["p_fpt"], out["p_fpt_se"] = m.mean, m.standard_error
    return out


def run_sweep(spec: SweepSpec) -> SweepTable:
    """Rows in sweep order (values outer, horizons inner); failed cells hold NaN."""
    rows, failures = [], []
    for value in spec.values:
        base = spec.baseline.with_value(spec.parameter, value)
        for h in spec.horizons:
            row = {"sweep_param": spec.parameter.value, "param_value": value,
                   "horizon_years": h}
            try:
                row.update(run_cell(base, h, spec))
            except (ConvergenceError, ValueError, ArithmeticError) as exc:
                row.update({k: float("nan") for k in CSV_COLUMNS[3:9]})
                failures.append({"param_value": value, "horizon_years": h, "error": str(exc)})
            row["n_draws"] = spec.n_rho_draws
            row["seed"] = spec.seed
            rows.append(row)
    return SweepTable(rows, failures)


SWEEP_JSON_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["schema_version", "provenance", "rows", "failures"],
    "properties": {
        "schema_version": {"const": 1},
        "provenance": {
            "type": "object",
            "required": ["config_sha256", "seed"],
            "properties": {"config_sha256": {"type": "string"}, "seed": {"type": "integer"}},
        },
        "rows": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "required": list(CSV_COLUMNS),
                "additionalProperties": False,
                "properties": {
                    "sweep_param": {"enum": [p.value for p in SweepParameter]},
                    "param_value": {"type": "number"},
                    "horizon_years": {"type": "number", "exclusiveMinimum": 0},
                    **{k: {"type": ["number", "null"]} for k in CSV_COLUMNS[3:9]},
                    "n_draws": {"type": "integer", "minimum": 2},
                    "seed": {"type": "integer"},
                },
            },
        },
        "failures": {"type": "array"},
    },
}


# Reductions inside BLAS and numpy can differ in the last bit between
# processes (heap alignment picks different SIMD paths), so emitted values
# are rounded well above working precision to keep files byte-identical.
SIGNIFICANT_DIGITS = 12


def round_sig(v):
    return float(format(float(v), f".{SIGNIFICANT_DIGITS}g"))


def _fmt(v):
    if isinstance(v, str):
        return v
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(round_sig(v))


def _json_value(v):
    if isinstance(v, float):
        return None if math.isnan(v) else round_sig(v)
    return v


def _provenance_lines(provenance):
    return [f"# {k}={provenance[k]}" for k in sorted(provenance)]


def emit_report(table: SweepTable, out_dir, stem="sweep", provenance=None,
                formats=("csv", "json")):
    """Write ``<stem>.csv`` and/or ``<stem>.json``; returns the paths written.

    The CSV starts with ``# key=value`` provenance comment lines followed by
    the fixed header; :func:`read_sweep_csv` skips them.
    """
    if not table.rows:
        raise ValueError("cannot emit an empty table")
    provenance = dict(provenance or {"config_sha256": "", "seed": int(table.rows[0]["seed"])})
    paths = []
    try:
        os.makedirs(out_dir, exist_ok=True)
        if "csv" in formats:
            path = os.path.join(out_dir, f"{stem}.csv")
            buf = io.StringIO()
            for line in _provenance_lines(provenance):
                buf.write(line + "\n")
            w = csv.writer(buf, lineterminator="\n")
            w.writerow(CSV_COLUMNS)
            for r in table.rows:
                w.writerow([_fmt(r[c]) for c in CSV_COLUMNS])
            with open(path, "w", encoding="utf-8", newline="") as fh:
                fh.write(buf.getvalue())
            paths.append(path)
        if "json" in formats:
            path = os.path.join(out_dir, f"{stem}.json")
            rows = [{c: _json_value(r[c]) for c in CSV_COLUMNS} for r in table.rows]
            doc = {"schema_version": 1, "provenance": provenance, "rows": rows,
                   "failures": table.failures}
            with open(path, "w", encoding="utf-8") as fh:
                json.dump(doc, fh, indent=2, sort_keys=True)
                fh.write("\n")
            paths.append(path)
    except OSError as exc:
        raise OSError(f"could not write report to {exc.filename or out_dir}: {exc.strerror}") from exc
    return paths


def read_sweep_csv(path) -> SweepTable:
    with open(path, encoding="utf-8") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    reader = csv.DictReader(lines)
    if tuple(reader.fieldnames or ()) != CSV_COLUMNS:
        raise ValueError(f"{path}: unexpected header {reader.fieldnames}")
    rows = []
    for r in reader:
        row = {"sweep_param": r["sweep_param"]}
        for c in CSV_COLUMNS[1:9]:
            row[c] = float(r[c])
        row["n_draws"] = int(r["n_draws"])
        row["seed"] = int(r["seed"])
        rows.append(row)
    return SweepTable(rows)
