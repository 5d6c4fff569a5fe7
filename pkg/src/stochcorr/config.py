"""Declarative run configuration.

Keys carrying physical quantities name their unit (``horizon_years``,
``sigma_per_sqrt_year``). Unknown keys are rejected at every level so a
typo cannot silently fall back to a default.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
from dataclasses import dataclass, field
from importlib import resources

from .circular import CorrelationModel, DiffusionKind, Mapping
from .harness import Baseline, SweepParameter, SweepSpec
from .inference import FitConfig
from .joint_distribution import AssetParams

__all__ = ["ConfigError", "AssetsConfig", "CorrelationConfig", "SweepConfig", "FitSection",
           "ForecastConfig", "RunConfig", "load_config", "default_config", "config_sha256"]


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class AssetsConfig:
    mu_per_year: float = 0.05
    sigma_per_sqrt_year: float = 0.10
    s0: tuple = (100.0, 100.0)
    barrier: tuple = (97.0, 97.0)

    def to_params(self) -> AssetParams:
        return AssetParams(self.mu_per_year, self.sigma_per_sqrt_year, tuple(self.s0),
                           tuple(self.barrier))


@dataclass(frozen=True)
class CorrelationConfig:
    kind: str = "VonMises"
    sigma_theta_per_sqrt_year: float = 1.0
    lambda_per_year: float = 1.0
    mu_angle_rad: float = 0.25 * math.pi
    mapping: str = "Cosine"
    theta0_rad: float = 0.375 * math.pi

    def to_model(self) -> CorrelationModel:
        return CorrelationModel(DiffusionKind(self.kind), self.sigma_theta_per_sqrt_year,
                                self.lambda_per_year, self.mu_angle_rad, Mapping(self.mapping))


@dataclass(frozen=True)
class SweepConfig:
    parameter: str
    values: tuple


@dataclass(frozen=True)
class FitSection:
    eta: float = 10.0
    eta_sensitivity: tuple = (1.0, 10.0, 100.0)
    bounds_rho: tuple = (0.01, 0.99)
    bounds_lambda: tuple = (1.0, 10.0)
    bounds_sigma: tuple = (0.5, 5.0)
    bounds_mu_rad: tuple = (0.0, 0.5 * math.pi)
    transition_convention: str = "quarter"
    diffusion_kind: str = "VonMises"
    regularizer_weight: float = 1e-3
    multistart: int = 3
    epsilon_floor: float = 1e-6

    def to_fit_config(self, eta=None) -> FitConfig:
        return FitConfig(eta=self.eta if eta is None else eta, bounds_rho=self.bounds_rho,
                         bounds_lambda=self.bounds_lambda, bounds_sigma=self.bounds_sigma,
                         bounds_mu=self.bounds_mu_rad,
                         transition_convention=self.transition_convention,
                         diffusion_kind=self.diffusion_kind,
                         regularizer_weight=self.regularizer_weight, multistart=self.multistart)


@dataclass(frozen=True)
class ForecastConfig:
    horizon_years: float = 2.0
    calibration_horizon_years: float = 1.0
    asset_mu_per_year: float = 0.05
    asset_sigma_per_sqrt_year: float = 0.10
    barrier: float = 100.0
    n_rho_draws: int = 2000
    interpolation_nodes: int = 33
    fpt_grid_points: int = 64


@dataclass(frozen=True)
class RunConfig:
    seed: int
    output_dir: str = "out"
    assets: AssetsConfig = AssetsConfig()
    correlation: CorrelationConfig = CorrelationConfig()
    horizons_years: tuple = tuple(round(0.1 * k, 10) for k in range(1, 12))
    n_rho_draws: int = 2000
    interpolation_nodes: int = 33
    fpt_grid_points: int = 64
    sweeps: tuple = ()
    fit: FitSection = FitSection()
    forecast: ForecastConfig = ForecastConfig()
    note: str = ""

    def baseline(self) -> Baseline:
        return Baseline(self.assets.to_params(), self.correlation.to_model(),
                        self.correlation.theta0_rad)

    def sweep_specs(self):
        return [SweepSpec(SweepParameter(s.parameter), s.values, self.horizons_years,
                          self.n_rho_draws, self.baseline(), self.seed,
                          interpolation_nodes=self.interpolation_nodes,
                          fpt_grid_points=self.fpt_grid_points)
                for s in self.sweeps]

    def with_overrides(self, seed=None, output_dir=None) -> "RunConfig":
        kw = {}
        if seed is not None:
            kw["seed"] = int(seed)
        if output_dir is not None:
            kw["output_dir"] = str(output_dir)
        return dataclasses.replace(self, **kw)

    def to_dict(self):
        return _to_plain(dataclasses.asdict(self))

    def canonical_json(self):
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_dict(cls, data) -> "RunConfig":
        cfg = _build(cls, data, "config")
        cfg.validate()
        return cfg

    def validate(self):
        if not isinstance(self.seed, int) or isinstance(self.seed, bool) or not 0 <= self.seed < 2 ** 64:
            raise ConfigError("seed must be an integer in [0, 2**64)")
        try:
            self.assets.to_params()
            self.correlation.to_model()
            self.fit.to_fit_config()
            self.sweep_specs()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        f = self.forecast
        if not (f.horizon_years > 0 and f.calibration_horizon_years > 0 and f.barrier > 0
                and f.asset_sigma_per_sqrt_year > 0 and f.n_rho_draws >= 2):
            raise ConfigError("forecast settings must be positive (n_rho_draws >= 2)")
        if not 0 < self.fit.epsilon_floor < 0.5:
            raise ConfigError("fit.epsilon_floor must lie in (0, 0.5)")


_NESTED = {"assets": AssetsConfig, "correlation": CorrelationConfig, "fit": FitSection,
           "forecast": ForecastConfig}


def _to_plain(x):
    if isinstance(x, dict):
        return {k: _to_plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_to_plain(v) for v in x]
    return x


def _coerce(value, default, where):
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{where}: expected a boolean")
        return value
    if isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{where}: expected an integer")
        return value
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{where}: expected a number")
        return float(value)
    if isinstance(default, str):
        if not isinstance(value, str):
            raise ConfigError(f"{where}: expected a string")
        return value
    if isinstance(default, tuple):
        if not isinstance(value, list):
            raise ConfigError(f"{where}: expected a list")
        return tuple(_coerce(v, type(default[0])() if default else 0.0, f"{where}[{i}]")
                     for i, v in enumerate(value))
    return value


def _build(cls, data, where):
    if not isinstance(data, dict):
        raise ConfigError(f"{where}: expected an object")
    fields = {f.name: f for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - set(fields))
    if unknown:
        raise ConfigError(f"{where}: unknown key(s) {', '.join(unknown)}")
    kw = {}
    for name, value in data.items():
        f = fields[name]
        key = f"{where}.{name}"
        if name in _NESTED and cls is RunConfig:
            kw[name] = _build(_NESTED[name], value, key)
        elif cls is RunConfig and name == "sweeps":
            if not isinstance(value, list):
                raise ConfigError(f"{key}: expected a list")
            kw[name] = tuple(_build(SweepConfig, s, f"{key}[{i}]") for i, s in enumerate(value))
        elif cls is SweepConfig:
            kw[name] = _coerce(value, "" if name == "parameter" else (0.0,), key)
        else:
            default = f.default
            if default is dataclasses.MISSING:
                default = 0
            kw[name] = _coerce(value, default, key)
    missing = [n for n, f in fields.items() if n not in kw and f.default is dataclasses.MISSING
               and f.default_factory is dataclasses.MISSING]
    if missing:
        raise ConfigError(f"{where}: missing required key(s) {', '.join(missing)}")
    try:
        return cls(**kw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from exc


def load_config(path) -> RunConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}: invalid JSON ({exc.msg})") from exc
    return RunConfig.from_dict(data)


def default_config() -> RunConfig:
    text = resources.files("stochcorr").joinpath("data/default_config.json").read_text("utf-8")
    return RunConfig.from_dict(json.loads(text))


def config_sha256(cfg: RunConfig) -> str:
    """Hash of the canonical JSON; the output directory does not change results."""
    d = cfg.to_dict()
    d.pop("output_dir")
    text = json.dumps(d, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode("utf-8")).hexdigest()
