"""Penalised likelihood for a latent dependence path, plus forecasting.

The default-rate proxy ``c_t`` is Vasicek with level ``p_bar`` and a latent
correlation ``rho_t``. The angle ``phi_t = arccos(sqrt(rho_t))`` follows a
circular diffusion with parameters ``psi`` and the estimate maximises

    sum_t l_Vas(c_t; rho_t) + sum_{t>=2} log p_psi(phi_t | phi_{t-1})
      + sum_t log |d phi_t / d rho_t| - eta sum_{t>=2} (rho_t - rho_{t-1})^2 - pi(psi)

over the path and ``psi`` under box constraints.
"""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import optimize

from .circular import (
    DEFAULT_MAX_DT,
    CorrelationModel,
    DiffusionKind,
    Mapping,
    sample_terminal_correlation,
    transition_logpdf_and_grads,
)
from .joint_distribution import AssetParams, conditional_joint_cdf
from .passage import (
    TimeGrid2D,
    conditional_fpt_probability,
    conditional_survival_probability,
    mix_over_correlation,
)
from .special_functions import ConvergenceError, std_normal_cdf, std_normal_quantile
from .vasicek import VasicekObs, vasicek_loglik, vasicek_loglik_grad

__all__ = [
    "FitConfig",
    "DependenceFit",
    "DDCalibration",
    "Forecast",
    "penalized_objective",
    "penalized_objective_grad",
    "fit_dependence_path",
    "summarize_path",
    "calibrate_distance_to_default",
    "terminal_mixture_forecast",
]

log = logging.getLogger(__name__)

_AT_BOUND_TOL = 1e-4


@dataclass(frozen=True)
class FitConfig:
    """Estimation settings; defaults are documented choices, not data-driven.

    ``transition_convention="quarter"`` evaluates transitions at ``dt = 1``
    with diffusion time measured in quarters; ``"year"`` uses ``dt = 0.25``
    with time in years.
    """

    eta: float = 10.0
    bounds_rho: tuple = (0.01, 0.99)
    bounds_lambda: tuple = (1.0, 10.0)
    bounds_sigma: tuple = (0.5, 5.0)
    bounds_mu: tuple = (0.0, 0.5 * math.pi)
    transition_convention: str = "quarter"
    diffusion_kind: DiffusionKind = DiffusionKind.VON_MISES
    regularizer_weight: float = 1e-3
    optimizer_tol: float = 1e-8
    max_iter: int = 2000
    multistart: int = 3
    n_modes: int = 16

    def __post_init__(self):
        object.__setattr__(self, "diffusion_kind", DiffusionKind(self.diffusion_kind))
        for name in ("bounds_rho", "bounds_lambda", "bounds_sigma", "bounds_mu"):
            lo, hi = (float(v) for v in getattr(self, name))
            if not lo < hi:
                raise ValueError(f"{name} must be an increasing pair")
            object.__setattr__(self, name, (lo, hi))
        lo, hi = self.bounds_rho
        if not (0 < lo and hi < 1):
            raise ValueError("bounds_rho must lie inside (0, 1)")
        if self.bounds_lambda[0] < 0 or self.bounds_sigma[0] <= 0:
            raise ValueError("lambda bounds must be >= 0 and sigma bounds > 0")
        if self.eta < 0 or self.regularizer_weight < 0:
            raise ValueError("eta and regularizer_weight must be >= 0")
        if not self.optimizer_tol > 0:
            raise ValueError("optimizer_tol must be positive")
        if self.transition_convention not in ("quarter", "year"):
            raise ValueError("transition_convention must be 'quarter' or 'year'")
        if not 1 <= self.multistart <= 3:
            raise ValueError("multistart must be 1, 2 or 3")

    @property
    def dt_obs(self):
        return 1.0 if self.transition_convention == "quarter" else 0.25

    @property
    def years_per_time_unit(self):
        return 0.25 if self.transition_convention == "quarter" else 1.0

    @property
    def psi_names(self):
        if self.diffusion_kind is DiffusionKind.VON_MISES:
            return ("lambda", "sigma", "mu")
        return ("sigma",)

    @property
    def psi_bounds(self):
        if self.diffusion_kind is DiffusionKind.VON_MISES:
            return [self.bounds_lambda, self.bounds_sigma, self.bounds_mu]
        return [self.bounds_sigma]


@dataclass
class DependenceFit:
    rho_path: np.ndarray
    psi: dict
    objective_value: float
    converged: bool
    at_bound_fraction: float
    kappa: float = float("nan")
    diffusion_kind: DiffusionKind = DiffusionKind.VON_MISES
    n_iterations: int = 0
    start: str = ""
    message: str = ""
    objective_trace: list = field(default_factory=list)

    def model(self, config: FitConfig = None) -> CorrelationModel:
        """The fitted angle diffusion (squared-cosine mapping)."""
        if self.diffusion_kind is DiffusionKind.VON_MISES:
            return CorrelationModel(DiffusionKind.VON_MISES, self.psi["sigma"],
                                    self.psi["lambda"], self.psi["mu"],
                                    Mapping.COSINE_SQUARED)
        return CorrelationModel(DiffusionKind.CBM, self.psi["sigma"], 0.0, 0.0,
                                Mapping.COSINE_SQUARED)

    def to_dict(self):
        return {
            "rho_path": [float(v) for v in self.rho_path],
            "psi": {k: float(v) for k, v in self.psi.items()},
            "objective_value": float(self.objective_value),
            "converged": bool(self.converged),
            "at_bound_fraction": float(self.at_bound_fraction),
            "kappa": None if math.isnan(self.kappa) else float(self.kappa),
            "diffusion_kind": self.diffusion_kind.value,
            "n_iterations": int(self.n_iterations),
            "start": self.start,
            "message": self.message,
        }

    @classmethod
    def from_dict(cls, d):
        kappa = d.get("kappa")
        return cls(rho_path=np.asarray(d["rho_path"], dtype=float), psi=dict(d["psi"]),
                   objective_value=float(d["objective_value"]), converged=bool(d["converged"]),
                   at_bound_fraction=float(d["at_bound_fraction"]),
                   kappa=float("nan") if kappa is None else float(kappa),
                   diffusion_kind=DiffusionKind(d["diffusion_kind"]),
                   n_iterations=int(d.get("n_iterations", 0)), start=d.get("start", ""),
                   message=d.get("message", ""))


def _psi_vector(psi, config: FitConfig):
    if isinstance(psi, dict):
        return np.array([float(psi[k]) for k in config.psi_names])
    psi = np.atleast_1d(np.asarray(psi, dtype=float))
    if psi.size != len(config.psi_names):
        raise ValueError(f"psi must have entries {config.psi_names}")
    return psi


def _psi_model(psi_vec, config: FitConfig):
    if config.diffusion_kind is DiffusionKind.VON_MISES:
        lam, sig, mu = psi_vec
        return CorrelationModel(DiffusionKind.VON_MISES, sig, lam, mu, Mapping.COSINE_SQUARED)
    return CorrelationModel(DiffusionKind.CBM, psi_vec[0], 0.0, 0.0, Mapping.COSINE_SQUARED)


def _regularizer(psi_vec, config: FitConfig):
    w = config.regularizer_weight
    if w == 0:
        return 0.0
    named = dict(zip(config.psi_names, psi_vec))
    pen = (math.log(named["sigma"]) - math.log(0.5 * sum(config.bounds_sigma))) ** 2
    if "lambda" in named:
        pen += (math.log(max(named["lambda"], 1e-300))
                - math.log(0.5 * sum(config.bounds_lambda))) ** 2
    return w * pen


def _check_path(rho, obs: VasicekObs, config: FitConfig):
    rho = np.asarray(rho, dtype=float)
    if rho.shape != (len(obs),):
        raise ValueError("rho path length must equal the number of observations")
    lo, hi = config.bounds_rho
    if np.any(rho < lo - 1e-12) or np.any(rho > hi + 1e-12):
        raise ValueError("rho path outside bounds_rho")
    return rho


def _transition_terms(phi, psi_vec, config: FitConfig):
    if phi.size < 2:
        return 0.0, np.zeros(phi.size)
    model = _psi_model(psi_vec, config)
    lp, d_new, d_old = transition_logpdf_and_grads(phi[1:], phi[:-1], model, config.dt_obs,
                                                   n_modes=config.n_modes)
    grad = np.zeros(phi.size)
    grad[1:] += d_new
    grad[:-1] += d_old
    return float(lp.sum()), grad


def penalized_objective(rho_path, psi, obs: VasicekObs, config: FitConfig = FitConfig()):
    """Penalised log-likelihood of a latent path and diffusion parameters."""
    return _objective(rho_path, psi, obs, config, with_grad=False)


def penalized_objective_grad(rho_path, psi, obs: VasicekObs, config: FitConfig = FitConfig()):
    """Objective with its gradient: ``(value, d/d rho, d/d psi)``.

    The path gradient is analytic; the ``psi`` gradient uses central
    differences of the transition and regulariser terms.
    """
    return _objective(rho_path, psi, obs, config, with_grad=True)


def _objective(rho_path, psi, obs, config, with_grad):
    rho = _check_path(rho_path, obs, config)
    psi_vec = _psi_vector(psi, config)
    phi = np.arccos(np.sqrt(rho))
    val = float(np.sum(vasicek_loglik(obs.rates, obs.p_bar, rho)))
    trans, dtrans = _transition_terms(phi, psi_vec, config)
    # log |d phi / d rho| = -log 2 - log(rho (1 - rho)) / 2
    jac = -math.log(2.0) - 0.5 * np.log(rho * (1.0 - rho))
    diff = np.diff(rho)
    val += trans + float(jac.sum()) - config.eta * float(diff @ diff) - _regularizer(psi_vec, config)
    if not with_grad:
        return val
    dphi = -0.5 / np.sqrt(rho * (1.0 - rho))
    g = np.asarray(vasicek_loglik_grad(obs.rates, obs.p_bar, rho), dtype=float).copy()
    g += dtrans * dphi
    g += -0.5 / rho + 0.5 / (1.0 - rho)
    g[1:] -= 2.0 * config.eta * diff
    g[:-1] += 2.0 * config.eta * diff
    gpsi = np.zeros(psi_vec.size)
    for i, (lo, hi) in enumerate(config.psi_bounds):
        h = 1e-6 * max(1.0, abs(psi_vec[i]))
        up, dn = psi_vec.copy(), psi_vec.copy()
        up[i] = min(hi, psi_vec[i] + h)
        dn[i] = max(lo, psi_vec[i] - h)
        fu = _transition_terms(phi, up, config)[0] - _regularizer(up, config)
        fd = _transition_terms(phi, dn, config)[0] - _regularizer(dn, config)
        gpsi[i] = (fu - fd) / (up[i] - dn[i])
    return val, g, gpsi


def _const_rho_mle(obs: VasicekObs, config: FitConfig):
    lo, hi = config.bounds_rho
    res = optimize.minimize_scalar(
        lambda r: -float(np.sum(vasicek_loglik(obs.rates, obs.p_bar, r))),
        bounds=(lo, hi), method="bounded", options={"xatol": 1e-10})
    return float(res.x)


def _pointwise_mle(obs: VasicekObs, config: FitConfig):
    lo, hi = config.bounds_rho
    grid = np.linspace(lo, hi, 197)
    ll = vasicek_loglik(obs.rates[:, None], obs.p_bar, grid[None, :])
    return grid[np.argmax(ll, axis=1)]


def _starts(obs: VasicekObs, config: FitConfig):
    lo, hi = config.bounds_rho
    flat = _const_rho_mle(obs, config)
    high = float(np.clip(np.quantile(_pointwise_mle(obs, config), 0.9), lo, hi))
    out = [("flat_mle", flat), ("lower_bound", lo), ("high_q90", high)]
    return out[: config.multistart]


def _initial_psi(level, config: FitConfig):
    if config.diffusion_kind is DiffusionKind.VON_MISES:
        mu = float(np.clip(math.acos(math.sqrt(level)), *config.bounds_mu))
        lam = float(np.clip(2.0, *config.bounds_lambda))
        sig = float(np.clip(1.0, *config.bounds_sigma))
        return np.array([lam, sig, mu])
    return np.array([float(np.clip(1.0, *config.bounds_sigma))])


def fit_dependence_path(obs: VasicekObs, config: FitConfig = FitConfig()) -> DependenceFit:
    """Box-constrained L-BFGS-B ascent from up to three starting paths.

    Non-convergence is reported through ``converged=False``; the best
    objective across starts is returned.
    """
    n = len(obs)
    if n < 8:
        raise ValueError("need at least 8 observations")
    bounds = [config.bounds_rho] * n + config.psi_bounds
    best = None
    for name, level in _starts(obs, config):
        x0 = np.concatenate([np.full(n, level), _initial_psi(level, config)])
        trace = []
        last = {}

        def fun(x):
            try:
                v, g, gp = penalized_objective_grad(x[:n], x[n:], obs, config)
            except (ConvergenceError, ValueError) as exc:
                log.debug("objective failed: %s", exc)
                v, g, gp = -1e300, np.zeros(n), np.zeros(x.size - n)
            last["x"], last["v"] = x.copy(), v
            return -v, -np.concatenate([g, gp])

        def record(xk):
            if "x" in last and np.array_equal(xk, last["x"]):
                trace.append(last["v"])
            else:
                trace.append(-fun(xk)[0])

        res = optimize.minimize(
            fun, x0, jac=True, method="L-BFGS-B", bounds=bounds, callback=record,
            options={"maxiter": config.max_iter, "ftol": config.optimizer_tol * 1e-3,
                     "gtol": config.optimizer_tol, "maxcor": 20})
        val = -float(res.fun)
        if best is None or val > best[0]:
            best = (val, res, name, trace)
    val, res, name, trace = best
    rho = np.clip(res.x[:n], *config.bounds_rho)
    psi = dict(zip(config.psi_names, (float(v) for v in res.x[n:])))
    kappa = (2.0 * psi["lambda"] / psi["sigma"] ** 2
             if config.diffusion_kind is DiffusionKind.VON_MISES else float("nan"))
    at_lo = float(np.mean(rho <= config.bounds_rho[0] + _AT_BOUND_TOL))
    return DependenceFit(rho_path=rho, psi=psi, objective_value=val, converged=bool(res.success),
                         at_bound_fraction=at_lo, kappa=kappa,
                         diffusion_kind=config.diffusion_kind, n_iterations=int(res.nit),
                         start=name, message=str(res.message), objective_trace=trace)


def summarize_path(fit: DependenceFit, lower_bound=None):
    """Mean, 95th percentile, maximum, share at the lower bound and kappa."""
    rho = np.asarray(fit.rho_path, dtype=float)
    at = fit.at_bound_fraction if lower_bound is None else float(
        np.mean(rho <= lower_bound + _AT_BOUND_TOL))
    return {
        "mean": float(rho.mean()),
        "q95": float(np.quantile(rho, 0.95)),
        "max": float(rho.max()),
        "at_bound_fraction": at,
        "kappa": fit.kappa,
    }


@dataclass(frozen=True)
class DDCalibration:
    dd: float
    s0: float
    b: float
    mu: float
    sigma: float
    T: float

    def assets(self) -> AssetParams:
        return AssetParams(self.mu, self.sigma, (self.s0, self.s0), (self.b, self.b))

    def implied_default_probability(self):
        z = (math.log(self.b / self.s0) - (self.mu - 0.5 * self.sigma ** 2) * self.T) / (
            self.sigma * math.sqrt(self.T))
        return float(std_normal_cdf(z))


def calibrate_distance_to_default(p_bar, sigma, mu, T, b=100.0) -> DDCalibration:
    """Initial asset value that makes ``P(S_T <= B) = p_bar`` under GBM."""
    if not 0 < p_bar < 1:
        raise ValueError("p_bar must lie strictly inside (0, 1)")
    if not (sigma > 0 and T > 0):
        raise ValueError("sigma and T must be positive")
    dd = -std_normal_quantile(p_bar)
    s0 = b * math.exp(dd * sigma * math.sqrt(T) - (mu - 0.5 * sigma ** 2) * T)
    return DDCalibration(dd=float(dd), s0=s0, b=float(b), mu=float(mu), sigma=float(sigma),
                         T=float(T))


@dataclass(frozen=True)
class Forecast:
    p_jd: float
    p_jd_se: float
    p_surv: float
    p_surv_se: float
    p_fpt: float
    p_fpt_se: float
    n_draws: int
    theta0: float

    def as_dict(self):
        return asdict(self)


def terminal_mixture_forecast(fit: DependenceFit, calib: DDCalibration, T, n_draws, seed,
                              config: FitConfig = FitConfig(), interpolation_nodes=33,
                              fpt_grid_points=64, allow_unconverged=False) -> Forecast:
    """Draw ``rho_T`` from the fitted diffusion and average the conditional events.

    The angle starts at ``arccos(sqrt(rho_hat_T))``; ``T`` is in years and
    is converted to the diffusion's time unit. Draws are clipped to
    ``config.bounds_rho`` before the conditional evaluations.
    """
    if not T > 0:
        raise ValueError("T must be positive")
    if not fit.converged and not allow_unconverged:
        raise ConvergenceError("dependence fit did not converge; pass allow_unconverged=True")
    unit = config.years_per_time_unit
    theta0 = math.acos(math.sqrt(float(fit.rho_path[-1])))
    draws = sample_terminal_correlation(fit.model(config), theta0, T / unit, n_draws, seed,
                                        max_dt=DEFAULT_MAX_DT / unit)
    draws = np.clip(draws, *config.bounds_rho)
    assets = calib.assets()
    b = calib.b
    jd = np.atleast_1d(conditional_joint_cdf(b, b, draws, assets, T))
    grid = TimeGrid2D.graded(T, T, fpt_grid_points)
    surv = mix_over_correlation(lambda r: conditional_survival_probability(T, r, assets),
                                draws=draws, interpolation_nodes=interpolation_nodes)
    fpt = mix_over_correlation(lambda r: conditional_fpt_probability(T, T, r, assets, grid).value,
                               draws=draws, interpolation_nodes=interpolation_nodes)
    return Forecast(p_jd=float(jd.mean()), p_jd_se=float(jd.std(ddof=1) / math.sqrt(jd.size)),
                    p_surv=surv.mean, p_surv_se=surv.standard_error,
                    p_fpt=fpt.mean, p_fpt_se=fpt.standard_error, n_draws=int(n_draws),
                    theta0=theta0)
