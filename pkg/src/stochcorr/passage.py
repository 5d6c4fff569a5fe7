"""Killed densities, survival and first-passage probabilities in a wedge.

Two correlated Brownian motions ``X`` with drift ``m`` and volatilities
``s1, s2`` are killed at upper barriers ``b``. With distances ``d = b - X``
the linear map

    y = M d,   M = [[s2, -rho s1], [0, s1 sqrt(1 - rho^2)]],

turns ``w = y / K3`` (``K3 = s1 s2 sqrt(1 - rho^2)``) into a standard planar
Brownian motion with drift ``v = -M m / K3`` living in the wedge
``0 < phi < alpha``. The ray ``phi = 0`` is the second barrier and
``phi = alpha`` the first. In polar coordinates ``(r, phi)`` of ``w``

    p(w, t) = exp(v.(w - w0) - |v|^2 t / 2) (2 / (alpha t))
              exp(-(r^2 + r0^2) / (2 t)) sum_n sin(nu phi) sin(nu phi0) I_nu(r r0 / t),

``nu = n pi / alpha``. The barred radii of :class:`WedgeGeometry` are the
unnormalised ``|y| = K3 r``.

For the credit application ``X = -log S`` so default at ``S < B`` is an
upper crossing of ``-log B`` (see :func:`credit_geometry`).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Sequence

import numpy as np
from scipy import special as sps
from scipy.interpolate import BarycentricInterpolator

from .circular import CorrelationModel, DEFAULT_MAX_DT, sample_terminal_correlation
from .joint_distribution import AssetParams
from .special_functions import (
    ConvergenceError,
    QuadratureSpec,
    SeriesSpec,
    gauss_legendre,
    integrate_2d,
)

__all__ = [
    "WedgeGeometry",
    "TimeGrid2D",
    "FPTResult",
    "MixResult",
    "build_wedge_geometry",
    "credit_geometry",
    "wedge_kernel_H",
    "killed_density",
    "conditional_survival_probability",
    "first_passage_cdf",
    "first_passage_density",
    "boundary_flux",
    "conditional_fpt_density",
    "conditional_fpt_probability",
    "marginal_default_probability",
    "mix_over_correlation",
]

_BLOCK = 32
_NODES_PER_PANEL = 16
_MAX_PANELS = 64


@dataclass(frozen=True)
class WedgeGeometry:
    """Constants of the whitened killed process for one correlation level."""

    k1: float
    k2: float
    k3: float
    lambda_kill: float
    alpha: float
    r0_bar: float
    phi0: float
    rho: float
    barriers_transformed: tuple
    x0_transformed: tuple
    drift: tuple
    sigmas: tuple

    @property
    def r0(self):
        return self.r0_bar / self.k3

    @property
    def v(self):
        """Drift of the normalised planar motion ``w``."""
        return _whiten_matrix(self.rho, *self.sigmas) @ (-np.asarray(self.drift)) / self.k3

    def to_polar(self, x):
        """``(r_bar, phi)`` of points ``x`` (last axis of length 2)."""
        x = np.asarray(x, dtype=float)
        d = np.asarray(self.barriers_transformed) - x
        y = d @ _whiten_matrix(self.rho, *self.sigmas).T
        return np.hypot(y[..., 0], y[..., 1]), np.arctan2(y[..., 1], y[..., 0])

    def inside(self, x):
        x = np.asarray(x, dtype=float)
        b = np.asarray(self.barriers_transformed)
        return np.all(x < b, axis=-1)


def _whiten_matrix(rho, s1, s2):
    return np.array([[s2, -rho * s1], [0.0, s1 * math.sqrt(1.0 - rho * rho)]])


def build_wedge_geometry(rho, mu1, mu2, sigma1, sigma2, x0, barriers) -> WedgeGeometry:
    """Wedge constants for drifts ``mu``, volatilities ``sigma`` and upper barriers."""
    if not abs(rho) < 1:
        raise ValueError("wedge geometry requires |rho| < 1")
    if not (sigma1 > 0 and sigma2 > 0):
        raise ValueError("volatilities must be positive")
    x0 = tuple(float(v) for v in x0)
    barriers = tuple(float(v) for v in barriers)
    if not (x0[0] < barriers[0] and x0[1] < barriers[1]):
        raise ValueError("initial state must lie strictly below both barriers")
    om = 1.0 - rho * rho
    k3 = sigma1 * sigma2 * math.sqrt(om)
    k1 = (sigma2 * mu1 - rho * sigma1 * mu2) / (sigma1 ** 2 * sigma2 * om)
    k2 = (sigma1 * mu2 - rho * sigma2 * mu1) / (sigma2 ** 2 * sigma1 * om)
    lam = (sigma1 ** 2 * mu2 ** 2 - 2 * rho * sigma1 * sigma2 * mu1 * mu2
           + sigma2 ** 2 * mu1 ** 2) / (2.0 * k3 * k3)
    alpha = math.atan2(math.sqrt(om), -rho)
    d0 = np.subtract(barriers, x0)
    y0 = _whiten_matrix(rho, sigma1, sigma2) @ d0
    phi0 = min(max(math.atan2(y0[1], y0[0]), 0.0), alpha)
    return WedgeGeometry(k1=k1, k2=k2, k3=k3, lambda_kill=lam, alpha=alpha,
                         r0_bar=float(np.hypot(*y0)), phi0=phi0, rho=float(rho),
                         barriers_transformed=barriers, x0_transformed=x0,
                         drift=(float(mu1), float(mu2)),
                         sigmas=(float(sigma1), float(sigma2)))


def credit_geometry(rho, assets: AssetParams) -> WedgeGeometry:
    """Geometry of ``X = -log S``: drift ``-(mu - sigma^2/2)``, barriers ``-log B``."""
    m = -(assets.mu - 0.5 * assets.sigma ** 2)
    return build_wedge_geometry(
        rho, m, m, assets.sigma, assets.sigma,
        tuple(-math.log(s) for s in assets.s0),
        tuple(-math.log(b) for b in assets.barriers),
    )


# --------------------------------------------------------------------------
# Bessel sine series


def _nu(n, alpha):
    return n * (math.pi / alpha)


def _series(x, coeff: Callable, alpha, series: SeriesSpec, weight_power=0):
    """``sum_n coeff(n) * ive(nu_n, x)`` summed in blocks.

    ``coeff`` maps an integer array of orders (shape ``(B,)``) to an array
    broadcastable against ``x[..., None]``. Stops once the bound
    ``n^p * ive(nu_n, x)`` on the remaining terms falls below
    ``term_tol`` times the running sum of absolute terms, at every point.
    """
    x = np.asarray(x, dtype=float)
    total = np.zeros(x.shape)
    scale = np.zeros(x.shape)
    n0 = 1
    while n0 <= series.max_terms:
        n = np.arange(n0, min(n0 + _BLOCK, series.max_terms + 1))
        iv = sps.ive(_nu(n, alpha), x[..., None])
        terms = coeff(n) * iv
        total += terms.sum(axis=-1)
        scale += np.abs(terms).sum(axis=-1)
        bound = iv[..., -1] * float(n[-1]) ** weight_power
        if np.all(bound <= series.term_tol * scale):
            return total
        n0 = int(n[-1]) + 1
    raise ConvergenceError(
        f"Bessel sine series not converged after {series.max_terms} terms",
        value=total, error=float(np.max(bound)))


def wedge_kernel_H(r_bar, r0_bar, phi, phi0, t, geometry: WedgeGeometry,
                   series: SeriesSpec = SeriesSpec(), scaled=False):
    """``sum_n sin(nu phi) sin(nu phi0) I_nu(r_bar r0_bar / (K3^2 t))``.

    With ``scaled=True`` the common factor ``exp(-x)`` is removed, which is
    how every other routine consumes it. The unscaled value can overflow
    for large arguments.
    """
    if not t > 0:
        raise ValueError("t must be positive")
    alpha = geometry.alpha
    x = np.asarray(r_bar, dtype=float) * r0_bar / (geometry.k3 ** 2 * t)
    phi = np.asarray(phi, dtype=float)
    s0 = lambda n: np.sin(_nu(n, alpha) * phi0)
    h = _series(x, lambda n: np.sin(_nu(n, alpha) * phi[..., None]) * s0(n), alpha, series)
    if scaled:
        return h
    with np.errstate(over="ignore"):
        return h * np.exp(x)


def killed_density(x, t, geometry: WedgeGeometry, series: SeriesSpec = SeriesSpec()):
    """Sub-probability density at ``x`` of the process not yet killed by ``t``.

    ``x`` may be a pair or an array with a trailing axis of length 2; points
    on or beyond either barrier get density 0.
    """
    if not t > 0:
        raise ValueError("t must be positive")
    x = np.asarray(x, dtype=float)
    out = np.zeros(x.shape[:-1])
    ins = geometry.inside(x)
    if np.any(ins):
        xi = x[ins]
        r_bar, phi = geometry.to_polar(xi)
        phi = np.clip(phi, 0.0, geometry.alpha)
        k3 = geometry.k3
        h = wedge_kernel_H(r_bar, geometry.r0_bar, phi, geometry.phi0, t, geometry,
                           series, scaled=True)
        dx = xi - np.asarray(geometry.x0_transformed)
        expo = (geometry.k1 * dx[:, 0] + geometry.k2 * dx[:, 1] - geometry.lambda_kill * t
                - (r_bar - geometry.r0_bar) ** 2 / (2.0 * k3 * k3 * t))
        out[ins] = np.maximum(2.0 / (geometry.alpha * k3 * t) * np.exp(expo) * h, 0.0)
    return float(out) if out.ndim == 0 else out


# --------------------------------------------------------------------------
# survival


def _panels(lo, hi, width):
    lo = max(lo, 0.0)
    n = int(min(_MAX_PANELS, max(2, math.ceil((hi - lo) / width))))
    edges = np.linspace(lo, hi, n + 1)
    xs, ws = zip(*(gauss_legendre(_NODES_PER_PANEL, a, b) for a, b in zip(edges[:-1], edges[1:])))
    return np.concatenate(xs), np.concatenate(ws)


def _survival_polar(t, g: WedgeGeometry, series: SeriesSpec, quad: QuadratureSpec):
    r0, phi0, alpha = g.r0, g.phi0, g.alpha
    v = g.v
    vn = float(np.hypot(*v))
    st = math.sqrt(t)
    c = quad.tail_cut_sigmas
    r, wr = _panels(r0 - vn * t - c * st, r0 + vn * t + c * st, 0.5 * st)
    phi, wphi = gauss_legendre(2 * series.max_terms + 64, 0.0, alpha)
    proj = v[0] * np.cos(phi) + v[1] * np.sin(phi)
    # exp(r (v.e_phi - |v|)) <= 1; the exp(r |v|) part joins the radial exponent
    e = np.exp(r[:, None] * (proj[None, :] - vn)) * wphi[None, :]
    x = r * r0 / t

    def coeff(n):
        nu = _nu(n, alpha)
        a_n = e @ np.sin(np.outer(phi, nu))  # (n_r, B)
        return np.sin(nu * phi0)[None, :] * a_n

    s = _series(x, coeff, alpha, series)
    w0 = r0 * np.array([math.cos(phi0), math.sin(phi0)])
    expo = -(r - r0) ** 2 / (2.0 * t) + r * vn - float(v @ w0) - 0.5 * vn * vn * t
    return float(np.sum(wr * r * (2.0 / (alpha * t)) * np.exp(expo) * s))


def _survival_direct(t, g: WedgeGeometry, series: SeriesSpec, quad: QuadratureSpec):
    b1, b2 = g.barriers_transformed
    s1, s2 = g.sigmas
    m1, m2 = g.drift
    x01, x02 = g.x0_transformed
    c = quad.tail_cut_sigmas * math.sqrt(t)
    dom = ((x01 + m1 * t - c * s1, b1), (x02 + m2 * t - c * s2, b2))
    f = lambda a, b: killed_density((a, b), t, g, series)
    return integrate_2d(f, dom, quad)


def conditional_survival_probability(t, rho, assets: AssetParams,
                                     series: SeriesSpec = SeriesSpec(),
                                     quad: QuadratureSpec = QuadratureSpec(),
                                     method="polar"):
    """``P(both names stay above their barriers on [0, t] | rho)``.

    ``method="polar"`` integrates the killed density over the wedge with
    tensor Gauss-Legendre in ``(r, phi)``; ``"direct"`` uses adaptive 2D
    quadrature of :func:`killed_density` over the log-asset rectangle
    truncated at ``tail_cut_sigmas`` (slow, used as an oracle).
    """
    if not t > 0:
        raise ValueError("t must be positive")
    g = credit_geometry(rho, assets)
    if method == "polar":
        val = _survival_polar(t, g, series, quad)
    elif method == "direct":
        val = _survival_direct(t, g, series, quad)
    else:
        raise ValueError(f"unknown method {method!r}")
    return min(max(val, 0.0), 1.0)


# --------------------------------------------------------------------------
# single-name first passage


def first_passage_cdf(s, d, mu, sigma):
    """``P(tau <= s)`` for a BM with drift ``mu`` toward a level ``d > 0`` away.

    Evaluated in log space so ``exp(2 mu d / sigma^2)`` never overflows.
    """
    s = np.asarray(s, dtype=float)
    d = np.asarray(d, dtype=float)
    s, d = np.broadcast_arrays(s, d)
    out = np.zeros(s.shape)
    pos = s > 0
    if np.any(pos):
        ss, dd = s[pos], d[pos]
        root = sigma * np.sqrt(ss)
        a = sps.log_ndtr((mu * ss - dd) / root)
        b = 2.0 * mu * dd / sigma ** 2 + sps.log_ndtr((-dd - mu * ss) / root)
        out[pos] = np.exp(np.logaddexp(a, b))
    out = np.where(d <= 0, 1.0, np.clip(out, 0.0, 1.0))
    return float(out) if out.ndim == 0 else out


def first_passage_density(s, d, mu, sigma):
    """Inverse-Gaussian hitting-time density of :func:`first_passage_cdf`."""
    s = np.asarray(s, dtype=float)
    d = np.asarray(d, dtype=float)
    s, d = np.broadcast_arrays(s, d)
    out = np.zeros(s.shape)
    pos = s > 0
    ss, dd = s[pos], d[pos]
    out[pos] = dd / (sigma * np.sqrt(2.0 * math.pi * ss ** 3)) * np.exp(
        -(dd - mu * ss) ** 2 / (2.0 * sigma * sigma * ss))
    return float(out) if out.ndim == 0 else out


def marginal_default_probability(t, assets: AssetParams, name=0):
    """``P(tau_i <= t)`` for one GBM name with an absorbing lower barrier."""
    m = -(assets.mu - 0.5 * assets.sigma ** 2)
    d = math.log(assets.s0[name] / assets.barriers[name])
    return first_passage_cdf(t, d, m, assets.sigma)


# --------------------------------------------------------------------------
# joint first passage


def boundary_flux(r, t, geometry: WedgeGeometry, name, series: SeriesSpec = SeriesSpec()):
    """Rate at which probability leaves through one barrier, per unit ``r`` and time.

    ``name=0`` is the first barrier (the ray ``phi = alpha``), ``name=1`` the
    second (``phi = 0``). ``r`` is the normalised radius along the ray.
    """
    if not t > 0:
        raise ValueError("t must be positive")
    g = geometry
    r = np.asarray(r, dtype=float)
    alpha, r0, phi0 = g.alpha, g.r0, g.phi0
    v = g.v
    if name == 0:
        sign = lambda n: np.where(n % 2 == 1, 1.0, -1.0)
        e = np.array([math.cos(alpha), math.sin(alpha)])
    elif name == 1:
        sign = lambda n: np.ones(n.shape)
        e = np.array([1.0, 0.0])
    else:
        raise ValueError("name must be 0 or 1")
    x = r * r0 / t
    s = _series(x, lambda n: n * sign(n) * np.sin(_nu(n, alpha) * phi0), alpha, series,
                weight_power=1)
    w0 = r0 * np.array([math.cos(phi0), math.sin(phi0)])
    expo = (r * float(v @ e) - float(v @ w0) - 0.5 * float(v @ v) * t
            - (r - r0) ** 2 / (2.0 * t))
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(r > 0, math.pi / (alpha * alpha * t * r) * np.exp(expo) * s, 0.0)
    out = np.maximum(out, 0.0)
    return float(out) if out.ndim == 0 else out


def _remaining_distance(r, g: WedgeGeometry, name):
    """Distance of the surviving name when ``name`` hits at radius ``r``."""
    s1, s2 = g.sigmas
    root = math.sqrt(1.0 - g.rho ** 2)
    return (s2 if name == 0 else s1) * root * r


def _flux_nodes(t, g: WedgeGeometry, quad: QuadratureSpec):
    st = math.sqrt(t)
    vn = float(np.hypot(*g.v))
    return _panels(0.0, g.r0 + vn * t + quad.tail_cut_sigmas * st, 0.5 * st)


def _negligible(t, g: WedgeGeometry, name):
    # Gaussian bound on the hitting rate: distance from w0 to the ray.
    # exp(-50) keeps the skipped flux below 1e-16 even with the 1/t^{3/2}
    # prefactor, and spares the series the huge Bessel arguments at tiny t
    ang = g.alpha - g.phi0 if name == 0 else g.phi0
    dist = g.r0 * math.sin(min(ang, 0.5 * math.pi))
    drift = max(0.0, float(np.hypot(*g.v))) * t
    gap = dist - drift
    return gap > 0 and gap * gap / (2.0 * t) > 50.0


def conditional_fpt_density(t1, t2, rho, assets: AssetParams,
                            series: SeriesSpec = SeriesSpec(),
                            quad: QuadratureSpec = QuadratureSpec()):
    """Joint density of the two default times at ``(t1, t2)``, ``t1 != t2``.

    The earlier name exits through its ray at radius ``r``; the other then
    needs an inverse-Gaussian time to cover its remaining distance, so

        f(t1, t2) = int j(r, t_first) f_IG(t_second - t_first; d(r)) dr.
    """
    if not (t1 > 0 and t2 > 0):
        raise ValueError("times must be positive")
    if t1 == t2:
        raise ValueError("joint default density is singular on the diagonal t1 == t2; "
                         "integrate over a grid instead")
    g = credit_geometry(rho, assets)
    name, tf, ts = (0, t1, t2) if t1 < t2 else (1, t2, t1)
    if _negligible(tf, g, name):
        return 0.0
    r, w = _flux_nodes(tf, g, quad)
    j = boundary_flux(r, tf, g, name, series)
    m = -(assets.mu - 0.5 * assets.sigma ** 2)
    f = first_passage_density(ts - tf, _remaining_distance(r, g, name), m, assets.sigma)
    return float(np.sum(w * j * f))


@dataclass(frozen=True)
class TimeGrid2D:
    """Integration nodes for the two default times (``0`` is implicit)."""

    t1_points: tuple
    t2_points: tuple
    rule: str = "Trapezoid"

    def __post_init__(self):
        for name in ("t1_points", "t2_points"):
            pts = np.asarray(getattr(self, name), dtype=float)
            if pts.ndim != 1 or pts.size == 0:
                raise ValueError(f"{name} must be a non-empty sequence")
            if pts[0] <= 0 or np.any(np.diff(pts) <= 0):
                raise ValueError(f"{name} must be positive and strictly increasing")
            object.__setattr__(self, name, tuple(float(p) for p in pts))
        if self.rule != "Trapezoid":
            raise ValueError("only the Trapezoid rule is supported")

    @classmethod
    def uniform(cls, T1, T2, n=64):
        return cls(tuple(np.linspace(T1 / n, T1, n)), tuple(np.linspace(T2 / n, T2, n)))

    @classmethod
    def graded(cls, T1, T2, n=64, power=2.0):
        """Nodes ``T (k/n)^power``, dense where the exit flux peaks at short times."""
        u = (np.arange(1, n + 1) / n) ** power
        return cls(tuple(T1 * u), tuple(T2 * u))

    def refined(self):
        """Grid with every interval halved."""
        def halve(p):
            p = np.concatenate([[0.0], p])
            mid = 0.5 * (p[:-1] + p[1:])
            return tuple(np.sort(np.concatenate([mid, p[1:]])))
        return TimeGrid2D(halve(self.t1_points), halve(self.t2_points), self.rule)


@dataclass(frozen=True)
class FPTResult:
    value: float
    error_estimate: float
    metadata: dict = field(default_factory=dict)

    def __float__(self):
        return self.value


def _trapezoid(t, y):
    t = np.concatenate([[0.0], t])
    y = np.concatenate([[0.0], y])
    return float(np.sum(0.5 * (y[1:] + y[:-1]) * np.diff(t)))


def conditional_fpt_probability(T1, T2, rho, assets: AssetParams, grid: TimeGrid2D = None,
                                series: SeriesSpec = SeriesSpec(),
                                quad: QuadratureSpec = QuadratureSpec()) -> FPTResult:
    """``P(tau_1 <= T1, tau_2 <= T2 | rho)`` on a time grid.

    For each grid time of the first default the exit flux is combined with
    the exact inverse-Gaussian CDF of the other name, which integrates the
    second time coordinate in closed form; the first is integrated by the
    trapezoid rule. The error estimate is the change when every other
    node is dropped.
    """
    if not (T1 > 0 and T2 > 0):
        raise ValueError("horizons must be positive")
    grid = TimeGrid2D.graded(T1, T2) if grid is None else grid
    if grid.t1_points[-1] < T1 - 1e-12 or grid.t2_points[-1] < T2 - 1e-12:
        raise ValueError("grid must cover (0, T1] x (0, T2]")
    g = credit_geometry(rho, assets)
    m = -(assets.mu - 0.5 * assets.sigma ** 2)
    tmin = min(T1, T2)
    limits = (T2, T1)  # horizon of the surviving name

    fine, coarse = 0.0, 0.0
    n_nodes = []
    for name, pts in ((0, grid.t1_points), (1, grid.t2_points)):
        t = np.asarray([p for p in pts if p < tmin - 1e-14] + [tmin])
        y = np.zeros(t.size)
        for k, tk in enumerate(t):
            if _negligible(tk, g, name):
                continue
            r, w = _flux_nodes(tk, g, quad)
            j = boundary_flux(r, tk, g, name, series)
            rest = first_passage_cdf(limits[name] - tk, _remaining_distance(r, g, name),
                                     m, assets.sigma)
            y[k] = np.sum(w * j * rest)
        fine += _trapezoid(t, y)
        keep = np.arange(t.size)[::-1][::2][::-1]  # always keep the endpoint
        coarse += _trapezoid(t[keep], y[keep])
        n_nodes.append(int(t.size))
    value = min(max(fine, 0.0), 1.0)
    return FPTResult(value=value, error_estimate=abs(fine - coarse),
                     metadata={"n_t1": len(grid.t1_points), "n_t2": len(grid.t2_points),
                               "nodes_used": tuple(n_nodes), "rule": grid.rule})


# --------------------------------------------------------------------------
# mixing over the terminal correlation


class MixResult(NamedTuple):
    mean: float
    standard_error: float
    n_ok: int
    n_failed: int


def _chebyshev(lo, hi, n):
    k = np.arange(n)
    return 0.5 * (lo + hi) + 0.5 * (hi - lo) * np.cos((2 * k + 1) * math.pi / (2 * n))


def mix_over_correlation(quantity: Callable[[float], float], model: CorrelationModel = None,
                         theta0=None, T=None, n_draws=None, seed=None,
                         draws: Sequence[float] = None, interpolation_nodes: int = None,
                         failure_budget=0.01, max_dt=DEFAULT_MAX_DT) -> MixResult:
    """Mean and standard error of ``quantity(rho_T)`` over terminal draws.

    Draws come from :func:`sample_terminal_correlation` unless passed in.
    With ``interpolation_nodes`` set, ``quantity`` runs only at that many
    Chebyshev nodes in ``gamma = arccos(rho)`` spanning the draws and is
    interpolated elsewhere (smooth in ``gamma`` even where it is not in
    ``rho``). Exact mode evaluates each distinct draw once and tolerates
    failures up to ``failure_budget`` of the draws.
    """
    if draws is None:
        if n_draws is None or n_draws < 2:
            raise ValueError("n_draws must be >= 2")
        draws = sample_terminal_correlation(model, theta0, T, n_draws, seed, max_dt=max_dt)
    rho = np.asarray(draws, dtype=float)
    if rho.size < 2:
        raise ValueError("need at least two draws")

    if interpolation_nodes:
        gam = np.arccos(np.clip(rho, -1.0, 1.0))
        lo, hi = float(gam.min()), float(gam.max())
        if hi - lo < 1e-10:
            vals = np.full(rho.shape, float(quantity(float(rho[0]))))
        else:
            nodes = _chebyshev(lo, hi, int(interpolation_nodes))
            fv = np.array([float(quantity(math.cos(x))) for x in nodes])
            vals = BarycentricInterpolator(nodes, fv)(gam)
        return MixResult(float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(vals.size)),
                         int(vals.size), 0)

    cache = {}
    vals = np.empty(rho.size)
    failed = np.zeros(rho.size, dtype=bool)
    for i, r in enumerate(rho):
        key = float(r)
        if key not in cache:
            try:
                cache[key] = float(quantity(key))
            except (ConvergenceError, ValueError, ArithmeticError):
                cache[key] = None
        val = cache[key]
        if val is None:
            failed[i] = True
        else:
            vals[i] = val
    n_failed = int(failed.sum())
    if n_failed > failure_budget * rho.size:
        raise ConvergenceError(f"{n_failed} of {rho.size} draws failed", value=n_failed)
    ok = vals[~failed]
    se = float(ok.std(ddof=1) / math.sqrt(ok.size)) if ok.size > 1 else 0.0
    return MixResult(float(ok.mean()), se, int(ok.size), n_failed)
