"""Joint law of two GBM asset values at a fixed horizon.

Conditionally on the correlation ``rho`` the log assets are bivariate
normal. Mixing over a density ``p(gamma)`` of the correlation angle
``gamma = arccos(rho)`` on ``(0, pi)`` gives

    f(s1, s2) = int_0^pi exp(g(gamma)) dgamma,
    g(gamma)  = -log(2 pi s^2 t sin(gamma) s1 s2) + log p(gamma)
                - (a - 2 b cos(gamma) + c) / (2 d sin(gamma)^2),

with ``a = L1^2 s^2``, ``b = L1 L2 s^2``, ``c = L2^2 s^2``, ``d = s^4 t`` and
``L_i`` the centred log moneyness. The Laplace route expands ``g`` around
its interior maximiser; stationary points of the ``p``-free part solve

    d x^3 - b x^2 + (a + c - d) x - b = 0,   x = cos(gamma),

which seeds a refinement on the full ``g``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import optimize

from .special_functions import (
    ConvergenceError,
    QuadratureSpec,
    bivariate_normal_cdf,
    integrate_1d,
    std_normal_cdf,
)

__all__ = [
    "AssetParams",
    "PointMass",
    "LaplacePoint",
    "log_moneyness",
    "standardized_scores",
    "conditional_joint_density",
    "conditional_joint_cdf",
    "laplace_terms",
    "solve_gamma_star",
    "mixture_joint_density_laplace",
    "mixture_joint_density_quadrature",
    "mixture_joint_cdf",
    "joint_default_probability",
]

_EDGE = 1e-3
_MIN_CURV = 1.0  # Laplace is only trusted for g'' < -1
_CORRECTION_TOL = 0.05
_FD_STEP = 1e-4


@dataclass(frozen=True)
class AssetParams:
    """Common GBM drift/volatility plus per-name initial values and barriers."""

    mu: float
    sigma: float
    s0: tuple = (100.0, 100.0)
    barriers: tuple = (80.0, 80.0)

    def __post_init__(self):
        object.__setattr__(self, "s0", tuple(float(v) for v in self.s0))
        object.__setattr__(self, "barriers", tuple(float(v) for v in self.barriers))
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")
        if len(self.s0) != 2 or len(self.barriers) != 2:
            raise ValueError("s0 and barriers must be pairs")
        if min(self.s0) <= 0 or min(self.barriers) <= 0:
            raise ValueError("s0 and barriers must be positive")
        if any(s <= b for s, b in zip(self.s0, self.barriers)):
            raise ValueError("each name must start strictly above its barrier")

    def replace(self, **kw):
        d = dict(mu=self.mu, sigma=self.sigma, s0=self.s0, barriers=self.barriers)
        d.update(kw)
        return AssetParams(**d)


@dataclass(frozen=True)
class PointMass:
    """Degenerate correlation-angle law concentrated at ``gamma0``."""

    gamma0: float

    @property
    def rho(self):
        return math.cos(self.gamma0)


@dataclass(frozen=True)
class LaplacePoint:
    gamma_star: float
    g_value: float
    g_curv: float
    cubic_coeffs: tuple
    used_fallback: bool
    reason: str = ""


def _check_rho(rho):
    rho = np.asarray(rho, dtype=float)
    if np.any(~(np.abs(rho) < 1)):
        raise ValueError("conditional joint law requires |rho| < 1")
    return rho


def log_moneyness(s, s0, assets: AssetParams, t):
    return np.log(s) - math.log(s0) - (assets.mu - 0.5 * assets.sigma ** 2) * t


def standardized_scores(y1, y2, assets: AssetParams, t):
    """Standard-normal scores of ``log S_i(t)`` at levels ``y_i``."""
    sd = assets.sigma * math.sqrt(t)
    c1 = log_moneyness(y1, assets.s0[0], assets, t) / sd
    c2 = log_moneyness(y2, assets.s0[1], assets, t) / sd
    return c1, c2


def conditional_joint_density(s1, s2, rho, assets: AssetParams, t):
    rho = _check_rho(rho)
    l1 = log_moneyness(s1, assets.s0[0], assets, t)
    l2 = log_moneyness(s2, assets.s0[1], assets, t)
    v = assets.sigma ** 2 * t
    om = 1.0 - rho * rho
    q = (l1 * l1 - 2.0 * rho * l1 * l2 + l2 * l2) / (v * om)
    out = np.exp(-0.5 * q) / (2.0 * math.pi * v * np.sqrt(om) * s1 * s2)
    return float(out) if np.ndim(out) == 0 else out


def conditional_joint_cdf(y1, y2, rho, assets: AssetParams, t):
    _check_rho(rho)
    c1, c2 = standardized_scores(y1, y2, assets, t)
    return bivariate_normal_cdf(c1, c2, rho)


# --------------------------------------------------------------------------
# Laplace machinery


@dataclass(frozen=True)
class _GTerms:
    a: float
    b: float
    c: float
    d: float
    const: float  # -log(2 pi sigma^2 t s1 s2)
    diag: float = None  # (L1 - L2)^2 sigma^2 without cancellation
    anti: float = None  # (L1 + L2)^2 sigma^2

    def __post_init__(self):
        if self.diag is None:
            object.__setattr__(self, "diag", self.a - 2.0 * self.b + self.c)
        if self.anti is None:
            object.__setattr__(self, "anti", self.a + 2.0 * self.b + self.c)

    def q(self, gam):
        # a - 2b cos + c, expanded about the nearer endpoint to keep the
        # spike near the (anti-)diagonal free of cancellation noise
        gam = np.asarray(gam, dtype=float)
        near0 = self.diag + 4.0 * self.b * np.sin(0.5 * gam) ** 2
        nearpi = self.anti - 4.0 * self.b * np.cos(0.5 * gam) ** 2
        out = np.where(gam < 0.5 * math.pi, near0, nearpi)
        return float(out) if out.ndim == 0 else out

    def g0(self, gam):
        s = np.sin(gam)
        with np.errstate(divide="ignore", over="ignore"):
            return self.const - np.log(s) - self.q(gam) / (2.0 * self.d * s * s)

    def g0_prime(self, gam):
        s, co = np.sin(gam), np.cos(gam)
        q = self.q(gam)
        return (-self.d * co * s * s - self.b * s * s + q * co) / (self.d * s ** 3)

    def g0_second(self, gam):
        s, co = np.sin(gam), np.cos(gam)
        q = self.q(gam)
        return (self.d * s * s + 3.0 * self.b * s * s * co
                - (2.0 + np.cos(2.0 * gam)) * q) / (self.d * s ** 4)

    @property
    def cubic(self):
        # coefficients of d x^3 - b x^2 + (a + c - d) x - b in x = cos(gamma)
        return (self.d, -self.b, self.a + self.c - self.d, -self.b)


def laplace_terms(s1, s2, assets: AssetParams, t):
    """The scalar coefficients ``(a, b, c, d)`` and normalising constant of g."""
    sig2 = assets.sigma ** 2
    l1 = float(log_moneyness(s1, assets.s0[0], assets, t))
    l2 = float(log_moneyness(s2, assets.s0[1], assets, t))
    return _GTerms(a=l1 * l1 * sig2, b=l1 * l2 * sig2, c=l2 * l2 * sig2,
                   d=sig2 * sig2 * t, diag=(l1 - l2) ** 2 * sig2, anti=(l1 + l2) ** 2 * sig2,
                   const=-math.log(2.0 * math.pi * sig2 * t * s1 * s2))


def _safe_log(x):
    with np.errstate(divide="ignore"):
        return np.log(np.maximum(x, 0.0))


def _support(density):
    lo, hi = getattr(density, "support", (0.0, math.pi))
    return float(lo), float(hi)


def _fd1(fun, x, h=_FD_STEP):
    return (fun(x + h) - fun(x - h)) / (2.0 * h)


def _fd2(fun, x, h=_FD_STEP):
    return (fun(x + h) - 2.0 * fun(x) + fun(x - h)) / (h * h)


def _refine_max(fun, dfun, d2fun, seeds, lo, hi):
    """Local maxima of ``fun`` on (lo, hi) reached from each seed."""
    found = []
    inner_lo, inner_hi = lo + 1e-9, hi - 1e-9
    for x0 in seeds:
        if not inner_lo < x0 < inner_hi or not np.isfinite(fun(x0)):
            continue
        # widen a bracket until fun drops on both sides
        f0 = fun(x0)
        a, b = max(inner_lo, x0 - 1e-2), min(inner_hi, x0 + 1e-2)
        for _ in range(60):
            grow = False
            if a > inner_lo and fun(a) >= f0:
                a = max(inner_lo, x0 - 2.0 * (x0 - a))
                grow = True
            if b < inner_hi and fun(b) >= f0:
                b = min(inner_hi, x0 + 2.0 * (b - x0))
                grow = True
            if not grow:
                break
        res = optimize.minimize_scalar(
            lambda x: -fun(x) if np.isfinite(fun(x)) else 1e300,
            bounds=(a, b), method="bounded", options={"xatol": 1e-12, "maxiter": 500})
        x = float(res.x)
        for _ in range(4):
            d1, d2 = dfun(x), d2fun(x)
            if not (np.isfinite(d1) and np.isfinite(d2)) or d2 >= 0:
                break
            step = -d1 / d2
            if abs(step) > 1e-3:
                break
            xn = x + step
            if not inner_lo < xn < inner_hi or fun(xn) < fun(x) - 1e-14:
                break
            x = xn
            if abs(step) < 1e-15:
                break
        found.append(x)
    return found


def _grid_seed(fun, lo, hi, n=65):
    w = hi - lo
    grid = np.linspace(lo + 0.01 * w, hi - 0.01 * w, n)
    with np.errstate(all="ignore"):
        v = np.array([fun(x) for x in grid])
    v = np.where(np.isfinite(v), v, -np.inf)
    return [float(grid[int(np.argmax(v))])] if np.any(np.isfinite(v)) else []


def _laplace_correction(fun, x, curv):
    """Relative O(1/n) term ``g4 / (8 g2^2) + 5 g3^2 / (24 |g2|^3)``."""
    h = 0.05 / math.sqrt(-curv)
    v = [float(fun(x + k * h)) for k in (-2, -1, 0, 1, 2)]
    g3 = (v[4] - 2 * v[3] + 2 * v[1] - v[0]) / (2 * h ** 3)
    g4 = (v[4] - 4 * v[3] + 6 * v[2] - 4 * v[1] + v[0]) / h ** 4
    return g4 / (8.0 * curv * curv) + 5.0 * g3 * g3 / (24.0 * (-curv) ** 3)


def _laplace_max(fun, d1, d2, seeds, lo, hi):
    """Best interior maximum and the reason (if any) Laplace should not be used.

    Besides flat or boundary maxima this rejects maxima where the relative
    next-order term of the Laplace expansion exceeds ``_CORRECTION_TOL``.
    """
    best = None
    with np.errstate(all="ignore"):
        for x in _refine_max(fun, d1, d2, seeds, lo, hi):
            val, curv = float(fun(x)), float(d2(x))
            if np.isfinite(val) and np.isfinite(curv) and curv < 0 and (
                    best is None or val > best[1]):
                best = (x, val, curv)
        if best is None:
            return None, "no interior maximum with negative curvature"
        x, val, curv = best
        if -curv < _MIN_CURV:
            return best, "curvature above -1 (flat maximum)"
        if x - lo < _EDGE or hi - x < _EDGE:
            return best, "maximum at boundary"
        corr = _laplace_correction(fun, x, curv)
        if not abs(corr) <= _CORRECTION_TOL:
            return best, "next-order Laplace correction too large"
    return best, ""


def solve_gamma_star(s1, s2, assets: AssetParams, t, density: Callable) -> LaplacePoint:
    """Interior maximiser of g(gamma) with curvature, or a fallback flag.

    Admissible real roots of the cubic (``|cos gamma| < 1``) seed a bounded
    search on the full g including ``log p``; the best point of a coarse
    grid is added as a seed in case ``p`` moves the mode. Among refined
    stationary points the largest g with negative curvature wins.
    """
    terms = laplace_terms(s1, s2, assets, t)
    lo, hi = _support(density)

    def log_p(gam):
        return _safe_log(density(np.asarray(gam, dtype=float)))

    def g(gam):
        return terms.g0(gam) + log_p(gam)

    def g1(gam):
        return terms.g0_prime(gam) + _fd1(log_p, gam)

    def g2(gam):
        return terms.g0_second(gam) + _fd2(log_p, gam)

    seeds = _peak_hints(terms) + _grid_seed(g, lo, hi)
    best, reason = _laplace_max(g, g1, g2, seeds, lo, hi)
    if best is None:
        return LaplacePoint(float("nan"), float("nan"), float("nan"), terms.cubic, True, reason)
    x, val, curv = best
    return LaplacePoint(x, val, curv, terms.cubic, bool(reason), reason)


def _laplace_value(gamma_star, g_value, g_curv, lo=0.0, hi=math.pi):
    s = math.sqrt(-g_curv)
    mass = std_normal_cdf(s * (hi - gamma_star)) - std_normal_cdf(s * (lo - gamma_star))
    return math.exp(g_value) * math.sqrt(2.0 * math.pi / -g_curv) * mass


def _peak_hints(terms):
    roots = np.roots(terms.cubic) if terms.d else np.array([])
    return [math.acos(float(r.real)) for r in roots
            if abs(r.imag) < 1e-10 and abs(r.real) < 1.0]


_DENSITY_SPEC = QuadratureSpec(abs_tol=1e-12, rel_tol=1e-10, max_subdivisions=400)
_CDF_SPEC = QuadratureSpec(abs_tol=1e-13, rel_tol=1e-10, max_subdivisions=400)
_LOG_PIECE = 0.5
_LOG_FLOOR = math.log(1e-60)


def mixture_joint_density_quadrature(s1, s2, assets: AssetParams, t, density,
                                     spec: QuadratureSpec = _DENSITY_SPEC):
    """``int exp(g)`` over the angle support: the exact mixture density.

    Near the diagonal ``L1 = L2`` the integrand spikes at ``gamma ~ |L1 - L2|``,
    so the pieces next to ``0`` and ``pi`` are integrated in
    ``u = log(gamma)`` (resp. ``log(pi - gamma)``). Exactly on the diagonal
    (or anti-diagonal) with angle mass at the matching endpoint the integral
    diverges logarithmically and a ``ConvergenceError`` is raised.
    """
    if isinstance(density, PointMass):
        return conditional_joint_density(s1, s2, density.rho, assets, t)
    terms = laplace_terms(s1, s2, assets, t)
    lo, hi = _support(density)

    def integrand(gam):
        p = float(density(gam))
        if p <= 0:
            return 0.0
        val = terms.g0(gam)
        return math.exp(val) * p if val > -700 else 0.0

    tiny = 1e-9
    if lo == 0.0 and terms.diag == 0 and float(density(tiny)) > 0:
        raise ConvergenceError("mixture density diverges on the diagonal L1 = L2")
    if hi == math.pi and terms.anti == 0 and float(density(math.pi - tiny)) > 0:
        raise ConvergenceError("mixture density diverges on the anti-diagonal L1 = -L2")
    hints = _peak_hints(terms)
    cut = min(_LOG_PIECE, 0.25 * (hi - lo))
    a_mid, b_mid = lo + cut if lo == 0.0 else lo, hi - cut if hi == math.pi else hi
    total = integrate_1d(integrand, a_mid, b_mid, spec, points=hints)

    def log_piece(to_gamma, upper, hint_u):
        f = lambda u: integrand(to_gamma(math.exp(u))) * math.exp(u)
        return integrate_1d(f, _LOG_FLOOR, math.log(upper), spec, points=hint_u)

    if a_mid > lo:
        hu = [math.log(h) for h in hints if 0 < h < cut]
        total += log_piece(lambda x: x, cut, hu)
    if b_mid < hi:
        hu = [math.log(math.pi - h) for h in hints if math.pi - cut < h < math.pi]
        total += log_piece(lambda x: math.pi - x, cut, hu)
    return total


def mixture_joint_density_laplace(s1, s2, assets: AssetParams, t, density,
                                  return_info=False):
    """Laplace approximation of the mixture density with endpoint correction.

    Falls back to :func:`mixture_joint_density_quadrature` when
    :func:`solve_gamma_star` flags the maximiser; ``return_info`` exposes
    which route ran and why.
    """
    if isinstance(density, PointMass):
        val = conditional_joint_density(s1, s2, density.rho, assets, t)
        info = {"method": "point_mass", "fallback": False}
    else:
        lp = solve_gamma_star(s1, s2, assets, t, density)
        if lp.used_fallback:
            val = mixture_joint_density_quadrature(s1, s2, assets, t, density)
            info = {"method": "quadrature", "fallback": True, "reason": lp.reason,
                    "laplace_point": lp}
        else:
            val = _laplace_value(lp.gamma_star, lp.g_value, lp.g_curv, *_support(density))
            info = {"method": "laplace", "fallback": False, "laplace_point": lp}
    return (val, info) if return_info else val


def mixture_joint_cdf(y1, y2, assets: AssetParams, t, density, method="Laplace",
                      return_info=False, spec: QuadratureSpec = _CDF_SPEC):
    """``P(S1(t) < y1, S2(t) < y2)`` mixed over the correlation angle law.

    ``method="Laplace"`` maximises ``log p + log Phi2(c1, c2; cos gamma)``
    numerically (curvature by finite differences) and applies the
    truncated-Gaussian formula, with the same fallback rules as the
    density; ``"Quadrature"`` integrates ``p * Phi2`` directly.
    """
    c1, c2 = standardized_scores(y1, y2, assets, t)
    c1, c2 = float(c1), float(c2)
    if isinstance(density, PointMass):
        val = bivariate_normal_cdf(c1, c2, density.rho)
        return (val, {"method": "point_mass", "fallback": False}) if return_info else val
    lo, hi = _support(density)

    def quad():
        def integrand(gam):
            p = float(density(gam))
            return p * bivariate_normal_cdf(c1, c2, math.cos(gam)) if p > 0 else 0.0
        return integrate_1d(integrand, lo, hi, spec)

    kind = method.lower()
    if kind == "quadrature":
        val = quad()
        return (val, {"method": "quadrature", "fallback": False}) if return_info else val
    if kind != "laplace":
        raise ValueError(f"unknown method {method!r}")

    def f(gam):
        gam = np.asarray(gam, dtype=float)
        cg = np.clip(np.cos(gam), -1 + 1e-15, 1 - 1e-15)
        return _safe_log(density(gam)) + _safe_log(bivariate_normal_cdf(c1, c2, cg))

    best, reason = _laplace_max(f, lambda x: _fd1(f, x), lambda x: _fd2(f, x),
                                _grid_seed(f, lo, hi), lo, hi)
    if reason:
        val = quad()
        info = {"method": "quadrature", "fallback": True, "reason": reason}
    else:
        val = min(1.0, _laplace_value(*best, lo, hi))
        info = {"method": "laplace", "fallback": False, "gamma_star": best[0],
                "curvature": best[2]}
    return (val, info) if return_info else val


def joint_default_probability(T, assets: AssetParams, draws=None, density=None,
                              method="Laplace", return_se=False):
    """``P(S1(T) <= B1, S2(T) <= B2)`` under stochastic correlation.

    Pass either ``draws`` of the terminal correlation (draw average of the
    conditional bivariate normal CDF) or an angle ``density``.
    """
    if (draws is None) == (density is None):
        raise ValueError("pass exactly one of draws or density")
    if not T > 0:
        raise ValueError("T must be positive")
    b1, b2 = assets.barriers
    if draws is not None:
        rho = np.atleast_1d(np.asarray(draws, dtype=float))
        vals = conditional_joint_cdf(b1, b2, rho, assets, T)
        vals = np.atleast_1d(vals)
        mean = float(vals.mean())
        se = float(vals.std(ddof=1) / math.sqrt(len(vals))) if len(vals) > 1 else 0.0
        return (mean, se) if return_se else mean
    val = mixture_joint_cdf(b1, b2, assets, T, density, method=method)
    return (val, 0.0) if return_se else val
