"""Vasicek large-pool default-rate distribution.

All evaluations go through the log density; with ``z = Phi^-1(x)`` and
``z_p = Phi^-1(p)``

    log f(x; p, rho) = 1/2 log((1 - rho) / rho)
                       - (sqrt(1 - rho) z - z_p)^2 / (2 rho) + z^2 / 2.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy import special

from .special_functions import std_normal_cdf

__all__ = [
    "VasicekObs",
    "vasicek_loglik",
    "vasicek_loglik_grad",
    "vasicek_density",
    "vasicek_cdf",
    "vasicek_ppf",
    "vasicek_sample",
]

log = logging.getLogger(__name__)

DEFAULT_EPSILON_FLOOR = 1e-6


def _check(x, p, rho):
    x = np.asarray(x, dtype=float)
    p = np.asarray(p, dtype=float)
    rho = np.asarray(rho, dtype=float)
    for name, v in (("x", x), ("p", p), ("rho", rho)):
        if np.any(~((v > 0) & (v < 1))):
            raise ValueError(f"Vasicek {name} must lie strictly inside (0, 1)")
    return x, p, rho


def vasicek_loglik(c, p, rho):
    c, p, rho = _check(c, p, rho)
    z = special.ndtri(c)
    zp = special.ndtri(p)
    dev = np.sqrt(1.0 - rho) * z - zp
    out = 0.5 * np.log((1.0 - rho) / rho) - dev * dev / (2.0 * rho) + 0.5 * z * z
    return float(out) if out.ndim == 0 else out


def vasicek_loglik_grad(c, p, rho):
    """Derivative of :func:`vasicek_loglik` with respect to ``rho``."""
    c, p, rho = _check(c, p, rho)
    z = special.ndtri(c)
    zp = special.ndtri(p)
    s = np.sqrt(1.0 - rho)
    dev = s * z - zp
    # d/drho [dev^2 / (2 rho)] = dev * (-z / (2 s)) / rho - dev^2 / (2 rho^2)
    ddev = -z / (2.0 * s)
    out = -0.5 / (1.0 - rho) - 0.5 / rho - dev * ddev / rho + dev * dev / (2.0 * rho * rho)
    return float(out) if out.ndim == 0 else out


def vasicek_density(x, p, rho):
    return np.exp(vasicek_loglik(x, p, rho))


def vasicek_cdf(x, p, rho):
    x, p, rho = _check(x, p, rho)
    out = std_normal_cdf((np.sqrt(1.0 - rho) * special.ndtri(x) - special.ndtri(p))
                         / np.sqrt(rho))
    return float(out) if out.ndim == 0 else out


def vasicek_ppf(u, p, rho):
    """Inverse CDF; used to draw synthetic default-rate series."""
    u, p, rho = _check(u, p, rho)
    out = std_normal_cdf((np.sqrt(rho) * special.ndtri(u) + special.ndtri(p))
                         / np.sqrt(1.0 - rho))
    return float(out) if out.ndim == 0 else out


def vasicek_sample(p, rho, size=None, rng=None):
    """Inverse-transform draws; ``rng`` (a Generator or integer seed) is required."""
    if rng is None:
        raise ValueError("vasicek_sample needs an explicit rng or seed")
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    rho = np.asarray(rho, dtype=float)
    shape = rho.shape if size is None else size
    u = rng.uniform(size=shape)
    u = np.clip(u, 1e-300, 1 - 1e-16)
    return vasicek_ppf(u, p, rho)


@dataclass(frozen=True)
class VasicekObs:
    """A default-rate series with its long-run level and probit transforms."""

    rates: np.ndarray
    p_bar: float
    z: np.ndarray
    z_p: float
    epsilon_floor: float = DEFAULT_EPSILON_FLOOR
    n_floored: int = 0

    @classmethod
    def from_rates(cls, rates, epsilon_floor=DEFAULT_EPSILON_FLOOR):
        rates = np.asarray(rates, dtype=float)
        if rates.ndim != 1 or rates.size == 0:
            raise ValueError("rates must be a non-empty 1-d sequence")
        if np.any(~np.isfinite(rates)) or np.any(rates < 0) or np.any(rates >= 1):
            raise ValueError("rates must be fractions in [0, 1)")
        low = rates < epsilon_floor
        n_floored = int(low.sum())
        if n_floored:
            log.warning("floored %d zero/near-zero rates to %g", n_floored, epsilon_floor)
        rates = np.where(low, epsilon_floor, rates)
        p_bar = float(rates.mean())
        rates.setflags(write=False)
        z = special.ndtri(rates)
        z.setflags(write=False)
        return cls(rates=rates, p_bar=p_bar, z=z, z_p=float(special.ndtri(p_bar)),
                   epsilon_floor=epsilon_floor, n_floored=n_floored)

    def __len__(self):
        return len(self.rates)
