"""Monte Carlo reference simulations for two correlated GBM names.

Used as independent oracles for the analytic joint, survival and
first-passage routines. Barrier monitoring is discrete with a
Brownian-bridge correction: within a step from ``l_k`` to ``l_{k+1}`` (log
distances above the barrier, both positive) the path crosses with
probability ``exp(-2 l_k l_{k+1} / (sigma^2 dt))``. The two names' bridges
are sampled independently given the endpoints, which is exact per name.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .circular import draw_stream
from .joint_distribution import AssetParams

__all__ = ["PathSummary", "simulate_default_times", "simulate_terminal_log_assets",
           "simulate_drifted_bm_survival"]


@dataclass(frozen=True)
class PathSummary:
    """First default times per path (``inf`` when no default by ``T``)."""

    tau: np.ndarray  # (n_paths, 2)
    T: float
    dt: float

    def survival(self, t=None):
        t = self.T if t is None else t
        ind = np.all(self.tau > t, axis=1)
        return _mean_se(ind)

    def joint_default(self, t1=None, t2=None):
        t1 = self.T if t1 is None else t1
        t2 = self.T if t2 is None else t2
        ind = (self.tau[:, 0] <= t1) & (self.tau[:, 1] <= t2)
        return _mean_se(ind)

    def marginal_default(self, name, t=None):
        t = self.T if t is None else t
        return _mean_se(self.tau[:, name] <= t)


def _mean_se(ind):
    ind = np.asarray(ind, dtype=float)
    m = float(ind.mean())
    return m, float(ind.std(ddof=1) / math.sqrt(ind.size))


def _correlated_normals(rng, n, rho):
    z1 = rng.standard_normal(n)
    z2 = rho * z1 + math.sqrt(1.0 - rho * rho) * rng.standard_normal(n)
    return z1, z2


def simulate_default_times(assets: AssetParams, rho, T, n_paths, dt=1e-3, seed=0,
                           chunk=50_000, bridge=True) -> PathSummary:
    """Discretely monitored default times with bridge-corrected crossing."""
    n_steps = max(1, int(round(T / dt)))
    dt = T / n_steps
    sig = assets.sigma
    drift = (assets.mu - 0.5 * sig * sig) * dt
    vol = sig * math.sqrt(dt)
    l0 = np.log(np.divide(assets.s0, assets.barriers))
    taus = []
    for c, start in enumerate(range(0, n_paths, chunk)):
        n = min(chunk, n_paths - start)
        rng = draw_stream(seed, c)
        l = np.tile(l0, (n, 1))
        tau = np.full((n, 2), np.inf)
        for k in range(n_steps):
            z1, z2 = _correlated_normals(rng, n, rho)
            nxt = l + drift + vol * np.column_stack((z1, z2))
            hit = nxt <= 0
            if bridge:
                with np.errstate(over="ignore"):
                    p = np.exp(-2.0 * np.maximum(l, 0) * np.maximum(nxt, 0) / (vol * vol))
                hit |= rng.uniform(size=(n, 2)) < p
            new = hit & np.isinf(tau)
            tau[new] = (k + 1) * dt
            l = nxt
        taus.append(tau)
    return PathSummary(np.concatenate(taus), float(T), dt)


def simulate_terminal_log_assets(assets: AssetParams, rho, t, n_paths, seed=0, chunk=500_000):
    """Exact draws of ``(log S1(t), log S2(t))``."""
    out = []
    sig = assets.sigma
    m = (assets.mu - 0.5 * sig * sig) * t
    for c, start in enumerate(range(0, n_paths, chunk)):
        n = min(chunk, n_paths - start)
        z1, z2 = _correlated_normals(draw_stream(seed, c), n, rho)
        out.append(np.column_stack((math.log(assets.s0[0]) + m + sig * math.sqrt(t) * z1,
                                    math.log(assets.s0[1]) + m + sig * math.sqrt(t) * z2)))
    return np.concatenate(out)


def simulate_drifted_bm_survival(drift, sigmas, rho, x0, barriers, t, n_paths, dt=1e-3,
                                 seed=0, bridge=True):
    """Survival of a planar drifted BM below two upper barriers (mean, se)."""
    n_steps = max(1, int(round(t / dt)))
    dt = t / n_steps
    rng = draw_stream(seed, 0)
    s = np.asarray(sigmas, dtype=float)
    d = np.tile(np.subtract(barriers, x0), (n_paths, 1)).astype(float)
    alive = np.ones(n_paths, dtype=bool)
    for _ in range(n_steps):
        z1, z2 = _correlated_normals(rng, n_paths, rho)
        nxt = d - np.asarray(drift) * dt - s * math.sqrt(dt) * np.column_stack((z1, z2))
        hit = nxt <= 0
        if bridge:
            p = np.exp(-2.0 * np.maximum(d, 0) * np.maximum(nxt, 0) / (s * s * dt))
            hit |= rng.uniform(size=(n_paths, 2)) < p
        alive &= ~hit.any(axis=1)
        d = nxt
    return _mean_se(alive)
