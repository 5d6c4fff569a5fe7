"""Circular diffusions for the correlation angle.

Two angle dynamics are supported:

* circular Brownian motion, ``dtheta = sigma dW  (mod 2 pi)``, whose
  transition law is the wrapped normal;
* the von Mises process, ``dtheta = -lam sin(theta - mu) dt + sigma dW``,
  whose transition density is obtained here by a Fourier-Galerkin solution
  of the Fokker-Planck equation on the circle.  With mode coefficients
  ``c_k`` of ``p = (1/2pi) sum_k c_k exp(ik(theta - mu))`` the forward
  equation is the tridiagonal linear system

      dc_k/dt = (lam k / 2)(c_{k-1} - c_{k+1}) - (sigma^2 k^2 / 2) c_k,

  integrated exactly with a matrix exponential.

Angles are reduced to the representative in ``[0, 2 pi)``. Random draws use
one counter-based Philox stream per (seed, draw index), so a batch of draws
is identical however it is split across workers.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import linalg

from .special_functions import ConvergenceError, SeriesSpec, bessel_ie

__all__ = [
    "DiffusionKind",
    "Mapping",
    "CorrelationModel",
    "AnglePath",
    "reduce_angle",
    "wrapped_normal_density",
    "von_mises_transition_density",
    "von_mises_stationary_density",
    "transition_density",
    "simulate_angle_path",
    "angle_to_correlation",
    "correlation_to_angle",
    "sample_terminal_angles",
    "sample_terminal_correlation",
    "correlation_angle_density",
    "draw_stream",
]

TWO_PI = 2.0 * math.pi
DEFAULT_MAX_DT = 1.0 / 252.0
_MAX_MODES = 2048


class DiffusionKind(str, enum.Enum):
    CBM = "CBM"
    VON_MISES = "VonMises"


class Mapping(str, enum.Enum):
    COSINE = "Cosine"
    COSINE_SQUARED = "CosineSquared"


@dataclass(frozen=True)
class CorrelationModel:
    """Angle diffusion plus the angle -> correlation mapping.

    ``sigma_theta = 0`` is accepted so the noiseless flow can be tested, but
    transition densities need a positive value.
    """

    kind: DiffusionKind = DiffusionKind.VON_MISES
    sigma_theta: float = 1.0
    lam: float = 0.0
    mu: float = 0.0
    mapping: Mapping = Mapping.COSINE_SQUARED

    def __post_init__(self):
        object.__setattr__(self, "kind", DiffusionKind(self.kind))
        object.__setattr__(self, "mapping", Mapping(self.mapping))
        if self.sigma_theta < 0:
            raise ValueError("sigma_theta must be >= 0")
        if self.lam < 0:
            raise ValueError("lam must be >= 0")
        object.__setattr__(self, "mu", float(reduce_angle(self.mu)))

    @property
    def drift_speed(self):
        return self.lam if self.kind is DiffusionKind.VON_MISES else 0.0

    @property
    def kappa(self):
        """Stationary concentration ``2 lam / sigma^2`` (von Mises only)."""
        if self.kind is not DiffusionKind.VON_MISES:
            raise ValueError("kappa is defined for the von Mises process only")
        return 2.0 * self.lam / self.sigma_theta ** 2


@dataclass(frozen=True)
class AnglePath:
    times: np.ndarray
    angles: np.ndarray
    seed: int
    index: int = 0

    def __post_init__(self):
        if len(self.times) != len(self.angles):
            raise ValueError("times and angles must have equal length")
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("times must be strictly increasing")


def reduce_angle(theta):
    out = np.mod(theta, TWO_PI)
    # mod can round up to exactly 2 pi for tiny negative inputs
    out = np.where(out >= TWO_PI, 0.0, out)
    return float(out) if np.ndim(out) == 0 else out


# --------------------------------------------------------------------------
# densities


def _wn_terms(variance, term_tol):
    # first omitted coefficient exp(-n^2 v / 2) must fall below term_tol
    return int(math.ceil(math.sqrt(2.0 * math.log(1.0 / term_tol) / variance)))


def wrapped_normal_density(theta, theta0, variance, series: SeriesSpec = SeriesSpec()):
    """Wrapped normal density on the circle, Fourier form.

    ``(1/2pi) (1 + 2 sum_n exp(-n^2 v / 2) cos n(theta - theta0))``. When the
    Fourier series would need more than ``series.max_terms`` terms (tiny
    variance) the equivalent periodised Gaussian sum is used instead.
    """
    if not variance > 0:
        raise ValueError("variance must be positive")
    d = np.asarray(theta, dtype=float) - np.asarray(theta0, dtype=float)
    n_terms = _wn_terms(variance, series.term_tol)
    if n_terms <= series.max_terms:
        n = np.arange(1, n_terms + 1)
        coef = np.exp(-0.5 * n * n * variance)
        s = np.cos(np.multiply.outer(d, n)) @ coef
        out = (1.0 + 2.0 * s) / TWO_PI
    else:
        d = np.mod(d + math.pi, TWO_PI) - math.pi
        sd = math.sqrt(variance)
        kmax = int(math.ceil(10.0 * sd / TWO_PI)) + 1
        k = np.arange(-kmax, kmax + 1)
        z = np.add.outer(d, TWO_PI * k) / sd
        out = np.exp(-0.5 * z * z).sum(axis=-1) / (sd * math.sqrt(TWO_PI))
    return np.maximum(out, 0.0)


def _n_modes(sigma, dt, n_modes, lam=0.0, term_tol=1e-13):
    # Fourier width of a Gaussian with the linearised (OU) variance at dt
    if lam > 0:
        var = sigma * sigma * -math.expm1(-2.0 * lam * dt) / (2.0 * lam)
    else:
        var = sigma * sigma * dt
    need = math.ceil(math.sqrt(2.0 * math.log(1.0 / term_tol) / var)) + 12
    return max(int(n_modes), need)


@lru_cache(maxsize=256)
def _vm_propagator(lam, sigma, dt, m):
    k = np.arange(-m, m + 1, dtype=float)
    a = np.diag(-0.5 * sigma * sigma * k * k)
    off = 0.5 * lam * k
    # dc_k/dt gets +off_k c_{k-1} and -off_k c_{k+1}
    a[np.arange(1, 2 * m + 1), np.arange(0, 2 * m)] = off[1:]
    a[np.arange(0, 2 * m), np.arange(1, 2 * m + 1)] = -off[:-1]
    prop = linalg.expm(a * dt)
    prop.setflags(write=False)
    return prop


def _vm_coefficients(theta0, lam, sigma, mu, dt, n_modes, check=True):
    if not sigma > 0 or not dt > 0:
        raise ValueError("von Mises transition density needs sigma_theta > 0 and dt > 0")
    m = _n_modes(sigma, dt, n_modes, lam)
    if m > _MAX_MODES:
        raise ConvergenceError(f"spectral truncation needs {m} modes (> {_MAX_MODES})")
    prop = _vm_propagator(float(lam), float(sigma), float(dt), m)
    k = np.arange(-m, m + 1, dtype=float)
    psi0 = np.atleast_1d(np.asarray(theta0, dtype=float)) - mu
    init = np.exp(-1j * np.outer(k, psi0))
    coef = prop @ init
    if check:
        tail = np.abs(coef[[0, -1]]).max()
        if tail > 1e-10:
            raise ConvergenceError(
                f"spectral truncation not converged (edge mode {tail:.2e})", error=tail)
    return k, coef


def von_mises_transition_density(theta, theta0, model: CorrelationModel, dt,
                                 n_modes=64):
    """Transition density ``p(theta, t + dt | theta0, t)`` of the von Mises process.

    ``theta`` and ``theta0`` broadcast against each other. The mode count
    grows past ``n_modes`` automatically when ``sigma^2 dt`` is small;
    ``ConvergenceError`` is raised if the edge modes are not negligible.
    """
    theta, theta0 = np.broadcast_arrays(np.asarray(theta, float), np.asarray(theta0, float))
    shape = theta.shape
    k, coef = _vm_coefficients(theta0.ravel(), model.drift_speed, model.sigma_theta,
                               model.mu, dt, n_modes)
    psi = theta.ravel() - model.mu
    vals = np.real(np.einsum("kj,kj->j", coef, np.exp(1j * np.outer(k, psi)))) / TWO_PI
    out = np.maximum(vals, 0.0).reshape(shape)
    return float(out) if shape == () else out


def von_mises_stationary_density(theta, model: CorrelationModel):
    if not model.lam > 0:
        raise ValueError("stationary density needs lam > 0")
    kappa = 2.0 * model.lam / model.sigma_theta ** 2
    theta = np.asarray(theta, dtype=float)
    return np.exp(kappa * (np.cos(theta - model.mu) - 1.0)) / (TWO_PI * bessel_ie(0, kappa))


def transition_density(theta, theta0, model: CorrelationModel, dt):
    """Transition density of whichever diffusion ``model`` describes."""
    if model.kind is DiffusionKind.CBM or model.lam == 0:
        return wrapped_normal_density(theta, theta0, model.sigma_theta ** 2 * dt)
    return von_mises_transition_density(theta, theta0, model, dt)


def transition_logpdf_and_grads(theta, theta0, model: CorrelationModel, dt, floor=1e-300,
                                n_modes=64):
    """``log p(theta | theta0)`` with derivatives in ``theta`` and ``theta0``.

    Vectorised over paired arrays; used by the likelihood gradient.
    ``n_modes`` is a floor: more modes are used whenever ``sigma^2 dt`` is
    small enough to need them.
    """
    theta = np.asarray(theta, dtype=float)
    theta0 = np.asarray(theta0, dtype=float)
    mu = model.mu if model.kind is DiffusionKind.VON_MISES else 0.0
    k, coef = _vm_coefficients(theta0, model.drift_speed, model.sigma_theta, mu, dt, n_modes)
    # d coef / d theta0: propagate (-ik) e^{-ik psi0}
    m = (len(k) - 1) // 2
    prop = _vm_propagator(float(model.drift_speed), float(model.sigma_theta), float(dt), m)
    psi0 = theta0 - mu
    dcoef = prop @ (-1j * k[:, None] * np.exp(-1j * np.outer(k, psi0)))
    e = np.exp(1j * np.outer(k, theta - mu))
    p = np.real(np.einsum("kj,kj->j", coef, e)) / TWO_PI
    dp_dtheta = np.real(np.einsum("kj,kj->j", coef, 1j * k[:, None] * e)) / TWO_PI
    dp_dtheta0 = np.real(np.einsum("kj,kj->j", dcoef, e)) / TWO_PI
    p = np.maximum(p, floor)
    return np.log(p), dp_dtheta / p, dp_dtheta0 / p


# --------------------------------------------------------------------------
# simulation


def draw_stream(seed, index=0):
    """Counter-based generator for draw ``index`` under ``seed``."""
    key = (int(seed) & (2 ** 64 - 1)) | (int(index) << 64)
    return np.random.Generator(np.random.Philox(key=key))


def _euler(model: CorrelationModel, theta0, dt, noise):
    # noise: (n_draws, n_steps) standard normals; returns (n_draws, n_steps + 1)
    n_draws, n_steps = noise.shape
    out = np.empty((n_draws, n_steps + 1))
    th = np.full(n_draws, float(theta0))
    out[:, 0] = th
    lam = model.drift_speed
    sd = model.sigma_theta * math.sqrt(dt)
    for j in range(n_steps):
        if lam:
            th = th - lam * np.sin(th - model.mu) * dt
        th = th + sd * noise[:, j]
        out[:, j + 1] = th
    return reduce_angle(out)


def simulate_angle_path(model: CorrelationModel, theta0, dt, n_steps, seed, index=0):
    """Euler-Maruyama path of the angle diffusion, reduced mod 2 pi."""
    if not dt > 0 or n_steps < 1:
        raise ValueError("need dt > 0 and n_steps >= 1")
    noise = draw_stream(seed, index).standard_normal(int(n_steps))[None, :]
    angles = _euler(model, theta0, dt, noise)[0]
    times = dt * np.arange(n_steps + 1)
    return AnglePath(times=times, angles=angles, seed=int(seed), index=int(index))


def _steps_for(T, max_dt):
    n = max(1, int(math.ceil(T / max_dt - 1e-9)))
    return n, T / n


def sample_terminal_angles(model: CorrelationModel, theta0, T, n_draws, seed,
                           max_dt=DEFAULT_MAX_DT, start_index=0):
    """Terminal angles ``theta_T`` of ``n_draws`` independent Euler paths.

    Draw ``i`` consumes the Philox stream ``(seed, start_index + i)`` only,
    so any partition of the index range reproduces the same values.
    """
    if not T > 0 or n_draws < 1:
        raise ValueError("need T > 0 and n_draws >= 1")
    n_steps, dt = _steps_for(T, max_dt)
    noise = np.empty((int(n_draws), n_steps))
    for i in range(int(n_draws)):
        noise[i] = draw_stream(seed, start_index + i).standard_normal(n_steps)
    return _euler(model, theta0, dt, noise)[:, -1]


def angle_to_correlation(theta, mapping):
    mapping = Mapping(mapping)
    c = np.cos(theta)
    return c if mapping is Mapping.COSINE else c * c


def correlation_to_angle(rho, mapping):
    """Principal-branch angle and the Jacobian ``|d angle / d rho|``."""
    mapping = Mapping(mapping)
    rho = np.asarray(rho, dtype=float)
    if mapping is Mapping.COSINE:
        if np.any(~(np.abs(rho) < 1)):
            raise ValueError("Cosine mapping needs -1 < rho < 1")
        ang, jac = np.arccos(rho), 1.0 / np.sqrt(1.0 - rho * rho)
    else:
        if np.any(~((rho > 0) & (rho < 1))):
            raise ValueError("CosineSquared mapping needs 0 < rho < 1")
        ang, jac = np.arccos(np.sqrt(rho)), 0.5 / np.sqrt(rho * (1.0 - rho))
    if ang.ndim == 0:
        return float(ang), float(jac)
    return ang, jac


def sample_terminal_correlation(model: CorrelationModel, theta0, T, n_draws, seed,
                                max_dt=DEFAULT_MAX_DT):
    theta = sample_terminal_angles(model, theta0, T, n_draws, seed, max_dt=max_dt)
    return angle_to_correlation(theta, model.mapping)


def correlation_angle_density(model: CorrelationModel, theta0, T):
    """Density of ``gamma = arccos(rho_T)`` on ``(0, pi)`` as a callable.

    This is the mixing density over the correlation angle used by the joint
    distribution formulas, built from the angle transition law and the
    model's mapping (all preimages of ``cos gamma`` are summed). The
    returned callable carries a ``support`` attribute; under the
    squared-cosine mapping it is ``(0, pi/2)``.
    """

    def p_theta(theta):
        return transition_density(reduce_angle(theta), theta0, model, T)

    if model.mapping is Mapping.COSINE:
        def density(gamma):
            gamma = np.asarray(gamma, dtype=float)
            return p_theta(gamma) + p_theta(TWO_PI - gamma)
        density.support = (0.0, math.pi)
    else:
        def density(gamma):
            gamma = np.asarray(gamma, dtype=float)
            rho = np.cos(gamma)
            out = np.zeros_like(gamma, dtype=float)
            ok = (rho > 0) & (rho < 1)
            if np.any(ok):
                r = rho[ok] if out.ndim else rho
                phi = np.arccos(np.sqrt(r))
                branches = (p_theta(phi) + p_theta(-phi)
                            + p_theta(math.pi - phi) + p_theta(math.pi + phi))
                # |d phi / d rho| * |d rho / d gamma|
                jac = 0.5 / np.sqrt(r * (1.0 - r)) * np.sqrt(1.0 - r * r)
                if out.ndim:
                    out[ok] = branches * jac
                else:
                    out = branches * jac
            return out
        density.support = (0.0, 0.5 * math.pi)

    return density
