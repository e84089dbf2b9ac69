"""Exact second moments of the zero-drift, constant-diffusion lattice chains.

With b = 0 and a = kappa the spectral chains of :mod:`lks.spdesim` are
Gaussian mode by mode, so every second-moment observable has a closed form:

* exact_noise scheme: each mode is the exactly integrated OU process,
      Var U_hat(t, k) = rho (1 - e^{-2 t lambda}) / (2 lambda),
  where rho = eps2^2 kappa^2 N_tot^2 / vol(box).
* exponential_euler scheme after n steps:
      Var U_hat(n dt, k) = rho dt e^{-2 dt lambda} (1 - e^{-2 n dt lambda})
                            / (1 - e^{-2 dt lambda}).

These are used as test oracles for the simulator/estimator pipeline and for
sizing the regularity experiments.
"""

from __future__ import annotations

import numpy as np

from .spdesim import SCHEME_EULER, SCHEME_EXACT_NOISE, SimConfig, operator_symbol


def _rho(cfg: SimConfig) -> float:
    if not cfg.diffusion.is_constant:
        raise ValueError("linear theory requires constant diffusion")
    if not cfg.drift.is_zero:
        raise ValueError("linear theory requires zero drift")
    kappa = cfg.diffusion.params[0]
    return (cfg.eps2 * kappa) ** 2 * cfg.grid.cell_count**2 / float(np.prod(cfg.grid.extent))


def mode_variance(cfg: SimConfig, t: float) -> np.ndarray:
    """Per-mode variance E|U_hat(t,k)|^2 of the configured chain at time t."""
    lam = operator_symbol(cfg)
    rho = _rho(cfg)
    if cfg.scheme == SCHEME_EXACT_NOISE:
        with np.errstate(divide="ignore", invalid="ignore"):
            v = rho * (-np.expm1(-2.0 * t * lam)) / (2.0 * lam)
        return np.where(lam < 1e-300, rho * t, v)
    if cfg.scheme != SCHEME_EULER:
        raise ValueError(f"unknown scheme {cfg.scheme}")
    n = int(round(t / cfg.dt))
    x = 2.0 * cfg.dt * lam
    with np.errstate(divide="ignore", invalid="ignore"):
        geom = np.exp(-x) * (-np.expm1(-n * x)) / (-np.expm1(-x))
    geom = np.where(x < 1e-12, float(n), geom)
    return rho * cfg.dt * geom


def _mode_weights(cfg: SimConfig) -> np.ndarray:
    """Multiplicity of each rfftn-layout mode in the full spectrum."""
    pts = cfg.grid.points
    w = np.ones(pts[:-1] + (pts[-1] // 2 + 1,))
    half = np.full(pts[-1] // 2 + 1, 2.0)
    half[0] = 1.0
    half[-1] = 1.0
    return w * half


def field_variance(cfg: SimConfig, t: float) -> float:
    """E U(t,x)^2, independent of x by stationarity in space."""
    v = mode_variance(cfg, t)
    n_tot = cfg.grid.cell_count
    return float(np.sum(v * _mode_weights(cfg)) / n_tot**2)


def _phases(cfg: SimConfig, offset_cells) -> np.ndarray:
    pts = cfg.grid.points
    mesh = []
    for axis in range(cfg.grid.dim):
        n = pts[axis]
        f = np.arange(n // 2 + 1) if axis == cfg.grid.dim - 1 else np.fft.fftfreq(n, 1.0 / n)
        shape = [1] * cfg.grid.dim
        shape[axis] = f.size
        mesh.append(f.reshape(shape))
    return sum(2.0 * np.pi * m * (c / pts[i]) for i, (m, c) in enumerate(zip(mesh, offset_cells)))


def spatial_structure_expected(cfg: SimConfig, t: float, offset_cells) -> float:
    """E |U(t, x+z) - U(t, x)|^2 for a lattice offset z (in cells)."""
    v = mode_variance(cfg, t)
    ph = _phases(cfg, offset_cells)
    n_tot = cfg.grid.cell_count
    return float(np.sum(2.0 * v * (1.0 - np.cos(ph)) * _mode_weights(cfg)) / n_tot**2)


def temporal_structure_expected(cfg: SimConfig, t0: float, tau: float) -> float:
    """E |U(t0 + tau, x) - U(t0, x)|^2 for the exact_noise chain."""
    if cfg.scheme != SCHEME_EXACT_NOISE:
        raise ValueError("temporal covariances are provided for the exact_noise chain")
    lam = operator_symbol(cfg)
    v0 = mode_variance(cfg, t0)
    v1 = mode_variance(cfg, t0 + tau)
    n_tot = cfg.grid.cell_count
    per_mode = v1 + v0 - 2.0 * np.exp(-tau * lam) * v0
    return float(np.sum(per_mode * _mode_weights(cfg)) / n_tot**2)


def one_step_variance_euler(cfg: SimConfig) -> float:
    """E U(dt, x)^2 after a single Euler step from u0 = 0:
    kappa^2 eps2^2 dt sum_k e^{-2 dt lambda(k)} / vol(box)."""
    lam = operator_symbol(cfg)
    rho = _rho(cfg)
    n_tot = cfg.grid.cell_count
    return float(rho * cfg.dt * np.sum(np.exp(-2.0 * cfg.dt * lam) * _mode_weights(cfg)) / n_tot**2)
