"""Reproducible discretized space-time white noise.

One time-step increment on a lattice is an iid N(0, dt / prod(dx_i)) draw per
cell, so that the discrete Walsh integral sum(phi * dW) * prod(dx) has
variance dt * sum(phi^2) * prod(dx) ~ dt ||phi||_2^2.

Generation is counter-based: every (seed, replicate, step) triple keys an
independent Philox stream, and cells consume that stream in row-major order.
The same triple therefore always produces bit-identical variates, in any
generation order and from any number of threads.  Normals come from
Box-Muller applied to the raw counter output rather than numpy's ziggurat,
keeping the stream layout explicit and platform-stable.

Two schemes exist:

* ``lattice`` - per-cell increments as above.
* ``spectral`` - directly synthesized Hermitian-symmetric rfftn coefficients
  whose law matches the transform of a lattice increment (self-conjugate
  modes real with variance N_tot sigma^2, others complex with independent
  Re/Im of variance N_tot sigma^2 / 2).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grids import DIRICHLET, Field, Grid, SpectralField, spectral_shape

_MASK64 = (1 << 64) - 1


def _splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return x ^ (x >> 31)


def _philox(seed: int, replicate: int, step: int) -> np.random.Philox:
    key = [_splitmix64(seed & _MASK64), _splitmix64((replicate * 0x632BE59BD9B4E019 + 0xB5) & _MASK64)]
    # steps occupy the top counter word; draws within a call walk the low words
    return np.random.Philox(counter=[0, 0, 0, step & _MASK64], key=key)


def gaussian_block(seed: int, replicate: int, step: int, n: int) -> np.ndarray:
    """n standard normals for the (seed, replicate, step) stream."""
    bg = _philox(seed, replicate, step)
    n_pairs = (n + 1) // 2
    raw = bg.random_raw(2 * n_pairs)
    # (0, 1] uniforms: top 53 bits, flipped so log() never sees zero
    u = 1.0 - (raw >> np.uint64(11)) * (2.0**-53)
    u1, u2 = u[:n_pairs], u[n_pairs:]
    rad = np.sqrt(-2.0 * np.log(u1))
    ang = 2.0 * np.pi * u2
    z = np.empty(2 * n_pairs)
    z[0::2] = rad * np.cos(ang)
    z[1::2] = rad * np.sin(ang)
    return z[:n]


@dataclass(frozen=True)
class NoisePlan:
    """Everything needed to regenerate a noise realization by key."""

    grid: Grid
    dt: float
    seed: int
    scheme: str = "lattice"

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.scheme not in ("lattice", "spectral"):
            raise ValueError(f"unknown scheme {self.scheme!r}")
        if self.scheme == "spectral" and self.grid.boundary == DIRICHLET:
            raise ValueError("spectral scheme requires a periodic grid")

    @property
    def cell_std(self) -> float:
        return float(np.sqrt(self.dt / self.grid.cell_volume))


def white_noise_increment(plan: NoisePlan, replicate: int, step: int) -> Field:
    """One step's physical-space increment field."""
    t = step * plan.dt
    if plan.scheme == "lattice":
        values = lattice_increment(plan, replicate, step)
    else:
        coeffs = spectral_increment(plan, replicate, step)
        values = np.fft.irfftn(coeffs, s=plan.grid.points)
    return Field(plan.grid, max(t, 0.0), values)


def lattice_increment(plan: NoisePlan, replicate: int, step: int) -> np.ndarray:
    shape = plan.grid.shape
    z = gaussian_block(plan.seed, replicate, step, int(np.prod(shape)))
    return plan.cell_std * z.reshape(shape)


def spectral_increment(plan: NoisePlan, replicate: int, step: int) -> np.ndarray:
    """Hermitian-symmetric rfftn-layout coefficients of one increment.

    Matches the law of np.fft.rfftn(lattice_increment(...)): every mode has
    E|W_hat(k)|^2 = N_tot * sigma^2.  Modes off the self-conjugate planes get
    independent Re/Im draws; each self-conjugate plane (last frequency index
    0 or N/2) is realized as the full FFT of a small real white array, which
    carries exactly the required within-plane conjugate symmetry.
    """
    grid = plan.grid
    pts = grid.points
    shape = spectral_shape(grid)
    n = int(np.prod(shape))
    z = gaussian_block(plan.seed, replicate, step, 2 * n)
    re = z[:n].reshape(shape)
    im = z[n:].reshape(shape)
    mode_std = plan.cell_std * np.sqrt(grid.cell_count)
    coeffs = (re + 1j * im) * (mode_std / np.sqrt(2.0))
    m_plane = int(np.prod(pts[:-1])) if grid.dim > 1 else 1
    for j in {0, pts[-1] // 2}:
        if grid.dim == 1:
            coeffs[j] = mode_std * re[j]
        else:
            w = re[..., j] * (mode_std / np.sqrt(m_plane))
            coeffs[..., j] = np.fft.fftn(w)
    return coeffs


class NoiseRecord:
    """Addressable view of a plan's increments, regenerated on demand."""

    def __init__(self, plan: NoisePlan):
        self.plan = plan

    def increment(self, replicate: int, step: int) -> Field:
        return white_noise_increment(self.plan, replicate, step)

    def __call__(self, replicate: int, step: int) -> Field:
        return self.increment(replicate, step)
