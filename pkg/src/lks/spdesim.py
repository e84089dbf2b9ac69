"""Mild-solution SPDE simulation by spectral exponential time stepping.

The state advances one step by the discrete Duhamel update

    U_{n+1} = T^{-1}( e^{-dt lambda(k)} [ T(U_n) + T(b(U_n)) dt
                                          + T(eps2 a(U_n) dW_n) ] )

with lambda(k) = (eps1/8)(|2 pi k / L|^2 - 2 theta)^2 on periodic boxes
(T = rfftn) and the sine-mode analogue on the d=1 Dirichlet interval
(T = DST-I).  The linear flow is exact, the drift and the Walsh integral are
explicit with left-point (Ito) evaluation, so with eps2 = 0 and b = 0 one
step reduces exactly to the deterministic spectral flow.

For zero-drift, constant-diffusion measurement runs an alternative
``exact_noise`` scheme integrates the per-mode stochastic convolution over
each step with its exact variance (1 - e^{-2 lambda dt}) / (2 lambda); the
snapshot law of the linear chain is then exact in distribution at any dt.
Replicates are independent units of work; all randomness is addressed by the
counter-based (seed, replicate, step) contract of :mod:`lks.noise`.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy import fft as sfft

from .grids import DIRICHLET, PERIODIC, Field, Grid
from .kernel import KernelSpec
from .noise import NoisePlan, NoiseRecord, gaussian_block, lattice_increment, spectral_increment

DIVERGENCE_LIMIT = 1e12

OPERATOR_LKS = "lks"
OPERATOR_HEAT = "heat"

SCHEME_EULER = "exponential_euler"
SCHEME_EXACT_NOISE = "exact_noise"


class SimulationDivergedError(RuntimeError):
    def __init__(self, step: int, t: float):
        super().__init__(f"simulation diverged at step {step} (t = {t:g})")
        self.step = step
        self.t = t


class DriftStabilityError(RuntimeError):
    def __init__(self, step: int, dt: float, max_bprime: float):
        suggested = 0.5 / max_bprime
        super().__init__(
            f"dt * max|b'(U)| = {dt * max_bprime:.3f} > 0.5 at step {step}; "
            f"reduce dt below {suggested:.3e}"
        )
        self.step = step
        self.suggested_dt = suggested


@dataclass(frozen=True)
class DriftSpec:
    """Polynomial drift b(u) = sum_k c_k u^k."""

    coefficients: tuple[float, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "coefficients", tuple(float(c) for c in self.coefficients))

    @property
    def is_zero(self) -> bool:
        return all(c == 0.0 for c in self.coefficients)

    @property
    def degree(self) -> int:
        coeffs = self.coefficients
        for k in range(len(coeffs) - 1, -1, -1):
            if coeffs[k] != 0.0:
                return k
        return 0

    @property
    def is_swift_hohenberg(self) -> bool:
        """Odd leading degree 2p-1 with negative leading coefficient."""
        n = self.degree
        return n >= 1 and n % 2 == 1 and self.coefficients[n] < 0.0

    def __call__(self, u: np.ndarray) -> np.ndarray:
        if self.is_zero:
            return np.zeros_like(u)
        return np.polynomial.polynomial.polyval(u, self.coefficients)

    def derivative_max(self, u: np.ndarray) -> float:
        if len(self.coefficients) <= 1:
            return 0.0
        dcoeffs = np.polynomial.polynomial.polyder(self.coefficients)
        return float(np.max(np.abs(np.polynomial.polynomial.polyval(u, dcoeffs))))


@dataclass(frozen=True)
class DiffusionSpec:
    """Constant kappa or affine kappa0 + kappa1 u diffusion coefficient."""

    kind: str = "constant"
    params: tuple[float, ...] = (1.0,)

    def __post_init__(self):
        object.__setattr__(self, "params", tuple(float(p) for p in self.params))
        if self.kind == "constant":
            if len(self.params) != 1:
                raise ValueError("constant diffusion takes one parameter kappa")
        elif self.kind == "affine":
            if len(self.params) != 2:
                raise ValueError("affine diffusion takes (kappa0, kappa1)")
        else:
            raise ValueError(f"unknown diffusion kind {self.kind!r}")

    @property
    def is_constant(self) -> bool:
        return self.kind == "constant"

    def __call__(self, u: np.ndarray) -> np.ndarray:
        if self.kind == "constant":
            return np.full_like(u, self.params[0])
        return self.params[0] + self.params[1] * u


@dataclass(frozen=True)
class SimConfig:
    spec: KernelSpec
    grid: Grid
    dt: float
    t_end: float
    drift: DriftSpec = DriftSpec()
    diffusion: DiffusionSpec = DiffusionSpec()
    eps1: float = 1.0
    eps2: float = 1.0
    seed: int = 0
    noise_scheme: str = "lattice"
    u0: Field | None = None
    scheme: str = SCHEME_EULER
    operator: str = OPERATOR_LKS
    # noise increments per step are sums of this many finer sub-increments,
    # so runs at dt and dt/substeps can share the identical driving noise
    noise_substeps: int = 1

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.t_end < self.dt:
            raise ValueError("t_end must be at least dt")
        if not self.eps1 > 0:
            raise ValueError("eps1 must be positive")
        if self.eps2 < 0:
            raise ValueError("eps2 must be nonnegative")
        if self.grid.dim != self.spec.dim:
            raise ValueError("grid and spec dimensions differ")
        if self.scheme not in (SCHEME_EULER, SCHEME_EXACT_NOISE):
            raise ValueError(f"unknown scheme {self.scheme!r}")
        if self.operator not in (OPERATOR_LKS, OPERATOR_HEAT):
            raise ValueError(f"unknown operator {self.operator!r}")
        if self.scheme == SCHEME_EXACT_NOISE:
            if not self.diffusion.is_constant:
                raise ValueError("exact_noise scheme requires constant diffusion")
            if self.grid.boundary != PERIODIC:
                raise ValueError("exact_noise scheme requires a periodic grid")
            if self.noise_substeps != 1:
                raise ValueError("noise_substeps applies to the exponential_euler scheme")
        if self.noise_substeps < 1:
            raise ValueError("noise_substeps must be >= 1")
        if self.u0 is not None and self.u0.grid != self.grid:
            raise ValueError("u0 grid does not match config grid")

    @property
    def n_steps(self) -> int:
        n = int(round(self.t_end / self.dt))
        if abs(n * self.dt - self.t_end) > 1e-9 * max(1.0, self.t_end):
            raise ValueError("t_end must be a multiple of dt")
        return n

    @property
    def noise_plan(self) -> NoisePlan:
        """The plan whose keys address the consumed increments (the fine plan
        when noise_substeps > 1)."""
        return NoisePlan(
            self.grid, self.dt / self.noise_substeps, self.seed, self.noise_scheme
        )

    def with_(self, **kw) -> "SimConfig":
        return replace(self, **kw)


@dataclass(frozen=True)
class NoiseKeys:
    """Replay handle: everything identifying a trajectory's driving noise."""

    plan: NoisePlan
    replicate: int
    n_steps: int

    def record(self) -> NoiseRecord:
        return NoiseRecord(self.plan)


# ----------------------------------------------------------------------------
# transforms and symbols (independent of detsolver's implementations)
# ----------------------------------------------------------------------------

def operator_symbol(cfg: SimConfig) -> np.ndarray:
    """lambda(k) over the transform layout, built axis by axis."""
    grid = cfg.grid
    if grid.boundary == DIRICHLET:
        n = grid.points[0]
        L = grid.extent[0]
        m = np.arange(1, n)
        k2 = (m * np.pi / L) ** 2
    else:
        k2 = 0.0
        for axis in range(grid.dim):
            n = grid.points[axis]
            L = grid.extent[axis]
            if axis == grid.dim - 1:
                f = np.arange(n // 2 + 1)
            else:
                f = np.fft.fftfreq(n, d=1.0 / n)
            ks = (2.0 * np.pi / L) * f
            shape = [1] * grid.dim
            shape[axis] = ks.size
            k2 = k2 + (ks**2).reshape(shape)
    if cfg.operator == OPERATOR_HEAT:
        return cfg.eps1 / 2.0 * k2
    return cfg.eps1 / 8.0 * (k2 - 2.0 * cfg.spec.theta) ** 2


def _forward(values: np.ndarray, grid: Grid) -> np.ndarray:
    axes = tuple(range(values.ndim - grid.dim, values.ndim))
    if grid.boundary == DIRICHLET:
        return sfft.dst(values, type=1, axis=-1)
    return sfft.rfftn(values, axes=axes)


def _inverse(coeffs: np.ndarray, grid: Grid) -> np.ndarray:
    axes = tuple(range(coeffs.ndim - grid.dim, coeffs.ndim))
    if grid.boundary == DIRICHLET:
        return sfft.idst(coeffs, type=1, axis=-1)
    return sfft.irfftn(coeffs, s=grid.points, axes=axes)


# ----------------------------------------------------------------------------
# stepping
# ----------------------------------------------------------------------------

class _Engine:
    """Batched stepping core: state shape (n_replicates, *grid.shape)."""

    def __init__(self, cfg: SimConfig, replicates: tuple[int, ...]):
        self.cfg = cfg
        self.replicates = replicates
        self.lam = operator_symbol(cfg)
        self.decay = np.exp(-cfg.dt * self.lam)
        grid = cfg.grid
        u0 = cfg.u0.values if cfg.u0 is not None else np.zeros(grid.shape)
        self.state = np.broadcast_to(u0, (len(replicates),) + grid.shape).copy()
        self.step_index = 0
        if cfg.scheme == SCHEME_EXACT_NOISE:
            # per-mode std of the exactly integrated stochastic convolution
            rho = grid.cell_count**2 / np.prod(grid.extent)
            with np.errstate(divide="ignore", invalid="ignore"):
                var = rho * (-np.expm1(-2.0 * cfg.dt * self.lam)) / (2.0 * self.lam)
            var = np.where(self.lam < 1e-300, rho * cfg.dt, var)
            kappa = cfg.diffusion.params[0]
            self.exact_shape = cfg.eps2 * kappa * np.sqrt(var)
        else:
            self.exact_shape = None

    def noise_term(self, replicate: int, step: int) -> np.ndarray:
        """Physical-space dW consumed by step ``step`` (the sum of this
        step's sub-increments when noise_substeps > 1)."""
        cfg = self.cfg
        plan = cfg.noise_plan
        s = cfg.noise_substeps
        out = None
        for j in range(s):
            fine_step = (step - 1) * s + j + 1
            if plan.scheme == "lattice":
                dw = lattice_increment(plan, replicate, fine_step)
            else:
                dw = _inverse(spectral_increment(plan, replicate, fine_step), cfg.grid)
            out = dw if out is None else out + dw
        return out

    def advance(self) -> None:
        cfg = self.cfg
        self.step_index += 1
        step = self.step_index
        u = self.state
        if not cfg.drift.is_zero:
            mx = cfg.drift.derivative_max(u)
            if cfg.dt * mx > 0.5:
                raise DriftStabilityError(step, cfg.dt, mx)

        if cfg.scheme == SCHEME_EXACT_NOISE:
            coeffs = _forward(u, cfg.grid)
            if not cfg.drift.is_zero:
                coeffs = coeffs + _forward(cfg.drift(u), cfg.grid) * cfg.dt
            coeffs *= self.decay
            if cfg.eps2 != 0.0:
                plan = cfg.noise_plan
                for i, rep in enumerate(self.replicates):
                    unit = _unit_spectral(plan, rep, step)
                    coeffs[i] += self.exact_shape * unit
            self.state = _inverse(coeffs, cfg.grid)
        else:
            incr = u.copy()
            if not cfg.drift.is_zero:
                incr += cfg.drift(u) * cfg.dt
            if cfg.eps2 != 0.0:
                a_u = cfg.diffusion(u)
                for i, rep in enumerate(self.replicates):
                    incr[i] += cfg.eps2 * a_u[i] * self.noise_term(rep, step)
            self.state = _inverse(self.decay * _forward(incr, cfg.grid), cfg.grid)

        bad = ~np.isfinite(self.state)
        if bad.any() or np.abs(self.state).max() > DIVERGENCE_LIMIT:
            raise SimulationDivergedError(step, step * cfg.dt)

    def warm_start(self, mode_std: np.ndarray, step: int = 0) -> None:
        """Initialize the state from per-mode Gaussian coefficients (used by
        measurement runs that start from an exactly known linear-case law)."""
        cfg = self.cfg
        plan = cfg.noise_plan
        coeffs = np.empty((len(self.replicates),) + mode_std.shape, dtype=complex)
        for i, rep in enumerate(self.replicates):
            coeffs[i] = mode_std * _unit_spectral(plan, rep, step)
        self.state = _inverse(coeffs, cfg.grid)


def _unit_spectral(plan: NoisePlan, replicate: int, step: int) -> np.ndarray:
    """Hermitian spectral noise with unit per-mode variance."""
    raw = spectral_increment(plan, replicate, step)
    return raw / (plan.cell_std * np.sqrt(plan.grid.cell_count))


def step_exponential_euler(
    cfg: SimConfig, state: Field, replicate: int, step: int
) -> Field:
    """One discrete Duhamel step from the given state.

    ``step`` indexes the consumed noise increment (starting at 1 for the
    first step out of t = 0), so identical (seed, replicate, step) triples
    reproduce bit-identical transitions.
    """
    if state.grid != cfg.grid:
        raise ValueError("state grid does not match config")
    if not np.all(np.isfinite(state.values)):
        raise ValueError("state must be finite")
    eng = _Engine(cfg.with_(u0=Field(cfg.grid, 0.0, state.values)), (replicate,))
    eng.step_index = step - 1
    eng.advance()
    return Field(cfg.grid, state.time + cfg.dt, eng.state[0])


def simulate(
    cfg: SimConfig, replicate: int, snapshot_times: list[float]
) -> tuple[list[Field], NoiseKeys]:
    """Run one replicate, returning requested snapshots and the noise keys
    needed to replay the identical driving increments."""
    n_steps = cfg.n_steps
    snap_steps = _snapshot_steps(cfg, snapshot_times)
    eng = _Engine(cfg, (replicate,))
    out: list[Field] = []
    if 0 in snap_steps:
        out.append(Field(cfg.grid, 0.0, eng.state[0].copy()))
    for n in range(1, n_steps + 1):
        eng.advance()
        if n in snap_steps:
            out.append(Field(cfg.grid, n * cfg.dt, eng.state[0].copy()))
    return out, NoiseKeys(cfg.noise_plan, replicate, n_steps)


def _snapshot_steps(cfg: SimConfig, snapshot_times) -> set[int]:
    steps = set()
    for t in snapshot_times:
        n = int(round(t / cfg.dt))
        if abs(n * cfg.dt - t) > 1e-9 * max(1.0, cfg.t_end):
            raise ValueError(f"snapshot time {t} is not a multiple of dt={cfg.dt}")
        if not (0 <= n <= cfg.n_steps):
            raise ValueError(f"snapshot time {t} outside [0, t_end]")
        steps.add(n)
    return steps


def simulate_ensemble(cfg: SimConfig, replicates, observer) -> None:
    """Advance a batch of replicates, invoking ``observer(step, t, states)``
    after every step (and once at step 0).  ``states`` has shape
    (len(replicates), *grid.shape) and must not be mutated."""
    eng = _Engine(cfg, tuple(replicates))
    observer(0, 0.0, eng.state)
    for n in range(1, cfg.n_steps + 1):
        eng.advance()
        observer(n, n * cfg.dt, eng.state)


# ----------------------------------------------------------------------------
# weak (test-function) formulation residual
# ----------------------------------------------------------------------------

def validate_test_function(grid: Grid, phi: Field, tol: float = 1e-6) -> None:
    """Test functions must be smooth with phi = Lap phi = 0 on a Dirichlet
    boundary; on periodic boxes any smooth field qualifies."""
    if phi.grid != grid:
        raise ValueError("phi grid does not match")
    if grid.boundary == DIRICHLET:
        v = phi.values
        scale = float(np.max(np.abs(v))) or 1.0
        dx = grid.spacing[0]
        edge = max(abs(2 * v[0] - v[1]), abs(2 * v[-1] - v[-2]))
        lap = (v[:-2] - 2 * v[1:-1] + v[2:]) / dx**2
        lap_edge = max(abs(2 * lap[0] - lap[1]), abs(2 * lap[-1] - lap[-2]))
        lap_scale = float(np.max(np.abs(lap))) or 1.0
        allowance = max(tol, 40.0 * (np.pi * dx / grid.extent[0]) ** 3)
        if edge / scale > allowance or lap_edge / lap_scale > max(allowance, 1e-3):
            raise ValueError("phi (or its Laplacian) does not vanish on the boundary")


def weak_form_residual(
    cfg: SimConfig, trajectory: list[Field], keys: NoiseKeys, phi: Field
) -> float:
    """Absolute mismatch of the test-function identity on a discrete path.

    (U(t) - u0, phi) must equal the time quadrature of
    -(U, (eps1/8)(Lap + 2 theta)^2 phi) + (b(U), phi) plus the Walsh sum
    int a(U) phi dW, with the identical replayed increments.  Requires the
    trajectory at every step (snapshot all multiples of dt).
    """
    validate_test_function(cfg.grid, phi)
    if cfg.scheme != SCHEME_EULER:
        raise ValueError("weak-form replay is defined for the exponential_euler scheme")
    if len(trajectory) < 2:
        raise ValueError("trajectory must contain every step from t=0")
    vol = cfg.grid.cell_volume
    inner = lambda a, b: float(np.sum(a * b) * vol)
    lam = operator_symbol(cfg)
    lphi = _inverse(lam * _forward(phi.values, cfg.grid), cfg.grid)

    n = len(trajectory) - 1
    lhs = inner(trajectory[-1].values - trajectory[0].values, phi.values)
    rhs = 0.0
    rec = keys.record()
    for m in range(n):
        u = trajectory[m].values
        rhs += (-inner(u, lphi) + inner(cfg.drift(u), phi.values)) * cfg.dt
        if cfg.eps2 != 0.0:
            dw = rec.increment(keys.replicate, m + 1).values
            rhs += inner(cfg.eps2 * cfg.diffusion(u) * dw, phi.values)
    return abs(lhs - rhs)
