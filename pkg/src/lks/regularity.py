"""Moment-scaling estimation of path regularity, and order-parameter sweeps.

A structure function is the pooled p-th absolute moment of field increments,

    S_p(h) = E |U(. + h) - U(.)|^p,

taken across a lag ladder in space or in time.  On a scaling range
S_p(h) ~ h^{p gamma}, so the weighted log-log slope divided by p estimates
the Holder-type exponent gamma; standard errors come from replicate-level
batching.  The theoretical targets are (4-d)/8 in time and ((4-d)/2) ^ 1 in
space for the fourth-order family, and 1/4, 1/2 for the second-order heat
baseline in d = 1.

The heavy Monte Carlo drivers stream batched replicate ensembles through the
simulator without materializing trajectories, and (for the zero-drift
constant-diffusion runs they are used with) may start from the exactly known
Gaussian law at a base time (``warm_start``), which removes the spin-up cost
of the slow near-band modes; the measured increments are still produced by
honest stepping.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .grids import Field, Grid
from .kernel import KernelSpec
from . import linear_theory
from .spdesim import (
    SCHEME_EXACT_NOISE,
    OPERATOR_LKS,
    SimConfig,
    SimulationDivergedError,
    _Engine,
    simulate_ensemble,
)
from .parallel import map_blocks

MIN_REPLICATES = 50
MIN_FIT_LAGS = 5
MIN_FIT_DECADES = 1.5


@dataclass
class StructureFunctionTable:
    direction: str  # "time" | "space"
    p: int
    lags: np.ndarray
    estimates: np.ndarray
    stderrs: np.ndarray
    n_replicates: int
    resolution: float  # dt (time) or min grid spacing (space)

    def __post_init__(self):
        if self.direction not in ("time", "space"):
            raise ValueError("direction must be 'time' or 'space'")
        if self.p <= 0 or self.p % 2 != 0:
            raise ValueError("p must be a positive even integer")
        self.lags = np.asarray(self.lags, dtype=float)
        self.estimates = np.asarray(self.estimates, dtype=float)
        self.stderrs = np.asarray(self.stderrs, dtype=float)
        if np.any(self.estimates < 0):
            raise ValueError("estimates must be nonnegative")
        if self.n_replicates < MIN_REPLICATES:
            warnings.warn(
                f"only {self.n_replicates} replicates; statistics may be unreliable",
                stacklevel=2,
            )


@dataclass
class HolderEstimate:
    gamma: float
    stderr: float
    fit_lo: float
    fit_hi: float
    p: int
    r2: float
    degenerate: bool = False
    short_span: bool = False


@dataclass
class RatioExperimentResult:
    eps1: float
    eps2: float
    ratio: float
    q: int
    sup_distance: float
    diverged: bool


def _replicate_stats(per_replicate: np.ndarray) -> tuple[float, float]:
    m = float(np.mean(per_replicate))
    se = float(np.std(per_replicate, ddof=1) / np.sqrt(len(per_replicate)))
    return m, se


def _spatial_increment_moments(
    states: np.ndarray, grid: Grid, offsets_cells: list[tuple[int, ...]], powers: tuple[int, ...]
) -> dict[int, np.ndarray]:
    """Per-replicate spatial means of |U(x+z) - U(x)|^p, one row per offset."""
    n_rep = states.shape[0]
    out = {p: np.empty((len(offsets_cells), n_rep)) for p in powers}
    axes = tuple(range(1, grid.dim + 1))
    red = tuple(range(1, grid.dim + 1))
    for i, off in enumerate(offsets_cells):
        shifted = np.roll(states, shift=off, axis=axes)
        diff = np.abs(shifted - states)
        for p in powers:
            out[p][i] = np.mean(diff**p, axis=red)
    return out


def structure_function(
    trajectories: list[list[Field]],
    direction: str,
    p: int,
    lags,
) -> StructureFunctionTable:
    """Structure function from materialized trajectory snapshots.

    ``trajectories`` is one snapshot list per replicate (identical snapshot
    schedules).  Spatial lags must be integer multiples of the grid spacing;
    increments are pooled over base points, axes, and replicates.  Temporal
    lags must be representable as differences of snapshot times; increments
    pool over base snapshots, grid points, and replicates.
    """
    if not trajectories:
        raise ValueError("need at least one replicate")
    lags = np.asarray(sorted(float(v) for v in lags))
    n_rep = len(trajectories)
    grid = trajectories[0][0].grid

    if direction == "space":
        dx = min(grid.spacing)
        per_rep = np.zeros((lags.size, n_rep))
        for r, snaps in enumerate(trajectories):
            state = snaps[-1].values[None, ...]
            offs = []
            for lag in lags:
                m = int(round(lag / dx))
                if abs(m * dx - lag) > 1e-9:
                    raise ValueError(f"spatial lag {lag} is not a multiple of dx={dx}")
                offs.append(m)
            for i, m in enumerate(offs):
                acc = 0.0
                for axis in range(grid.dim):
                    shift = [0] * grid.dim
                    shift[axis] = m
                    d = np.abs(np.roll(state, shift, axis=tuple(range(1, grid.dim + 1))) - state)
                    acc += float(np.mean(d**p))
                per_rep[i, r] = acc / grid.dim
        resolution = dx
    elif direction == "time":
        times = np.array([f.time for f in trajectories[0]])
        per_rep = np.zeros((lags.size, n_rep))
        for i, lag in enumerate(lags):
            pairs = [
                (a, b)
                for a in range(times.size)
                for b in range(a + 1, times.size)
                if abs((times[b] - times[a]) - lag) < 1e-9 * max(1.0, lag)
            ]
            if not pairs:
                raise ValueError(f"temporal lag {lag} not resolvable on the snapshot schedule")
            for r, snaps in enumerate(trajectories):
                vals = [np.mean(np.abs(snaps[b].values - snaps[a].values) ** p) for a, b in pairs]
                per_rep[i, r] = float(np.mean(vals))
        resolution = float(np.min(np.diff(np.unique(times)))) if times.size > 1 else lags[0]
    else:
        raise ValueError("direction must be 'time' or 'space'")

    est = per_rep.mean(axis=1)
    se = per_rep.std(axis=1, ddof=1) / np.sqrt(n_rep) if n_rep > 1 else np.zeros(lags.size)
    return StructureFunctionTable(direction, p, lags, est, se, n_rep, resolution)


def estimate_holder(
    table: StructureFunctionTable,
    fit_range: tuple[float, float] | None = None,
    min_lag_factor: float = 4.0,
    drop_top_fraction: float = 0.2,
    allow_short_span: bool = False,
) -> HolderEstimate:
    """Weighted log-log fit of the structure function; gamma = slope / p.

    The default fit window drops lags within ``min_lag_factor`` resolutions
    of the grid scale and the largest ``drop_top_fraction`` of lags.  A fit
    over fewer than 5 lags or under 1.5 decades is rejected unless
    ``allow_short_span`` (then flagged); R^2 < 0.95 flags the fit degenerate.
    """
    lags = table.lags
    if fit_range is None:
        keep = lags >= min_lag_factor * table.resolution
        if drop_top_fraction > 0:
            cutoff = np.quantile(lags, 1.0 - drop_top_fraction)
            keep &= lags <= cutoff
    else:
        keep = (lags >= fit_range[0]) & (lags <= fit_range[1])
    keep &= table.estimates > 0
    sel_lags = lags[keep]
    sel_est = table.estimates[keep]
    sel_se = table.stderrs[keep]

    short = sel_lags.size < MIN_FIT_LAGS or (
        sel_lags.size and np.log10(sel_lags.max() / sel_lags.min()) < MIN_FIT_DECADES
    )
    if short and not allow_short_span:
        raise ValueError(
            f"fit window has {sel_lags.size} lags over "
            f"{np.log10(sel_lags.max() / sel_lags.min()) if sel_lags.size else 0:.2f} decades; "
            "need >= 5 lags spanning >= 1.5 decades (pass allow_short_span to override)"
        )
    if sel_lags.size < 2:
        raise ValueError("not enough usable lags to fit")

    x = np.log(sel_lags)
    y = np.log(sel_est)
    with np.errstate(divide="ignore"):
        rel = np.where(sel_est > 0, sel_se / sel_est, np.inf)
    w = np.where(rel > 0, 1.0 / np.maximum(rel, 1e-6) ** 2, 1.0)
    w = np.where(np.isfinite(w), w, 1.0)
    wsum = w.sum()
    xbar = (w * x).sum() / wsum
    ybar = (w * y).sum() / wsum
    sxx = (w * (x - xbar) ** 2).sum()
    slope = (w * (x - xbar) * (y - ybar)).sum() / sxx
    intercept = ybar - slope * xbar
    resid = y - (slope * x + intercept)
    dof = max(x.size - 2, 1)
    slope_se = np.sqrt((w * resid**2).sum() / dof / sxx)
    ss_tot = (w * (y - ybar) ** 2).sum()
    r2 = 1.0 - (w * resid**2).sum() / ss_tot if ss_tot > 0 else 1.0
    return HolderEstimate(
        gamma=float(slope / table.p),
        stderr=float(slope_se / table.p),
        fit_lo=float(sel_lags.min()),
        fit_hi=float(sel_lags.max()),
        p=table.p,
        r2=float(r2),
        degenerate=bool(r2 < 0.95),
        short_span=bool(short),
    )


# ----------------------------------------------------------------------------
# streaming Monte Carlo driver for the regularity experiments
# ----------------------------------------------------------------------------

@dataclass(frozen=True)
class HolderRunConfig:
    """One ensemble run producing temporal and/or spatial structure tables.

    ``temporal_lag_steps`` are lags in units of dt measured from the base
    time; spatial offsets are lattice cell vectors measured at the base time.
    ``warm_start`` draws the replicate states at base - spin_steps*dt from
    the exact linear-chain law, then advances ``spin_steps`` honest steps to
    the base; it requires zero drift and constant diffusion.
    """

    equation: str  # "lks" | "heat"
    dim: int
    points: int
    extent: float
    dt: float
    base_time: float
    temporal_lag_steps: tuple[int, ...] = ()
    spatial_offsets: tuple[tuple[int, ...], ...] = ()
    replicates: int = 512
    seed: int = 2024
    theta: float = 1.0
    eps1: float = 1.0
    eps2: float = 1.0
    warm_start: bool = True
    spin_steps: int = 16
    powers: tuple[int, ...] = (2,)

    def sim_config(self) -> SimConfig:
        grid = Grid(self.dim, (self.extent,) * self.dim, (self.points,) * self.dim)
        spec = KernelSpec(1.0, self.theta, self.dim)
        n_window = max(self.temporal_lag_steps, default=0) + self.spin_steps
        return SimConfig(
            spec=spec,
            grid=grid,
            dt=self.dt,
            t_end=max(n_window, 1) * self.dt,
            eps1=self.eps1,
            eps2=self.eps2,
            seed=self.seed,
            scheme=SCHEME_EXACT_NOISE,
            operator=self.equation if self.equation == "heat" else OPERATOR_LKS,
        )


@dataclass
class HolderRunResult:
    temporal: dict[int, StructureFunctionTable] = field(default_factory=dict)
    spatial: dict[int, StructureFunctionTable] = field(default_factory=dict)


def run_holder_experiment(hcfg: HolderRunConfig, threads: int = 1) -> HolderRunResult:
    cfg = hcfg.sim_config()
    offsets = [tuple(o) for o in hcfg.spatial_offsets]
    lag_steps = sorted(hcfg.temporal_lag_steps)
    powers = hcfg.powers

    def run_block(replicates: tuple[int, ...]):
        eng = _Engine(cfg, replicates)
        if hcfg.warm_start:
            t_warm = hcfg.base_time - hcfg.spin_steps * hcfg.dt
            if t_warm < 0:
                raise ValueError("spin_steps exceed the base time")
            std = np.sqrt(linear_theory.mode_variance(cfg, t_warm))
            eng.warm_start(std, step=0)
        for _ in range(hcfg.spin_steps):
            eng.advance()
        base = eng.state.copy()
        sp = (
            _spatial_increment_moments(base, cfg.grid, offsets, powers)
            if offsets
            else {p: np.empty((0, len(replicates))) for p in powers}
        )
        tp = {p: np.empty((len(lag_steps), len(replicates))) for p in powers}
        red = tuple(range(1, cfg.grid.dim + 1))
        next_idx = 0
        for m in range(1, max(lag_steps, default=0) + 1):
            eng.advance()
            if next_idx < len(lag_steps) and m == lag_steps[next_idx]:
                diff = np.abs(eng.state - base)
                for p in powers:
                    tp[p][next_idx] = np.mean(diff**p, axis=red)
                next_idx += 1
        return sp, tp

    all_reps = tuple(range(hcfg.replicates))
    blocks = map_blocks(run_block, all_reps, block_size=64, threads=threads)

    result = HolderRunResult()
    dxmin = min(cfg.grid.spacing)
    for p in powers:
        if offsets:
            per_rep = np.concatenate([b[0][p] for b in blocks], axis=1)
            znorm = np.array(
                [np.sqrt(sum((c * dx) ** 2 for c, dx in zip(o, cfg.grid.spacing))) for o in offsets]
            )
            order = np.argsort(znorm)
            est, se = zip(*(_replicate_stats(per_rep[i]) for i in order))
            result.spatial[p] = StructureFunctionTable(
                "space", p, znorm[order], np.array(est), np.array(se), hcfg.replicates, dxmin
            )
        if lag_steps:
            per_rep = np.concatenate([b[1][p] for b in blocks], axis=1)
            taus = np.array(lag_steps) * hcfg.dt
            est, se = zip(*(_replicate_stats(per_rep[i]) for i in range(len(lag_steps))))
            result.temporal[p] = StructureFunctionTable(
                "time", p, taus, np.array(est), np.array(se), hcfg.replicates, hcfg.dt
            )
    return result


def geometric_lag_steps(lo: int, hi: int, n: int) -> tuple[int, ...]:
    """Distinct integer lag multipliers, geometrically spaced."""
    vals = {int(round(lo * (hi / lo) ** (j / (n - 1)))) for j in range(n)}
    return tuple(sorted(vals))


# ----------------------------------------------------------------------------
# critical order-parameter ratio sweep
# ----------------------------------------------------------------------------

def critical_ratio_sweep(
    base: SimConfig,
    schedule: list[tuple[float, float]],
    q: int = 1,
    replicates: int = 128,
    n_snapshots: int = 16,
    threads: int = 1,
) -> list[RatioExperimentResult]:
    """Monte Carlo sup over (t, x) of E|U_{e1,e2} - u_{e1}|^{2q} per pair.

    The deterministic twin u is the eps2 = 0 run with the shared config; the
    sup is the max over a geometric snapshot schedule and the lattice.
    Divergence is recorded per pair, not fatal.
    """
    d = base.grid.dim
    results = []
    for eps1, eps2 in schedule:
        cfg = base.with_(eps1=eps1, eps2=eps2)
        snap_steps = sorted(
            {
                max(1, int(round(cfg.n_steps * (i + 1) / n_snapshots)))
                for i in range(n_snapshots)
            }
        )
        try:
            sup = _sup_distance(cfg, snap_steps, q, replicates, threads)
            diverged = False
        except SimulationDivergedError:
            sup = float("nan")
            diverged = True
        results.append(
            RatioExperimentResult(
                eps1=eps1,
                eps2=eps2,
                ratio=eps2 / eps1 ** (d / 8.0),
                q=q,
                sup_distance=sup,
                diverged=diverged,
            )
        )
    return results


def _sup_distance(cfg: SimConfig, snap_steps, q: int, replicates: int, threads: int) -> float:
    # deterministic twin evolves once; with zero drift it is the spectral flow
    twin_cfg = cfg.with_(eps2=0.0)
    twin = {0: (cfg.u0.values.copy() if cfg.u0 is not None else np.zeros(cfg.grid.shape))}
    eng = _Engine(twin_cfg, (0,))
    for n in range(1, max(snap_steps) + 1):
        eng.advance()
        if n in snap_steps:
            twin[n] = eng.state[0].copy()

    snap_set = set(snap_steps)

    def run_block(reps: tuple[int, ...]):
        sums = {}

        def observer(step, t, states):
            if step in snap_set:
                diff = np.abs(states - twin[step]) ** (2 * q)
                sums[step] = diff.sum(axis=0)

        block_cfg = cfg.with_(t_end=max(snap_steps) * cfg.dt)
        simulate_ensemble(block_cfg, reps, observer)
        return {n: (s, len(reps)) for n, s in sums.items()}

    all_reps = tuple(range(replicates))
    blocks = map_blocks(run_block, all_reps, block_size=64, threads=threads)
    sup = 0.0
    for n in snap_steps:
        total = sum(b[n][0] for b in blocks)
        count = sum(b[n][1] for b in blocks)
        mean_field = total / count
        sup = max(sup, float(mean_field.max()))
    return sup


def scaling_regression(results: list[RatioExperimentResult], dim: int) -> tuple[float, float]:
    """Slope (and stderr) of log sup-distance vs log(eps2^2 / eps1^{d/4})."""
    pts = [(r.eps2**2 / r.eps1 ** (dim / 4.0), r.sup_distance) for r in results if not r.diverged]
    if len(pts) < 3:
        raise ValueError("need at least 3 non-diverged results")
    x = np.log([p[0] for p in pts])
    y = np.log([p[1] for p in pts])
    A = np.vstack([x, np.ones_like(x)]).T
    coef, res, *_ = np.linalg.lstsq(A, y, rcond=None)
    dof = max(len(x) - 2, 1)
    resid = y - A @ coef
    se = float(np.sqrt((resid**2).sum() / dof / ((x - x.mean()) ** 2).sum()))
    return float(coef[0]), se


# ----------------------------------------------------------------------------
# CSV emission
# ----------------------------------------------------------------------------

def structure_table_csv(table: StructureFunctionTable, fh) -> None:
    fh.write("direction,p,lag,moment,stderr,n\n")
    for lag, est, se in zip(table.lags, table.estimates, table.stderrs):
        fh.write(
            f"{table.direction},{table.p},{lag:.17g},{est:.17g},{se:.17g},{table.n_replicates}\n"
        )


def holder_fit_csv(rows: list[tuple[str, HolderEstimate]], fh) -> None:
    fh.write("label,gamma,stderr,r2,fit_lo,fit_hi\n")
    for label, h in rows:
        fh.write(
            f"{label},{h.gamma:.17g},{h.stderr:.17g},{h.r2:.17g},{h.fit_lo:.17g},{h.fit_hi:.17g}\n"
        )


def sweep_csv(results: list[RatioExperimentResult], fh) -> None:
    fh.write("eps1,eps2,ratio,q,sup_distance,diverged\n")
    for r in results:
        fh.write(
            f"{r.eps1:.17g},{r.eps2:.17g},{r.ratio:.17g},{r.q},{r.sup_distance:.17g},{int(r.diverged)}\n"
        )
