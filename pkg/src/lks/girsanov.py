"""Change-of-measure machinery: ratio fields, exponential weights, stopping
times, and the two-route law-equivalence check.

For a drifted equation with drift b and diffusion a, the drift/diffusion
ratio R(u) = b(u)/a(u) drives the Radon-Nikodym weight

    Xi_T = exp( sum_n sum_x R(U_n(x)) dW_n(x) vol
                - 1/2 sum_n sum_x R(U_n(x))^2 dt vol ),

accumulated with the same left-point increments that drove the simulation,
so the replayed dW are exactly the simulation's variates.  Because R(U_n) is
measurable at the left point and the cell increments are Gaussian, the
discrete weight is an exact martingale: E[Xi] = 1 for every dt.

Reweighting zero-drift paths by Xi reproduces drifted-law expectations:
E[f(U) Xi] = E[f(V)], which ``law_equivalence_check`` verifies by z-scores
over independent ensembles.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .spdesim import (
    DiffusionSpec,
    DriftSpec,
    NoiseKeys,
    SCHEME_EULER,
    SimConfig,
    _Engine,
)
from .parallel import map_blocks


@dataclass
class RatioField:
    """R(t_n, x) = b(U_n(x)) / a(U_n(x)) on the trajectory lattice."""

    values: np.ndarray  # shape (n_steps, *grid.shape): left points 0..n-1

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if not np.all(np.isfinite(self.values)):
            raise ValueError("ratio field must be finite")


@dataclass
class GirsanovLedger:
    """Running stochastic-integral and quadratic-variation accumulators.

    ``stoch_series[n]`` / ``quad_series[n]`` hold the accumulated values
    after n steps; the weight is exp(stoch - quad/2), always positive, with
    the log kept explicitly to avoid overflow.
    """

    stoch_series: np.ndarray
    quad_series: np.ndarray

    @property
    def stoch_integral(self) -> float:
        return float(self.stoch_series[-1])

    @property
    def quad_integral(self) -> float:
        return float(self.quad_series[-1])

    @property
    def log_weight(self) -> float:
        return self.stoch_integral - 0.5 * self.quad_integral

    @property
    def weight(self) -> float:
        return float(np.exp(self.log_weight))

    @property
    def novikov_surrogate(self) -> float:
        """exp(quad/2), the diagnostic integrability proxy."""
        return float(np.exp(0.5 * self.quad_integral))


@dataclass
class StoppingTime:
    n: float
    tau: float
    capped: bool  # True when the level was never reached before T


def ratio_field(
    trajectory: list, drift: DriftSpec, diffusion: DiffusionSpec, zero_limit: float | None = None
) -> RatioField:
    """Pointwise b(u)/a(u) over the left points of a trajectory.

    With constant diffusion kappa != 0 the ratio is b(u)/kappa.  With
    multiplicative diffusion a(u) = kappa1 * u, the u -> 0 convention is
    lim b(u)/a(u) = c1/kappa1 (finite only when b has no constant term).
    """
    if diffusion.kind == "constant":
        kappa = diffusion.params[0]
        if kappa == 0.0:
            raise ValueError("constant diffusion must be nonzero for the ratio")
        vals = np.stack([drift(f.values) / kappa for f in trajectory[:-1]])
        return RatioField(vals)
    k0, k1 = diffusion.params
    if k0 != 0.0:
        out = []
        for f in trajectory[:-1]:
            a = k0 + k1 * f.values
            if np.any(a == 0.0):
                raise ValueError("diffusion vanishes on the path; ratio undefined")
            out.append(drift(f.values) / a)
        return RatioField(np.stack(out))
    # multiplicative a(u) = k1 u: apply the u -> 0 convention
    if k1 == 0.0:
        raise ValueError("diffusion is identically zero")
    coeffs = drift.coefficients
    if coeffs and coeffs[0] != 0.0:
        raise ValueError("ratio undefined at u = 0: drift has a constant term")
    c1 = coeffs[1] if len(coeffs) > 1 else 0.0
    limit = zero_limit if zero_limit is not None else c1 / k1
    out = []
    for f in trajectory[:-1]:
        u = f.values
        with np.errstate(divide="ignore", invalid="ignore"):
            r = drift(u) / (k1 * u)
        out.append(np.where(u == 0.0, limit, r))
    return RatioField(np.stack(out))


def accumulate_weight(
    trajectory: list, keys: NoiseKeys, ratio: RatioField, dt: float
) -> GirsanovLedger:
    """Replay the driving increments and accumulate the discrete weight.

    Pure accumulation over steps; works in log space throughout.
    """
    n = ratio.values.shape[0]
    if len(trajectory) != n + 1:
        raise ValueError("trajectory must have one more snapshot than ratio steps")
    grid = trajectory[0].grid
    vol = grid.cell_volume
    rec = keys.record()
    stoch = np.zeros(n + 1)
    quad = np.zeros(n + 1)
    for m in range(n):
        r = ratio.values[m]
        dw = rec.increment(keys.replicate, m + 1).values
        stoch[m + 1] = stoch[m] + float(np.sum(r * dw) * vol)
        quad[m + 1] = quad[m] + float(np.sum(r * r) * dt * vol)
    return GirsanovLedger(stoch, quad)


def stopping_times(ledger: GirsanovLedger, levels, T: float) -> list[StoppingTime]:
    """First times the quadratic integral reaches each level, capped at T.

    tau is nondecreasing in the level, and equals T (capped) for every level
    beyond the path's total quadratic integral.
    """
    quad = ledger.quad_series
    n = quad.size - 1
    dt = T / n if n else T
    out = []
    for lvl in levels:
        idx = int(np.searchsorted(quad, lvl, side="left"))
        if idx > n:
            out.append(StoppingTime(lvl, T, capped=True))
        else:
            out.append(StoppingTime(lvl, idx * dt, capped=False))
    return out


@dataclass
class FunctionalCheck:
    label: str
    direct_mean: float
    direct_se: float
    reweighted_mean: float
    reweighted_se: float
    z: float
    ess: float


def law_equivalence_check(
    cfg: SimConfig,
    drift: DriftSpec,
    functionals: dict,
    n_replicates: int = 10_000,
    threads: int = 1,
    ess_floor: float = 100.0,
) -> list[FunctionalCheck]:
    """Two-route Monte Carlo comparison of the drifted law.

    Route one simulates the drifted equation directly and averages each
    functional of the trajectory.  Route two simulates the zero-drift
    equation with independent noise (offset seed), accumulates the
    Radon-Nikodym weight along each path, and averages f(U) Xi.  Returns a
    z-score per functional; warns when the effective sample size
    (sum Xi)^2 / sum Xi^2 falls below ``ess_floor``.

    Functionals map (times, states-over-time reduced quantities) -> per-path
    scalars; concretely each functional receives the dict of collected path
    summaries, see ``_PATH_SUMMARIES``.
    """
    import warnings

    if cfg.scheme != SCHEME_EULER:
        raise ValueError("law_equivalence_check runs the exponential_euler scheme")
    if not cfg.diffusion.is_constant or cfg.diffusion.params[0] == 0.0:
        raise ValueError("constant nonzero diffusion required")
    if cfg.eps2 <= 0.0:
        raise ValueError("eps2 must be positive (a noiseless law cannot be reweighted)")
    if not cfg.drift.is_zero:
        raise ValueError("pass the drift separately; cfg must be the zero-drift equation")
    # the effective diffusion in front of the noise is eps2 * kappa
    kappa = cfg.eps2 * cfg.diffusion.params[0]
    vol = cfg.grid.cell_volume
    n_steps = cfg.n_steps

    def run_direct(reps):
        dcfg = cfg.with_(drift=drift)
        eng = _Engine(dcfg, reps)
        summ = _SummaryAccumulator(len(reps), cfg)
        summ.observe(eng.state)
        for _ in range(n_steps):
            eng.advance()
            summ.observe(eng.state)
        return {k: v for k, v in summ.finish().items()}

    def run_weighted(reps):
        wcfg = cfg.with_(seed=cfg.seed + 7919)
        eng = _Engine(wcfg, reps)
        summ = _SummaryAccumulator(len(reps), cfg)
        summ.observe(eng.state)
        log_w = np.zeros(len(reps))
        for step in range(1, n_steps + 1):
            u = eng.state
            r = drift(u) / kappa
            for i, rep in enumerate(reps):
                dw = eng.noise_term(rep, step)
                log_w[i] += np.sum(r[i] * dw) * vol
            log_w -= 0.5 * np.sum(r * r, axis=tuple(range(1, u.ndim))) * wcfg.dt * vol
            eng.advance()
            summ.observe(eng.state)
        out = summ.finish()
        out["log_weight"] = log_w
        return out

    reps = tuple(range(n_replicates))
    direct_blocks = map_blocks(run_direct, reps, 256, threads)
    weighted_blocks = map_blocks(run_weighted, reps, 256, threads)

    direct = {
        k: np.concatenate([b[k] for b in direct_blocks]) for k in direct_blocks[0]
    }
    weighted = {
        k: np.concatenate([b[k] for b in weighted_blocks]) for k in weighted_blocks[0]
    }
    w = np.exp(weighted.pop("log_weight"))
    ess = float(w.sum() ** 2 / np.sum(w**2))
    if ess < ess_floor:
        warnings.warn(
            f"effective sample size {ess:.1f} below {ess_floor}; enlarge n or shrink T",
            stacklevel=2,
        )

    checks = []
    for label, fn in functionals.items():
        fv = fn(direct)
        fu = fn(weighted)
        m_direct = float(np.mean(fv))
        se_direct = float(np.std(fv, ddof=1) / np.sqrt(fv.size))
        prod = fu * w
        m_rw = float(np.mean(prod))
        se_rw = float(np.std(prod, ddof=1) / np.sqrt(prod.size))
        denom = np.hypot(se_direct, se_rw) or 1e-300
        checks.append(
            FunctionalCheck(label, m_direct, se_direct, m_rw, se_rw, float((m_direct - m_rw) / denom), ess)
        )
    return checks


class _SummaryAccumulator:
    """Per-path bounded summaries: clipped space-time mean, clipped max |U|,
    and clipped final-time mean square."""

    CLIP = 10.0

    def __init__(self, n: int, cfg: SimConfig):
        self.n_obs = 0
        self.mean_acc = np.zeros(n)
        self.max_abs = np.zeros(n)
        self.last = None
        self.cfg = cfg

    def observe(self, states: np.ndarray) -> None:
        red = tuple(range(1, states.ndim))
        self.mean_acc += states.mean(axis=red)
        self.max_abs = np.maximum(self.max_abs, np.abs(states).max(axis=red))
        self.last = (None, (states**2).mean(axis=red))
        self.n_obs += 1

    def finish(self) -> dict[str, np.ndarray]:
        c = self.CLIP
        return {
            "spacetime_mean": np.clip(self.mean_acc / self.n_obs, -c, c),
            "max_abs": np.clip(self.max_abs, 0.0, c),
            "final_mean_square": np.clip(self.last[1], 0.0, c),
        }


PATH_FUNCTIONALS = {
    "clipped_spacetime_mean": lambda s: s["spacetime_mean"],
    "clipped_max_abs": lambda s: s["max_abs"],
    "clipped_final_mean_square": lambda s: s["final_mean_square"],
}


def weight_csv(ledgers: list[GirsanovLedger], taus: list[list[StoppingTime]] | None, fh) -> None:
    fh.write("replicate,log_weight,quad_integral")
    levels = [st.n for st in taus[0]] if taus else []
    for lvl in levels:
        fh.write(f",tau_at_T_n{lvl:g}")
    fh.write("\n")
    for i, led in enumerate(ledgers):
        fh.write(f"{i},{led.log_weight:.17g},{led.quad_integral:.17g}")
        if taus:
            for st in taus[i]:
                fh.write(f",{int(st.capped)}")
        fh.write("\n")


def functional_csv(checks: list[FunctionalCheck], fh) -> None:
    fh.write("functional,direct_mean,reweighted_mean,z,ess\n")
    for c in checks:
        fh.write(f"{c.label},{c.direct_mean:.17g},{c.reweighted_mean:.17g},{c.z:.17g},{c.ess:.17g}\n")
