"""Config parsing: the simulation schema and experiment files (TOML/JSON).

The serialized simulation block carries exactly the keys

    epsilon, theta, dim, extent, points, boundary, dt, t_end,
    drift_coeffs, diffusion {kind, params}, eps1, eps2, seed, snapshots

Experiment files wrap a ``sim`` block with subcommand-specific sections
(initial data, schedules, replicate counts, output controls).
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import numpy as np

from .grids import Field, Grid
from .kernel import KernelSpec
from .spdesim import DiffusionSpec, DriftSpec, SimConfig

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

SIM_KEYS = {
    "epsilon",
    "theta",
    "dim",
    "extent",
    "points",
    "boundary",
    "dt",
    "t_end",
    "drift_coeffs",
    "diffusion",
    "eps1",
    "eps2",
    "seed",
    "snapshots",
}


class ConfigError(ValueError):
    pass


def load_file(path) -> dict:
    p = Path(path)
    try:
        if p.suffix.lower() == ".toml":
            with open(p, "rb") as fh:
                return tomllib.load(fh)
        with open(p) as fh:
            return json.load(fh)
    except (tomllib.TOMLDecodeError, json.JSONDecodeError) as exc:
        raise ConfigError(f"{p}: parse error: {exc}") from exc
    except OSError as exc:
        raise ConfigError(f"{p}: {exc}") from exc


def sim_config_from_dict(d: dict, u0: Field | None = None) -> tuple[SimConfig, list[float]]:
    unknown = set(d) - SIM_KEYS
    if unknown:
        raise ConfigError(f"unknown simulation keys: {sorted(unknown)}")
    missing = SIM_KEYS - set(d) - {"snapshots"}
    if missing:
        raise ConfigError(f"missing simulation keys: {sorted(missing)}")
    try:
        spec = KernelSpec(float(d["epsilon"]), float(d["theta"]), int(d["dim"]))
        grid = Grid(
            int(d["dim"]),
            tuple(float(x) for x in d["extent"]),
            tuple(int(n) for n in d["points"]),
            str(d["boundary"]),
        )
        diff = d["diffusion"]
        cfg = SimConfig(
            spec=spec,
            grid=grid,
            dt=float(d["dt"]),
            t_end=float(d["t_end"]),
            drift=DriftSpec(tuple(float(c) for c in d["drift_coeffs"])),
            diffusion=DiffusionSpec(str(diff["kind"]), tuple(float(p) for p in diff["params"])),
            eps1=float(d["eps1"]),
            eps2=float(d["eps2"]),
            seed=int(d["seed"]),
            u0=u0,
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"invalid simulation config: {exc}") from exc
    snapshots = [float(t) for t in d.get("snapshots", [])]
    return cfg, snapshots


def sim_config_to_dict(cfg: SimConfig, snapshots: list[float]) -> dict:
    return {
        "epsilon": cfg.spec.epsilon,
        "theta": cfg.spec.theta,
        "dim": cfg.spec.dim,
        "extent": list(cfg.grid.extent),
        "points": list(cfg.grid.points),
        "boundary": cfg.grid.boundary,
        "dt": cfg.dt,
        "t_end": cfg.t_end,
        "drift_coeffs": list(cfg.drift.coefficients),
        "diffusion": {"kind": cfg.diffusion.kind, "params": list(cfg.diffusion.params)},
        "eps1": cfg.eps1,
        "eps2": cfg.eps2,
        "seed": cfg.seed,
        "snapshots": list(snapshots),
    }


def initial_field_from_dict(grid: Grid, d: dict | None) -> Field | None:
    """Initial data specification: zero (default), gaussian bump, or sine."""
    if not d:
        return None
    kind = d.get("kind", "zero")
    if kind == "zero":
        return None
    if kind == "gaussian_bump":
        center = d.get("center") or [L / 2.0 for L in grid.extent]
        width = float(d.get("width", min(grid.extent) / 10.0))
        amp = float(d.get("amplitude", 1.0))

        def bump(*coords):
            r2 = sum((c - c0) ** 2 for c, c0 in zip(coords, center))
            return amp * np.exp(-r2 / (2.0 * width**2))

        return Field.from_function(grid, bump)
    if kind == "sine":
        mode = int(d.get("mode", 1))
        amp = float(d.get("amplitude", 1.0))

        def sine(*coords):
            x = coords[0]
            return amp * np.sin(mode * np.pi * x / grid.extent[0])

        return Field.from_function(grid, sine)
    raise ConfigError(f"unknown initial data kind {kind!r}")


def experiment_from_file(path) -> dict:
    """Load an experiment file; a bare simulation block is wrapped as
    {'sim': block}."""
    raw = load_file(path)
    if not raw:
        raise ConfigError(f"{path}: empty config")
    if "sim" not in raw and SIM_KEYS & set(raw):
        return {"sim": raw}
    return raw
