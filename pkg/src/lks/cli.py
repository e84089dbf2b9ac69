"""Batch front-end: parse configs, dispatch subcommands, write artifacts.

Every run writes a ``manifest.json`` into the output directory with the
config echo, code version, wall time, and per-criterion pass/fail where the
subcommand is a verification suite.  Exit code 0 iff all checks pass; 2 for
usage/config errors.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, acceptance, girsanov, regularity
from .config import ConfigError, experiment_from_file, initial_field_from_dict, sim_config_from_dict, sim_config_to_dict
from .grids import field_to_binary, field_to_csv
from .parallel import thread_count
from .spdesim import DriftSpec, simulate

USAGE_EXIT = 2


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return USAGE_EXIT if exc.code not in (0, None) else 0
    if not getattr(args, "command", None):
        parser.print_usage(sys.stderr)
        return USAGE_EXIT
    try:
        return run_command(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return USAGE_EXIT


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="lks", description=__doc__)
    sub = p.add_subparsers(dest="command")
    for name, help_ in (
        ("kernel", "kernel functional verification"),
        ("solve", "deterministic solve from a config"),
        ("simulate", "SPDE simulation from a config"),
        ("holder", "structure-function / Holder-exponent experiment"),
        ("ratio", "critical order-parameter ratio sweep"),
        ("girsanov", "change-of-measure checks"),
        ("verify-all", "run every acceptance criterion"),
    ):
        q = sub.add_parser(name, help=help_)
        q.add_argument("--config", type=Path, help="TOML or JSON config file")
        q.add_argument("--schedule", type=Path, help="schedule file (ratio)")
        q.add_argument("--out", type=Path, default=Path("lks-out"))
        q.add_argument("--seed", type=int, default=None)
        q.add_argument("--threads", type=int, default=None)
        q.add_argument("--verify", action="store_true", help="run this module's criteria")
        q.add_argument("--plots", action="store_true", help="emit gnuplot scripts")
    return p


def run_command(args) -> int:
    threads = thread_count(args.threads)
    out = args.out
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.time()
    manifest = {
        "tool": "lks",
        "version": __version__,
        "command": args.command,
        "threads": threads,
        "criteria": {},
        "artifacts": [],
    }
    status = 0
    if args.command == "kernel":
        status = _verify_into(manifest, acceptance.KERNEL_CRITERIA, threads)
    elif args.command == "verify-all":
        status = _verify_into(manifest, list(acceptance.CRITERIA), threads)
    elif args.command == "solve":
        status = _cmd_solve(args, manifest, threads)
    elif args.command == "simulate":
        status = _cmd_simulate(args, manifest, threads)
    elif args.command == "holder":
        status = _cmd_holder(args, manifest, threads)
    elif args.command == "ratio":
        status = _cmd_ratio(args, manifest, threads)
    elif args.command == "girsanov":
        status = _cmd_girsanov(args, manifest, threads)
    manifest["wall_time_s"] = time.time() - t0
    with open(out / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
    return status


def _verify_into(manifest, names, threads) -> int:
    results = acceptance.run_criteria(names, threads=threads)
    for r in results:
        manifest["criteria"][r.name] = {"passed": r.passed, "details": r.details}
    return 0 if all(r.passed for r in results) else 1


def _load_sim(args):
    if not args.config:
        raise ConfigError("--config is required for this subcommand")
    exp = experiment_from_file(args.config)
    sim_d = exp.get("sim")
    if sim_d is None:
        raise ConfigError("config must contain a 'sim' section (or bare simulation keys)")
    cfg, snapshots = sim_config_from_dict(sim_d, u0=None)
    u0 = initial_field_from_dict(cfg.grid, exp.get("u0"))
    if u0 is not None:
        cfg = cfg.with_(u0=u0)
    if args.seed is not None:
        cfg = cfg.with_(seed=args.seed)
    return exp, cfg, snapshots


def _write_snapshots(cfg, fields, outdir, manifest):
    for f in fields:
        stem = f"snapshot_t{f.time:.6f}".replace(".", "p")
        field_to_csv(f, outdir / f"{stem}.csv", cfg.spec.epsilon, cfg.spec.theta)
        field_to_binary(f, outdir / f"{stem}.bin", cfg.spec.epsilon, cfg.spec.theta)
        manifest["artifacts"] += [f"{stem}.csv", f"{stem}.bin"]


def _cmd_solve(args, manifest, threads) -> int:
    exp, cfg, snapshots = _load_sim(args)
    cfg = cfg.with_(eps2=0.0)
    manifest["config"] = sim_config_to_dict(cfg, snapshots)
    snaps, _ = simulate(cfg, replicate=0, snapshot_times=snapshots or [cfg.t_end])
    _write_snapshots(cfg, snaps, args.out, manifest)
    if args.verify:
        return _verify_into(manifest, acceptance.SOLVER_CRITERIA, threads)
    return 0


def _cmd_simulate(args, manifest, threads) -> int:
    exp, cfg, snapshots = _load_sim(args)
    manifest["config"] = sim_config_to_dict(cfg, snapshots)
    replicate = int(exp.get("replicate", 0))
    snaps, keys = simulate(cfg, replicate=replicate, snapshot_times=snapshots or [cfg.t_end])
    manifest["noise_keys"] = {"replicate": keys.replicate, "n_steps": keys.n_steps, "seed": cfg.seed}
    _write_snapshots(cfg, snaps, args.out, manifest)
    return 0


def _cmd_holder(args, manifest, threads) -> int:
    if args.verify or not args.config:
        return _verify_into(manifest, ["10"], threads)
    exp = experiment_from_file(args.config)
    h = exp.get("holder", exp)
    hcfg = regularity.HolderRunConfig(
        equation=h.get("equation", "lks"),
        dim=int(h["dim"]),
        points=int(h["points"]),
        extent=float(h["extent"]),
        dt=float(h["dt"]),
        base_time=float(h["base_time"]),
        temporal_lag_steps=tuple(int(m) for m in h.get("temporal_lag_steps", [])),
        spatial_offsets=tuple(tuple(int(c) for c in o) for o in h.get("spatial_offsets", [])),
        replicates=int(h.get("replicates", 512)),
        seed=int(h.get("seed", args.seed if args.seed is not None else 2024)),
        theta=float(h.get("theta", 1.0)),
        eps1=float(h.get("eps1", 1.0)),
        eps2=float(h.get("eps2", 1.0)),
        warm_start=bool(h.get("warm_start", True)),
        spin_steps=int(h.get("spin_steps", 16)),
    )
    manifest["config"] = h
    res = regularity.run_holder_experiment(hcfg, threads=threads)
    fits = []
    for direction, tables in (("time", res.temporal), ("space", res.spatial)):
        for p, table in tables.items():
            name = f"structure_{direction}_p{p}.csv"
            with open(args.out / name, "w") as fh:
                regularity.structure_table_csv(table, fh)
            manifest["artifacts"].append(name)
            est = regularity.estimate_holder(
                table,
                fit_range=(float(table.lags.min()), float(table.lags.max())),
                allow_short_span=True,
            )
            fits.append((f"{direction}_p{p}", est))
    with open(args.out / "holder_fits.csv", "w") as fh:
        regularity.holder_fit_csv(fits, fh)
    manifest["artifacts"].append("holder_fits.csv")
    if args.plots:
        _emit_gnuplot(args.out, "structure_time_p2.csv", "holder_time.gp", logx=True, logy=True)
    return 0


def _cmd_ratio(args, manifest, threads) -> int:
    if args.verify or not (args.config or args.schedule):
        return _verify_into(manifest, ["11"], threads)
    exp = experiment_from_file(args.schedule or args.config)
    cfg, _ = sim_config_from_dict(exp["sim"])
    schedule = [(float(a), float(b)) for a, b in exp["schedule"]]
    q = int(exp.get("q", 1))
    replicates = int(exp.get("replicates", 128))
    manifest["config"] = {"sim": exp["sim"], "schedule": schedule, "q": q, "replicates": replicates}
    results = regularity.critical_ratio_sweep(cfg, schedule, q=q, replicates=replicates, threads=threads)
    with open(args.out / "ratio_sweep.csv", "w") as fh:
        regularity.sweep_csv(results, fh)
    manifest["artifacts"].append("ratio_sweep.csv")
    try:
        slope, se = regularity.scaling_regression(results, cfg.grid.dim)
        manifest["scaling_slope"] = {"slope": slope, "stderr": se}
    except ValueError:
        pass
    if args.plots:
        _emit_gnuplot(args.out, "ratio_sweep.csv", "ratio.gp", logx=True, logy=True)
    return 0


def _cmd_girsanov(args, manifest, threads) -> int:
    if args.verify or not args.config:
        return _verify_into(manifest, ["12"], threads)
    exp = experiment_from_file(args.config)
    cfg, _ = sim_config_from_dict(exp["sim"], u0=None)
    u0 = initial_field_from_dict(cfg.grid, exp.get("u0"))
    if u0 is not None:
        cfg = cfg.with_(u0=u0)
    drift = DriftSpec(tuple(float(c) for c in exp["target_drift"]))
    n_rep = int(exp.get("replicates", 10_000))
    manifest["config"] = {"sim": exp["sim"], "target_drift": list(drift.coefficients), "replicates": n_rep}
    checks = girsanov.law_equivalence_check(
        cfg.with_(drift=DriftSpec()), drift, girsanov.PATH_FUNCTIONALS, n_replicates=n_rep, threads=threads
    )
    with open(args.out / "functionals.csv", "w") as fh:
        girsanov.functional_csv(checks, fh)
    manifest["artifacts"].append("functionals.csv")
    return 0 if all(abs(c.z) <= 3 for c in checks) else 1


def _emit_gnuplot(outdir: Path, csv_name: str, gp_name: str, logx=False, logy=False) -> None:
    lines = ["set datafile separator ','", "set key autotitle columnhead"]
    if logx:
        lines.append("set logscale x")
    if logy:
        lines.append("set logscale y")
    lines.append(f"plot '{csv_name}' using 3:4 with linespoints")
    (outdir / gp_name).write_text("\n".join(lines) + "\n")


if __name__ == "__main__":
    sys.exit(main())
