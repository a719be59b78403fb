"""Command-line interface.

Subcommands::

    efrlab dns <config> [--out DIR]
    efrlab run <config> [--ref DIR] [--out DIR]
    efrlab metrics --run DIR --ref DIR --out CSV [--t-start T]
    efrlab pareto --runs DIR [DIR ...] --ref DIR --out CSV
    efrlab export-vtk --run DIR --step N [--out FILE]

``EFRLAB_THREADS`` caps the worker threads used by ``pareto``.
"""
from __future__ import annotations

import argparse
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .config import config_from_sections, config_to_sections, parse_config
from .errors import EfrError, IncompatibleGridsError
from .io import (file_sha256, list_snapshots, load_snapshot, new_manifest, read_manifest,
                 read_snapshots, write_csv, write_manifest, write_snapshots, write_vtk)
from .metrics import PARETO_COLUMNS, boxplot_stats, pareto_table, relative_errors, time_avg_contributions
from .orchestrator import (BASELINE_VARIANTS, ParamTrajectory, ReferenceSeries, RunConfig,
                           RunResult, run_baseline, run_dns, run_opt_efr)

METRICS_COLUMNS = ("step", "time", "E_L2_u", "E_L2_p", "E_H1_u")


# ------------------------------------------------------------------ loading
def _output_dir(args, cfg: RunConfig) -> Path:
    out = args.out or cfg.output_dir
    if not out:
        raise EfrError("no output directory: pass --out or set [output] dir")
    return Path(out)


def _load_config(directory) -> tuple:
    man = read_manifest(directory)
    if man.get("status") != "complete":
        raise EfrError(f"{directory}: run is not complete (status {man.get('status')!r})")
    return man, config_from_sections(man["config"])


def load_reference(directory) -> ReferenceSeries:
    """Reference series from a ``dns`` (or any run) output directory.

    Snapshots must cover every step, so a run stored with stride 1 can serve
    as its own reference.
    """
    man, cfg = _load_config(directory)
    grid = cfg.coarse_grid()
    steps, states = read_snapshots(directory, grid)
    if steps != list(range(len(steps))):
        raise IncompatibleGridsError(f"{directory}: snapshots do not cover every step")
    fine = tuple(cfg.fine) if cfg.fine else tuple(cfg.coarse)
    return ReferenceSeries(snapshots=states, times=[s.time for s in states], geometry=cfg.geometry,
                           fine=fine, coarse=tuple(cfg.coarse), dt=cfg.flow.dt,
                           wall_clock_s=float(man.get("wall_clock_s") or 0.0))


def load_run(directory) -> RunResult:
    man, cfg = _load_config(directory)
    steps, states = read_snapshots(directory, cfg.coarse_grid())
    variant = man.get("variant", cfg.variant)
    return RunResult(variant=variant, snapshots=states, steps=steps, trajectory=ParamTrajectory(),
                     wall_clock_s=float(man.get("wall_clock_s") or 0.0), diagnostics={}, config=cfg)


def _reference_hashes(directory) -> dict:
    return {name: file_sha256(Path(directory) / name)
            for name in sorted(f"snapshots/{p.name}" for _, p in list_snapshots(directory))}


# ------------------------------------------------------------------ subcommands
def cmd_dns(args) -> int:
    cfg = parse_config(args.config).with_(variant="dns")
    out = _output_dir(args, cfg)
    manifest = new_manifest("dns", config_to_sections(cfg), {"config": str(args.config)})
    manifest["variant"] = "dns"
    write_manifest(out, manifest)
    ref = run_dns(cfg)
    manifest["outputs"] = write_snapshots(out, ref.snapshots, range(len(ref)))
    manifest["wall_clock_s"] = ref.wall_clock_s
    manifest["status"] = "complete"
    write_manifest(out, manifest)
    print(f"dns: {len(ref)} snapshots written to {out} ({ref.wall_clock_s:.2f} s)")
    return 0


def cmd_run(args) -> int:
    cfg = parse_config(args.config)
    if cfg.variant == "dns":
        raise EfrError("use the 'dns' subcommand for the reference run")
    ref = None
    ref_dir = args.ref or cfg.ref_dir
    if ref_dir:
        ref = load_reference(ref_dir)
        if ref.geometry != cfg.geometry or tuple(ref.coarse) != tuple(cfg.coarse):
            raise IncompatibleGridsError("reference geometry or coarse grid differs from the config")
    elif cfg.variant not in BASELINE_VARIANTS:
        raise EfrError(f"variant {cfg.variant!r} needs --ref")
    out = _output_dir(args, cfg)
    inputs = {"config": str(args.config)}
    if ref_dir:
        inputs["ref"] = str(ref_dir)
        inputs["ref_hashes"] = _reference_hashes(ref_dir)
    manifest = new_manifest("run", config_to_sections(cfg), inputs)
    manifest["variant"] = cfg.variant
    write_manifest(out, manifest)
    if cfg.variant in BASELINE_VARIANTS:
        res = run_baseline(cfg, ref=ref)
    else:
        res = run_opt_efr(cfg, ref)
    outputs = write_snapshots(out, res.snapshots, res.steps)
    outputs.update(_write_run_tables(out, res))
    manifest["outputs"] = outputs
    manifest["events"] = res.trajectory.events
    manifest["wall_clock_s"] = res.wall_clock_s
    manifest["status"] = "complete"
    write_manifest(out, manifest)
    print(f"run {cfg.variant}: {len(res.snapshots)} snapshots written to {out} "
          f"({res.wall_clock_s:.2f} s, {len(res.trajectory.instants)} optimization instants)")
    return 0


def _write_run_tables(out: Path, res: RunResult) -> dict:
    flow = res.config.flow
    delta, chi = res.trajectory.as_arrays()
    write_csv(out / "trajectory.csv", ("step", "time", "delta", "chi"),
              [(n, flow.time(n), float(d), float(c)) for n, (d, c) in enumerate(zip(delta, chi))])
    write_csv(out / "instants.csv",
              ("step", "time", "warm_value", "applied_value", "delta", "chi", "nit", "nfev",
               "converged", "aborted"),
              [(r.step, float(r.time), float(r.warm_value), float(r.applied_value),
                float(r.applied[0]), float(r.applied[1]), r.result.nit, r.result.nfev,
                int(r.result.converged), int(r.aborted)) for r in res.trajectory.instants])
    d = res.diagnostics
    cols = ("time", "l2_u", "h1_u", "avg_div", "max_abs_u")
    write_csv(out / "diagnostics.csv", ("step",) + cols,
              [(n,) + tuple(float(d[c][n]) for c in cols) for n in range(len(d["time"]))])
    return {name: file_sha256(out / name) for name in ("trajectory.csv", "instants.csv",
                                                       "diagnostics.csv")}


def cmd_metrics(args) -> int:
    ref = load_reference(args.ref)
    res = load_run(args.run)
    if ref.geometry != res.config.geometry or tuple(ref.coarse) != tuple(res.config.coarse):
        raise IncompatibleGridsError("run and reference live on different grids")
    if res.steps[-1] >= len(ref):
        raise IncompatibleGridsError("reference is shorter than the run")
    errs = relative_errors(res, ref)
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    write_csv(args.out, METRICS_COLUMNS, errs.rows())
    avg = time_avg_contributions(res, ref, t_start=args.t_start)
    print(f"metrics: {errs.steps.size} rows written to {args.out}")
    for term, val in avg.items():
        print(f"  avg L_{term}: {val:.6e}")
    for name, series in (("E_L2_u", errs.e_l2_u), ("E_L2_p", errs.e_l2_p), ("E_H1_u", errs.e_h1_u)):
        if np.any(np.isfinite(series)):
            s = boxplot_stats(series)
            print(f"  {name}: median {s.median:.4e} IQR [{s.q1:.4e}, {s.q3:.4e}] mean {s.mean:.4e}")
    return 0


def worker_count(n_jobs: int) -> int:
    """Workers for ``n_jobs`` tasks, capped by ``EFRLAB_THREADS`` when set."""
    cap = os.environ.get("EFRLAB_THREADS")
    limit = os.cpu_count() or 1
    if cap:
        try:
            limit = int(cap)
        except ValueError:
            raise EfrError(f"EFRLAB_THREADS must be an integer, got {cap!r}") from None
        if limit < 1:
            raise EfrError("EFRLAB_THREADS must be >= 1")
    return max(1, min(limit, n_jobs))


def cmd_pareto(args) -> int:
    ref = load_reference(args.ref)
    with ThreadPoolExecutor(max_workers=worker_count(len(args.runs))) as pool:
        runs = list(pool.map(load_run, args.runs))
    rows = pareto_table(runs, ref)
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    write_csv(args.out, PARETO_COLUMNS, [r.as_tuple() for r in rows])
    print(f"pareto: {len(rows)} rows written to {args.out}")
    return 0


def cmd_export_vtk(args) -> int:
    _, cfg = _load_config(args.run)
    steps = dict(list_snapshots(args.run))
    if args.step not in steps:
        raise EfrError(f"{args.run}: no snapshot for step {args.step}")
    state = load_snapshot(steps[args.step], cfg.coarse_grid())
    out = Path(args.out) if args.out else Path(args.run) / f"step_{args.step:07d}.vtk"
    write_vtk(out, state, title=f"efrlab {cfg.variant} step {args.step} t={state.time!r}")
    print(f"export-vtk: wrote {out}")
    return 0


# ------------------------------------------------------------------ entry point
def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="efrlab", description="Evolve-filter-relax experiments")
    p.add_argument("--version", action="version", version=f"efrlab {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("dns", help="fine-grid reference run, restricted to the coarse grid")
    s.add_argument("config")
    s.add_argument("--out", help="output directory (default: [output] dir)")
    s.set_defaults(func=cmd_dns)

    s = sub.add_parser("run", help="baseline or optimized run on the coarse grid")
    s.add_argument("config")
    s.add_argument("--ref", help="reference directory written by 'dns'")
    s.add_argument("--out", help="output directory (default: [output] dir)")
    s.set_defaults(func=cmd_run)

    s = sub.add_parser("metrics", help="relative error series of a run against a reference")
    s.add_argument("--run", required=True)
    s.add_argument("--ref", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--t-start", type=float, default=None, help="exclude earlier steps from averages")
    s.set_defaults(func=cmd_metrics)

    s = sub.add_parser("pareto", help="accuracy versus cost table over runs")
    s.add_argument("--runs", nargs="+", required=True)
    s.add_argument("--ref", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_pareto)

    s = sub.add_parser("export-vtk", help="legacy VTK file of one stored snapshot")
    s.add_argument("--run", required=True)
    s.add_argument("--step", type=int, required=True)
    s.add_argument("--out")
    s.set_defaults(func=cmd_export_vtk)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (EfrError, OSError, KeyError, ValueError) as exc:
        print(f"efrlab {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
