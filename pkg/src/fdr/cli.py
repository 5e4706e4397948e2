"""``fdr fit|sure|bands|simulate --config <path> [--out <dir>] [--seed <int>] [--workers <int>]``.

Exit codes: 0 success (including a soft non-convergence warning), 2 bad
configuration, 3 input/output failure, 4 solver failure.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from .config import COMMANDS, RunConfig
from .errors import (
    AllCandidatesFailed, ConfigError, EmptyCloud, GridMismatch, NonFiniteInput,
    NonFiniteIterate, ShapeMismatch, SolverFailure, TooFewReps,
)
from .grid import GridSpec, make_grid, read_csv
from .inference import conformal_bands, subsample_bands
from .pipeline import Estimator, fit
from .simulate import TABLE_COLUMNS, MonteCarloConfig, Scenario, run_monte_carlo
from .sure import sure_search, write_table

log = logging.getLogger("fdr")

EXIT_OK, EXIT_CONFIG, EXIT_IO, EXIT_SOLVER = 0, 2, 3, 4


def _num(x):
    """JSON-safe float: non-finite values become null."""
    x = float(x)
    return x if math.isfinite(x) else None


def write_json(obj, path: Path) -> None:
    path.write_text(json.dumps(obj, sort_keys=True, indent=2) + "\n", encoding="utf-8")


def write_rows(path: Path, header, rows) -> None:
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])


def _coord_header(grid: GridSpec) -> list:
    return [f"x{j + 1}" for j in range(grid.d)]


def _cells(grid: GridSpec, mask=None):
    centers = grid.cell_centers()
    idx = np.arange(grid.n_spatial) if mask is None else np.flatnonzero(np.ravel(mask))
    return centers, idx


def _load(cfg: RunConfig):
    path = cfg.get("run", "input", str, required=True)
    cloud = read_csv(path)
    grid = make_grid(cloud, **cfg.grid_kwargs())
    return cloud, grid


def cmd_fit(cfg: RunConfig, out: Path, workers: int) -> dict:
    cloud, grid = _load(cfg)
    solver_cfg = cfg.solver()
    res = fit(cloud, grid, solver_cfg, **cfg.binning_kwargs())
    est, rep = res.estimate, res.report
    centers, idx = _cells(grid)
    write_rows(out / "u_hat.csv", _coord_header(grid) + ["u_hat"],
               ([*centers[i], est.u_hat.ravel()[i]] for i in idx))
    _, jidx = _cells(grid, est.jump_mask)
    write_rows(out / "jump_set.csv", _coord_header(grid) + ["jump_size", "gradient_mag"],
               ([*centers[i], est.jump_size.ravel()[i], est.gradient_mag.ravel()[i]] for i in jidx))
    if not rep.converged:
        log.warning("NotConverged: residual %.3g after %d iterations", rep.residual, rep.iterations)
    return {
        "lam": solver_cfg.lam,
        "nu": solver_cfg.nu,
        "iterations": rep.iterations,
        "residual": _num(rep.residual),
        "converged": rep.converged,
        "status": "converged" if rep.converged else "NotConverged",
        "energy": _num(rep.energy),
        "energy_normalized": _num(rep.energy_normalized),
        "feasibility_gap": _num(rep.feasibility_gap),
        "nu_violation": _num(rep.nu_violation),
        "jump_cells": int(est.jump_mask.sum()),
    }


def cmd_sure(cfg: RunConfig, out: Path, workers: int) -> dict:
    cloud, grid = _load(cfg)
    sure_cfg = cfg.sure()
    lam, nu, table = sure_search(cloud, grid, sure_cfg, cfg.solver(need_theta=False), workers=workers)
    write_table(table, out / "sure_table.csv")
    return {"lam": lam, "nu": nu, "candidates": len(table),
            "failed": sum(row["status"] != "ok" for row in table)}


def cmd_bands(cfg: RunConfig, out: Path, workers: int) -> dict:
    cloud, grid = _load(cfg)
    solver_cfg = cfg.solver()
    theta = (solver_cfg.lam, solver_cfg.nu)
    method = cfg.get("bands", "method", str, "subsampling")
    if method not in ("subsampling", "conformal"):
        raise ConfigError("[bands] method must be subsampling or conformal")
    if method == "subsampling":
        res = subsample_bands(cloud, grid, theta, cfg.subsampling(), solver_cfg, workers=workers)
        summary = {"method": method, "beta_hat": _num(res.beta_hat), "z_alpha": _num(res.z_alpha),
                   "beta_hat_diff": _num(res.beta_hat_diff), "dropped": res.n_dropped}
    else:
        alpha = cfg.subsampling().alpha
        res = conformal_bands(cloud, grid, theta, alpha, seed=cfg.seed, solver_cfg=solver_cfg)
        summary = {"method": method, "d_alpha": _num(res.d_alpha), "d_alpha_diff": _num(res.d_alpha_diff)}
    centers, idx = _cells(grid)
    write_rows(out / "bands.csv", _coord_header(grid) + ["u_hat", "lower", "upper"],
               ([*centers[i], res.u_hat.ravel()[i], res.lower.ravel()[i], res.upper.ravel()[i]]
                for i in idx))
    _, jidx = _cells(grid, res.jump_mask)
    sig = res.significant_jump_mask.ravel()
    write_rows(out / "jump_significance.csv",
               _coord_header(grid) + ["jump_size", "lower", "upper", "significant"],
               ([*centers[i], res.diff.ravel()[i], res.diff_lower.ravel()[i],
                 res.diff_upper.ravel()[i], int(sig[i])] for i in jidx))
    summary.update(lam=theta[0], nu=theta[1], significant_jumps=int(sig.sum()))
    return summary


class _SureTuner:
    def __init__(self, sure_cfg, solver_cfg, workers):
        self.sure_cfg, self.solver_cfg, self.workers = sure_cfg, solver_cfg, workers

    def __call__(self, cloud, grid):
        lam, nu, _ = sure_search(cloud, grid, self.sure_cfg, self.solver_cfg, workers=self.workers)
        return lam, nu


def cmd_simulate(cfg: RunConfig, out: Path, workers: int) -> dict:
    g = lambda k, conv, default=None, req=False: cfg.get("simulate", k, conv, default, req)
    from .config import _floats, _ints

    dims = g("dims", _ints, (2,))
    ds = g("cohens_d", _floats, (0.25, 0.5, 0.75))
    ns = g("n", _ints, (1000, 5000, 10000))
    reps = g("reps", int, 20)
    sigma = g("sigma", float, 0.05)
    cells = g("n_cells", int)
    lam, nu = g("lam", float), g("nu", float)
    if reps < 1:
        raise ConfigError("[simulate] reps must be >= 1")
    try:
        scenarios = [Scenario(dim=dim, cohens_d=d, sigma=sigma, n=n, seed=cfg.seed)
                     for dim in dims for d in ds for n in ns]
    except ValueError as exc:
        raise ConfigError(f"[simulate] {exc}") from exc
    solver_cfg = cfg.solver(need_theta=False)
    mc = MonteCarloConfig(
        estimator=Estimator(solver_cfg),
        n_cells=cells,
        s_levels=cfg.get("grid", "s_levels", int, 32),
    )
    if lam is not None and nu is not None:
        from .simulate import family_key
        mc.theta = {family_key(sc): (lam, nu) for sc in scenarios}
    else:
        mc.sure = _SureTuner(cfg.sure(), solver_cfg, workers)
    rows = run_monte_carlo(scenarios, reps, mc, workers=workers)
    write_rows(out / "table.csv", TABLE_COLUMNS, ([row[c] for c in TABLE_COLUMNS] for row in rows))
    return {"rows": len(rows), "reps": reps}


HANDLERS = {"fit": cmd_fit, "sure": cmd_sure, "bands": cmd_bands, "simulate": cmd_simulate}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fdr", description="Free discontinuity regression")
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", required=True, help="INI config or a previous manifest.json")
    parser.add_argument("--out", help="output directory (overrides [run] out)")
    parser.add_argument("--seed", type=int, help="random seed (overrides [run] seed)")
    parser.add_argument("--workers", type=int, default=1, help="worker processes")
    parser.add_argument("-v", "--verbose", action="store_true")
    return parser


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = RunConfig.load(args.config)
        if args.seed is not None:
            cfg.set("run", "seed", args.seed)
        if args.out is not None:
            cfg.set("run", "out", args.out)
        if args.workers < 1:
            raise ConfigError("--workers must be >= 1")
        out = Path(cfg.get("run", "out", str, "fdr_out"))
    except ConfigError as exc:
        print(f"fdr: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        out.mkdir(parents=True, exist_ok=True)
        summary = HANDLERS[args.command](cfg, out, args.workers)
        summary["command"] = args.command
        write_json(summary, out / "summary.json")
        write_json({"command": args.command, "config": cfg.canonical(),
                    "config_sha256": cfg.sha256(), "seed": cfg.seed}, out / "manifest.json")
    except ConfigError as exc:
        print(f"fdr: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NonFiniteIterate, SolverFailure, AllCandidatesFailed, TooFewReps) as exc:
        print(f"fdr: solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except (OSError, EmptyCloud, NonFiniteInput, GridMismatch, ShapeMismatch) as exc:
        print(f"fdr: input/output error: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


def main(argv=None) -> None:
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
