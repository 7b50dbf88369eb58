"""Command-line front end.

Reports: ``solve`` runs one problem and writes the solution and
convergence history; ``table1``/``table2``/``table3`` reproduce the
Newton-step and spectral-radius benchmark tables for the three 1D
problems; ``spectrum`` writes eigenvalue scatters and the rate-law fit;
``froude`` sweeps the throat problem over the inflow Froude number.
Exit codes: 0 converged/ok, 1 diverged or failed, 2 configuration error.
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import dataclass, replace

import numpy as np

from . import analysis, problems
from .driver import (STATUS_CONVERGED, SolverConfig, run_blusgs_baseline,
                     run_newton_mg, write_solution)
from .errors import SWEError

_TABLE_PROBLEMS = {"table1": "subcritical-bumps",
                   "table2": "transcritical-bump",
                   "table3": "transcritical-shock"}


@dataclass
class RunManifest:
    """Parsed command-line request."""
    report: str = "solve"
    problem: str = "subcritical-bumps"
    flux: str = ""
    cells: int = 512
    cells_x: int = 0
    cells_y: int = 0
    cycle: str = "v"
    levels: int = 3
    nmg: int = 0
    alpha: float = 3.0
    tau: float = 1.0
    eps_stop: float = -1.0
    eps_p: float = -1.0
    max_steps: int = 0
    out: str = "."
    cells_list: tuple = (64, 128, 256, 512, 1024)
    fluxes: tuple = ("hll", "llf", "roe")
    fin_min: float = 0.1
    fin_max: float = 2.0
    fin_count: int = 20
    verbose: bool = False


def _config_for(manifest: RunManifest, spec: problems.ProblemSpec,
                default_eps_stop: float = 1e-12, **overrides) -> SolverConfig:
    cfg = SolverConfig(
        flux=manifest.flux or spec.flux,
        gamma=2 if manifest.cycle == "w" else 1,
        n_coarse_levels=manifest.levels,
        n_mg=manifest.nmg if manifest.nmg > 0 else (2 if spec.dimension == 1 else 3),
        alpha=manifest.alpha,
        tau=manifest.tau,
        eps_stop=manifest.eps_stop if manifest.eps_stop > 0 else default_eps_stop,
        eps_init=manifest.eps_p if manifest.eps_p > 0 else spec.eps_init,
        max_newton_steps=manifest.max_steps if manifest.max_steps > 0 else 400,
    )
    for k, v in overrides.items():
        setattr(cfg, k, v)
    return cfg


def _resolution(manifest: RunManifest, spec: problems.ProblemSpec):
    if spec.dimension == 1:
        return manifest.cells
    if manifest.cells_x > 0 and manifest.cells_y > 0:
        return (manifest.cells_x, manifest.cells_y)
    raise ValueError("2D problems need --cells-x and --cells-y")


def _usage_error(msg: str) -> int:
    print(f"error: {msg}", file=sys.stderr)
    return 2


def _load_problem(name: str) -> problems.ProblemSpec:
    """Resolve a catalog name or a problem-file path."""
    if os.path.exists(name):
        return problems.load_custom(name)
    return problems.by_name(name)


def cmd_solve(manifest: RunManifest) -> int:
    try:
        spec = _load_problem(manifest.problem)
    except KeyError:
        return _usage_error(f"unknown problem {manifest.problem!r}")
    cfg = _config_for(manifest, spec)
    cells = _resolution(manifest, spec)
    cycle_log = [] if manifest.verbose else None
    result = run_newton_mg(spec, cfg, cells, cycle_log=cycle_log)
    os.makedirs(manifest.out, exist_ok=True)
    if cycle_log is not None:
        with open(os.path.join(manifest.out, "cycles.csv"), "w") as f:
            f.write("cycle,linear_residual,"
                    + ",".join(f"visits_l{l}" for l in
                               range(cfg.n_coarse_levels + 1)) + "\n")
            for k, lin, visits in cycle_log:
                f.write(f"{k},{lin:.17g}," + ",".join(str(v) for v in visits)
                        + "\n")
    write_solution(os.path.join(manifest.out, "solution.txt"),
                   result.level, result.solution)
    result.history.to_csv(os.path.join(manifest.out, "convergence.csv"))
    h = result.history
    print(f"problem={spec.name} cells={cells} flux={cfg.flux} "
          f"status={h.status} n_step={h.n_steps} residual={h.final_residual:.3e}"
          + (f" note={h.note}" if h.note else ""))
    return 0 if h.status == STATUS_CONVERGED else 1


def _steady_rho(spec, cfg, n):
    """Spectral radius of the sweep iteration matrix at the converged
    steady state (regularization vanishes there)."""
    from .assembly import assemble_regularized_system
    result = run_newton_mg(spec, cfg, n)
    if result.history.status != STATUS_CONVERGED:
        return None, None
    A, _ = assemble_regularized_system(result.level, result.solution, cfg.flux,
                                       spec.boundary, spec.g, cfg.alpha,
                                       cfg.eps_fd, cfg.h_eps)
    T = analysis.build_iteration_matrix(A)
    rep = analysis.spectrum(T)
    return rep, result


def cmd_table(manifest: RunManifest) -> int:
    name = _TABLE_PROBLEMS[manifest.report]
    spec = problems.by_name(name)
    ns = manifest.cells_list
    if not ns:
        return _usage_error("empty cells list")
    cap = manifest.max_steps if manifest.max_steps > 0 else 20000
    rows = []

    def fmt_count(res, capped):
        if res.history.status == STATUS_CONVERGED:
            return str(res.history.n_steps)
        if res.history.status == "max_steps" and capped:
            return f">{res.history.n_steps}"
        return "fail"

    for flux in manifest.fluxes:
        base_cfg = _config_for(manifest, spec, default_eps_stop=1e-11,
                               flux=flux)
        variants = [("blusgs", None, None), ("v-cycle", 1, 1), ("v-cycle", 3, 1)]
        if flux == "llf":
            variants += [("v-cycle", 5, 1), ("w-cycle", 5, 2)]
        for label, n_l, gamma in variants:
            entries = []
            for n in ns:
                if label == "blusgs":
                    cfg = replace(base_cfg, max_newton_steps=cap)
                    res = run_blusgs_baseline(spec, cfg, n)
                    entries.append(fmt_count(res, True))
                else:
                    cfg = replace(base_cfg, n_coarse_levels=n_l, gamma=gamma)
                    res = run_newton_mg(spec, cfg, n)
                    entries.append(fmt_count(res, False))
            tag = label if n_l is None else f"{label} NL={n_l}"
            rows.append([flux, tag] + entries)
        rho_row = [flux, "rho"]
        rinf_row = [flux, "R_inf"]
        for n in ns:
            rep, _ = _steady_rho(spec, replace(base_cfg, n_coarse_levels=3,
                                               gamma=1), n)
            rho_row.append("fail" if rep is None else f"{rep.rho:.5f}")
            rinf_row.append("fail" if rep is None else f"{rep.r_inf:.4e}")
        rows.append(rho_row)
        rows.append(rinf_row)

    os.makedirs(manifest.out, exist_ok=True)
    csv_path = os.path.join(manifest.out, f"{manifest.report}.csv")
    with open(csv_path, "w") as f:
        f.write("flux,method," + ",".join(f"N={n}" for n in ns) + "\n")
        for r in rows:
            f.write(",".join(str(v) for v in r) + "\n")
    txt_path = os.path.join(manifest.out, f"{manifest.report}.txt")
    widths = [max(len(str(r[c])) for r in rows) + 2 for c in range(len(rows[0]))]
    with open(txt_path, "w") as f:
        header = ["flux", "method"] + [f"N={n}" for n in ns]
        f.write("".join(h.ljust(w) for h, w in zip(header, widths)) + "\n")
        for r in rows:
            f.write("".join(str(v).ljust(w) for v, w in zip(r, widths)) + "\n")
    print(f"wrote {csv_path} and {txt_path}")
    return 0


def cmd_spectrum(manifest: RunManifest) -> int:
    try:
        spec = _load_problem(manifest.problem)
    except KeyError:
        return _usage_error(f"unknown problem {manifest.problem!r}")
    if spec.dimension != 1:
        return _usage_error("spectrum reports are for 1D problems")
    ns = [n for n in manifest.cells_list if 2 * n <= analysis.MAX_DENSE_DIM]
    if not ns:
        return _usage_error("cells list exceeds the dense eigensolve cap")
    os.makedirs(manifest.out, exist_ok=True)
    lines = ["flux,N,dx,rho,r_inf"]
    width = spec.geometry[1] - spec.geometry[0]
    for flux in manifest.fluxes:
        samples = []
        for n in ns:
            cfg = _config_for(manifest, spec, default_eps_stop=1e-11,
                              flux=flux, gamma=2,
                              n_coarse_levels=min(manifest.levels, 5))
            rep, _ = _steady_rho(spec, cfg, n)
            if rep is None:
                lines.append(f"{flux},{n},{width / n:.8g},fail,fail")
                continue
            samples.append((width / n, rep.rho))
            lines.append(f"{flux},{n},{width / n:.8g},{rep.rho:.8f},"
                         f"{rep.r_inf:.8g}")
            if n == max(ns):
                rep.dump_scatter(os.path.join(manifest.out, f"eigs_{flux}.txt"))
        if len(samples) >= 3:
            fit = analysis.fit_rate_law(samples)
            lines.append(f"{flux},fit,C,{fit.C:.6g},{fit.residual:.3g}")
    path = os.path.join(manifest.out, "spectral.csv")
    with open(path, "w") as f:
        f.write("\n".join(lines) + "\n")
    print(f"wrote {path}")
    return 0


def cmd_froude(manifest: RunManifest) -> int:
    if manifest.cells_x <= 0 or manifest.cells_y <= 0:
        manifest.cells_x, manifest.cells_y = 96, 32
    fins = np.linspace(manifest.fin_min, manifest.fin_max, manifest.fin_count)
    fins = [f for f in fins if abs(f - 1.0) > 1e-9]
    os.makedirs(manifest.out, exist_ok=True)
    rows = ["f_in,status,n_step,residual"]
    for f_in in fins:
        spec = problems.cosine_throat(float(f_in))
        cfg = _config_for(manifest, spec)
        res = run_newton_mg(spec, cfg, (manifest.cells_x, manifest.cells_y))
        h = res.history
        rows.append(f"{f_in:.6g},{h.status},{h.n_steps},{h.final_residual:.6e}")
        if manifest.verbose:
            print(rows[-1])
    path = os.path.join(manifest.out, "froude.csv")
    with open(path, "w") as f:
        f.write("\n".join(rows) + "\n")
    print(f"wrote {path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="swemg",
        description="Steady shallow-water solver: Newton outer iteration "
                    "with a geometric multigrid inner solver.")
    p.add_argument("--report", default="solve",
                   choices=["solve", "table1", "table2", "table3",
                            "spectrum", "froude", "froude_histogram"])
    p.add_argument("--problem", default="subcritical-bumps",
                   help="catalog name or path to a problem file")
    p.add_argument("--flux", default="",
                   choices=["", "hll", "hllc", "llf", "roe"])
    p.add_argument("--cells", type=int, default=512, help="1D cell count")
    p.add_argument("--cells-x", type=int, default=0)
    p.add_argument("--cells-y", type=int, default=0)
    p.add_argument("--cycle", default="v", choices=["v", "w"])
    p.add_argument("--levels", type=int, default=3,
                   help="coarse levels in the multigrid hierarchy")
    p.add_argument("--nmg", type=int, default=0,
                   help="cycles per Newton step (default 2 in 1D, 3 in 2D)")
    p.add_argument("--alpha", type=float, default=3.0)
    p.add_argument("--tau", type=float, default=1.0)
    p.add_argument("--eps-stop", type=float, default=-1.0,
                   help="stopping tolerance on the total l1 residual "
                        "(default 1e-12 for solve, 1e-11 for the table and "
                        "spectrum sweeps)")
    p.add_argument("--eps-p", type=float, default=-1.0,
                   help="cascade tolerance (default: problem-specific)")
    p.add_argument("--max-steps", type=int, default=0)
    p.add_argument("--out", default=".")
    p.add_argument("--cells-list", default="64,128,256,512,1024")
    p.add_argument("--fluxes", default="hll,llf,roe")
    p.add_argument("--fin-min", type=float, default=0.1)
    p.add_argument("--fin-max", type=float, default=2.0)
    p.add_argument("--fin-count", type=int, default=20)
    p.add_argument("--verbose", action="store_true")
    return p


def manifest_from_args(argv) -> RunManifest:
    args = build_parser().parse_args(argv)
    return RunManifest(
        report=args.report, problem=args.problem, flux=args.flux,
        cells=args.cells, cells_x=args.cells_x, cells_y=args.cells_y,
        cycle=args.cycle, levels=args.levels, nmg=args.nmg, alpha=args.alpha,
        tau=args.tau, eps_stop=args.eps_stop, eps_p=args.eps_p,
        max_steps=args.max_steps, out=args.out,
        cells_list=tuple(int(s) for s in args.cells_list.split(",") if s),
        fluxes=tuple(s for s in args.fluxes.split(",") if s),
        fin_min=args.fin_min, fin_max=args.fin_max, fin_count=args.fin_count,
        verbose=args.verbose)


def main(argv=None) -> int:
    try:
        manifest = manifest_from_args(argv)
    except SystemExit as exc:
        return 2 if exc.code not in (0, None) else 0
    try:
        if manifest.report == "solve":
            return cmd_solve(manifest)
        if manifest.report in _TABLE_PROBLEMS:
            return cmd_table(manifest)
        if manifest.report == "spectrum":
            return cmd_spectrum(manifest)
        return cmd_froude(manifest)
    except SWEError as exc:
        print(f"failed: {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:
        return _usage_error(str(exc))


if __name__ == "__main__":
    sys.exit(main())
