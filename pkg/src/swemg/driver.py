"""Outer nonlinear solvers.

Two solvers share the coarse-to-fine initialization cascade: the Newton
multigrid iteration (nonlinear block-SGS pre-smooth, regularized Newton
system solved by gamma-cycles, relaxed update, dry clamp) and the plain
nonlinear block-SGS iteration used as the single-grid baseline in the
convergence studies.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import kernels, physics
from .assembly import assemble_regularized_system, assemble_residual, newton_rhs
from .errors import InitializationError, SWEError
from .mesh import MeshHierarchy, MeshLevel, build_hierarchy
from .multigrid import (CycleConfig, build_linear_levels,
                        instrumented_cycles, mg_cycle)

STATUS_CONVERGED = "converged"
STATUS_MAX_STEPS = "max_steps"
STATUS_DIVERGED = "diverged"


@dataclass
class SolverConfig:
    """All solver knobs in one place.

    ``flux`` names the interface flux; ``gamma``/``n_coarse_levels``/
    ``nu1``/``nu2``/``n_mg`` shape the inner multigrid; ``alpha`` is the
    residual regularization weight, ``eps_fd`` the Jacobian difference
    step, ``tau`` the update relaxation, ``eps_init`` the cascade
    tolerance (scaled by 2^-l per level), ``eps_stop`` the outer stopping
    tolerance on the total l1 residual, and ``h_eps`` the dry threshold.
    """
    flux: str = "hll"
    gamma: int = 1
    n_coarse_levels: int = 3
    nu1: int = 1
    nu2: int = 1
    n_mg: int = 2
    alpha: float = 3.0
    eps_fd: float = 1e-8
    tau: float = 1.0
    eps_init: float = 0.2
    eps_stop: float = 1e-12
    h_eps: float = 1e-6
    max_newton_steps: int = 400
    max_init_sweeps: int = 100000
    coarsest_solver: str = "direct"
    use_cascade: bool = True
    divergence_factor: float = 1e4

    def __post_init__(self):
        for name in ("eps_fd", "eps_init", "eps_stop", "h_eps"):
            if getattr(self, name) < 0.0:
                raise ValueError(f"{name} must be >= 0")
        if not 0.0 < self.tau <= 1.0:
            raise ValueError("tau must lie in (0, 1]")
        if self.flux not in physics.FLUX_KINDS:
            raise ValueError(f"unknown flux {self.flux!r}")

    def cycle(self) -> CycleConfig:
        return CycleConfig(gamma=self.gamma, nu1=self.nu1, nu2=self.nu2,
                           n_coarse_levels=self.n_coarse_levels,
                           coarsest_solver=self.coarsest_solver)


@dataclass
class StepRecord:
    step: int
    residual: float
    seconds: float


@dataclass
class ConvergenceHistory:
    records: list = field(default_factory=list)
    status: str = STATUS_MAX_STEPS
    note: str = ""

    def add(self, step: int, residual: float, seconds: float) -> None:
        self.records.append(StepRecord(step, residual, seconds))

    @property
    def n_steps(self) -> int:
        return self.records[-1].step if self.records else 0

    @property
    def final_residual(self) -> float:
        return self.records[-1].residual if self.records else float("nan")

    def to_csv(self, path) -> None:
        with open(path, "w") as f:
            f.write("step,residual,seconds\n")
            for r in self.records:
                f.write(f"{r.step},{r.residual:.17g},{r.seconds:.6f}\n")


@dataclass
class SolveResult:
    solution: np.ndarray
    history: ConvergenceHistory
    level: MeshLevel
    hierarchy: Optional[MeshHierarchy] = None

    def __iter__(self):
        return iter((self.solution, self.history))


def clamp_dry(U: np.ndarray, h_eps: float = physics.H_EPS) -> np.ndarray:
    """Zero every cell at or below the dry threshold, in place."""
    U[U[:, 0] <= h_eps] = 0.0
    return U


def _sweep_args(level: MeshLevel, boundary, flux_kind: str):
    bkind, bh, bqn, but = physics.boundary_tables(level.tag_names, boundary)
    return (level.z, level.m, level.cell_edge_ptr, level.cell_edge_idx,
            level.edge_left, level.edge_right, level.edge_tag,
            level.normals[:, 0], level.normals[:, 1], level.lengths,
            bkind, bh, bqn, but, physics.FLUX_KINDS[flux_kind])


def blusgs_nonlinear_step(level: MeshLevel, sol: np.ndarray, flux_kind: str,
                          boundary, g: float = physics.GRAVITY,
                          alpha: float = 3.0, eps_fd: float = 1e-8,
                          h_eps: float = physics.H_EPS) -> np.ndarray:
    """One nonlinear block-SGS step: a forward then a backward pass.

    Each visited cell refreshes its residual with the newest neighbor
    values, solves the regularized m-by-m diagonal system and updates in
    place; the dry clamp runs after every cell update.
    """
    args = _sweep_args(level, boundary, flux_kind)
    kernels.blusgs_half_sweep(sol, *args, g, h_eps, alpha, eps_fd, True)
    kernels.blusgs_half_sweep(sol, *args, g, h_eps, alpha, eps_fd, False)
    return sol


def restrict_solution(U_fine: np.ndarray, fine: MeshLevel,
                      coarse: MeshLevel) -> np.ndarray:
    """Area-weighted cell averages of a fine solution on the coarse level."""
    parent = coarse.parent
    out = np.zeros((coarse.n_cells, U_fine.shape[1]))
    np.add.at(out, parent.fine_to_coarse, fine.areas[:, None] * U_fine)
    out /= coarse.areas[:, None]
    return out


def initialize_cascade(hierarchy: MeshHierarchy, initial_data: Callable,
                       config: SolverConfig, boundary,
                       g: float = physics.GRAVITY) -> np.ndarray:
    """Coarse-to-fine initial guess for the Newton iteration.

    Cell averages of the initial data are iterated with the nonlinear
    block-SGS step on each coarse level until the total residual drops
    below eps_init * 2^-l, then injected onto the next finer level; the
    level-1 result lands on the finest level unchanged.
    """
    n_l = hierarchy.n_coarse_levels
    fine_u = np.asarray(initial_data(hierarchy[0]), dtype=float).copy()
    clamp_dry(fine_u, config.h_eps)
    if n_l == 0:
        return fine_u
    averages = [fine_u]
    for l in range(1, n_l + 1):
        averages.append(restrict_solution(averages[-1], hierarchy[l - 1],
                                          hierarchy[l]))
    U = clamp_dry(averages[n_l], config.h_eps)
    for l in range(n_l, 0, -1):
        level = hierarchy[l]
        tol = config.eps_init * 2.0 ** (-l)
        sweeps = 0
        ref = None
        while True:
            res = assemble_residual(level, U, config.flux, boundary, g,
                                    config.h_eps)
            if res.total < tol:
                break
            if ref is None:
                ref = max(res.total, 1e-8)
            if (not np.isfinite(res.total)
                    or res.total > config.divergence_factor * ref):
                raise InitializationError(
                    f"level {l} blew up at residual {res.total:.3e}")
            if sweeps >= config.max_init_sweeps:
                raise InitializationError(
                    f"level {l} stalled at residual {res.total:.3e} "
                    f"(target {tol:.3e})")
            blusgs_nonlinear_step(level, U, config.flux, boundary, g,
                                  config.alpha, config.eps_fd, config.h_eps)
            sweeps += 1
        # inject onto the next finer level
        U = U[level.parent.fine_to_coarse].copy()
    return clamp_dry(U, config.h_eps)


def newton_mg_step(hierarchy: MeshHierarchy, sol: np.ndarray,
                   config: SolverConfig, boundary,
                   g: float = physics.GRAVITY, cycle_log: list | None = None):
    """One Newton multigrid step; returns (sol, residual_after).

    Pre-smooths with the nonlinear block-SGS step, assembles the
    regularized system, runs n_mg gamma-cycles from a zero correction,
    applies the relaxed update and the dry clamp.  A non-finite state
    after the update is rolled back and reported as divergence.
    """
    level0 = hierarchy[0]
    blusgs_nonlinear_step(level0, sol, config.flux, boundary, g,
                          config.alpha, config.eps_fd, config.h_eps)
    A0, res = assemble_regularized_system(level0, sol, config.flux, boundary,
                                          g, config.alpha, config.eps_fd,
                                          config.h_eps)
    rhs0 = newton_rhs(res, sol, config.h_eps)
    levels = build_linear_levels(A0, rhs0, hierarchy, config.n_coarse_levels)
    cyc = config.cycle()
    if cycle_log is None:
        for _ in range(config.n_mg):
            mg_cycle(levels, 0, cyc)
    else:
        cycle_log.extend(instrumented_cycles(levels, cyc, config.n_mg))
    backup = sol.copy()
    sol += config.tau * levels[0].correction
    clamp_dry(sol, config.h_eps)
    if not np.all(np.isfinite(sol)):
        sol[:] = backup
        raise SWEError("non-finite state after Newton update")
    res_after = assemble_residual(level0, sol, config.flux, boundary, g,
                                  config.h_eps)
    return sol, res_after


def _prepare(problem, config: SolverConfig, cells):
    finest = problem.build_mesh(cells)
    hierarchy = build_hierarchy(finest, config.n_coarse_levels)
    boundary = problem.boundary
    return hierarchy, boundary


def run_newton_mg(problem, config: SolverConfig, cells,
             cycle_log: list | None = None) -> SolveResult:
    """Full Newton multigrid pipeline on one problem.

    Builds the mesh hierarchy, runs the initialization cascade, then
    Newton multigrid steps until the total l1 residual drops below
    eps_stop.  Failures (divergence, flux/wetness incompatibility) are
    recorded in the history status, never raised.
    """
    history = ConvergenceHistory()
    hierarchy, boundary = _prepare(problem, config, cells)
    level0 = hierarchy[0]
    g = problem.g
    t0 = time.perf_counter()
    try:
        if config.use_cascade:
            U = initialize_cascade(hierarchy, problem.initial_state, config,
                                   boundary, g)
        else:
            U = np.asarray(problem.initial_state(level0), dtype=float).copy()
            clamp_dry(U, config.h_eps)
    except SWEError as exc:
        history.status = STATUS_DIVERGED
        history.note = f"initialization failed: {exc}"
        U = np.asarray(problem.initial_state(level0), dtype=float).copy()
        return SolveResult(U, history, level0, hierarchy)

    res = assemble_residual(level0, U, config.flux, boundary, g, config.h_eps)
    history.add(0, res.total, time.perf_counter() - t0)
    ref = max(res.total, 1e-8)
    if res.total < config.eps_stop:
        history.status = STATUS_CONVERGED
        return SolveResult(U, history, level0, hierarchy)

    for n in range(1, config.max_newton_steps + 1):
        try:
            U, res = newton_mg_step(hierarchy, U, config, boundary, g,
                                    cycle_log)
        except SWEError as exc:
            history.status = STATUS_DIVERGED
            history.note = str(exc)
            break
        history.add(n, res.total, time.perf_counter() - t0)
        if not np.isfinite(res.total) or res.total > config.divergence_factor * ref:
            history.status = STATUS_DIVERGED
            history.note = "residual blow-up"
            break
        if res.total < config.eps_stop:
            history.status = STATUS_CONVERGED
            break
    else:
        history.status = STATUS_MAX_STEPS
    return SolveResult(U, history, level0, hierarchy)


def run_blusgs_baseline(problem, config: SolverConfig, cells) -> SolveResult:
    """Single-grid baseline: cascade initialization, then nonlinear
    block-SGS steps on the finest level until tolerance."""
    history = ConvergenceHistory()
    hierarchy, boundary = _prepare(problem, config, cells)
    level0 = hierarchy[0]
    g = problem.g
    t0 = time.perf_counter()
    try:
        if config.use_cascade:
            U = initialize_cascade(hierarchy, problem.initial_state, config,
                                   boundary, g)
        else:
            U = np.asarray(problem.initial_state(level0), dtype=float).copy()
            clamp_dry(U, config.h_eps)
    except SWEError as exc:
        history.status = STATUS_DIVERGED
        history.note = f"initialization failed: {exc}"
        U = np.asarray(problem.initial_state(level0), dtype=float).copy()
        return SolveResult(U, history, level0, hierarchy)

    res = assemble_residual(level0, U, config.flux, boundary, g, config.h_eps)
    history.add(0, res.total, time.perf_counter() - t0)
    ref = max(res.total, 1e-8)
    if res.total < config.eps_stop:
        history.status = STATUS_CONVERGED
        return SolveResult(U, history, level0, hierarchy)

    for n in range(1, config.max_newton_steps + 1):
        try:
            blusgs_nonlinear_step(level0, U, config.flux, boundary, g,
                                  config.alpha, config.eps_fd, config.h_eps)
        except SWEError as exc:
            history.status = STATUS_DIVERGED
            history.note = str(exc)
            break
        res = assemble_residual(level0, U, config.flux, boundary, g,
                                config.h_eps)
        history.add(n, res.total, time.perf_counter() - t0)
        if not np.isfinite(res.total) or res.total > config.divergence_factor * ref:
            history.status = STATUS_DIVERGED
            history.note = "residual blow-up"
            break
        if res.total < config.eps_stop:
            history.status = STATUS_CONVERGED
            break
    else:
        history.status = STATUS_MAX_STEPS
    return SolveResult(U, history, level0, hierarchy)


def write_solution(path, level: MeshLevel, U: np.ndarray) -> None:
    """Columnar solution dump: centroid, h, hu[, hv], z, h+z."""
    with open(path, "w") as f:
        for i in range(level.n_cells):
            coords = " ".join(f"{c:.17g}" for c in level.centroids[i])
            state = " ".join(f"{v:.17g}" for v in U[i])
            f.write(f"{coords} {state} {level.z[i]:.17g} "
                    f"{U[i, 0] + level.z[i]:.17g}\n")
