"""Geometric multigrid for the Newton linear systems.

Coarse operators come from the Galerkin projection over the cell
agglomeration map, residuals restrict by summation over children,
corrections prolongate by piecewise-constant injection, and the smoother
is the block symmetric Gauss-Seidel sweep in lexicographic cell order.
The recursive gamma-cycle branches gamma times below the finest level
(gamma is forced to 1 there) and the coarsest system is solved exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from . import kernels
from .assembly import BlockSparseMatrix
from .errors import AssemblyError
from .mesh import MeshHierarchy, ParentMap


@dataclass
class CycleConfig:
    """Cycle shape: gamma=1 is a V-cycle, gamma=2 a W-cycle."""
    gamma: int = 1
    nu1: int = 1
    nu2: int = 1
    n_coarse_levels: int = 3
    coarsest_solver: str = "direct"

    def __post_init__(self):
        if self.gamma not in (1, 2):
            raise ValueError("gamma must be 1 (V) or 2 (W)")
        if self.nu1 + self.nu2 < 1:
            raise ValueError("need at least one smoothing sweep")
        if self.coarsest_solver not in ("direct", "sweeps"):
            raise ValueError("coarsest_solver must be 'direct' or 'sweeps'")


class LinearLevel:
    """One level of the linear hierarchy: matrix, right-hand side -R,
    current correction, and the agglomeration map to the finer level."""

    def __init__(self, matrix: BlockSparseMatrix, rhs: np.ndarray,
                 parent: ParentMap | None = None):
        self.matrix = matrix
        self.rhs = rhs
        self.correction = np.zeros((matrix.n, matrix.m))
        self.parent = parent
        try:
            self.dinv = np.linalg.inv(matrix.diagonal_blocks())
        except np.linalg.LinAlgError as exc:
            raise AssemblyError("singular diagonal block") from exc
        if not np.all(np.isfinite(self.dinv)):
            raise AssemblyError("singular diagonal block")
        self._lu = None

    def linear_residual(self) -> np.ndarray:
        return self.rhs - self.matrix.matvec(self.correction)


def block_sgs_sweep(level: LinearLevel) -> np.ndarray:
    """One symmetric block Gauss-Seidel sweep (forward then backward),
    updating the level's correction in place."""
    A = level.matrix
    kernels.sgs_half_sweep(A.indptr, A.indices, A.blocks, level.dinv,
                           level.correction, level.rhs, A.m, True)
    kernels.sgs_half_sweep(A.indptr, A.indices, A.blocks, level.dinv,
                           level.correction, level.rhs, A.m, False)
    return level.correction


def galerkin_coarsen(A_fine: BlockSparseMatrix,
                     parent: ParentMap) -> BlockSparseMatrix:
    """Coarse operator: block (I, J) sums every fine block whose row and
    column cells agglomerate into I and J."""
    f2c = parent.fine_to_coarse
    nc = parent.child_ptr.shape[0] - 1
    m = A_fine.m
    row_of_block = np.repeat(np.arange(A_fine.n),
                             np.diff(A_fine.indptr))
    ci = f2c[row_of_block]
    cj = f2c[A_fine.indices]
    key = ci * nc + cj
    uniq, inv = np.unique(key, return_inverse=True)
    blocks = np.zeros((uniq.shape[0], m, m))
    np.add.at(blocks, inv, A_fine.blocks)
    rows = (uniq // nc).astype(np.int64)
    cols = (uniq % nc).astype(np.int64)
    indptr = np.zeros(nc + 1, dtype=np.int64)
    np.add.at(indptr, rows + 1, 1)
    indptr = np.cumsum(indptr)
    # np.unique sorts keys, so blocks are already row-major/col-sorted
    diag_pos = np.flatnonzero(rows == cols).astype(np.int64)
    if diag_pos.shape[0] != nc:
        raise AssemblyError("coarse operator lost a diagonal block")
    return BlockSparseMatrix(nc, m, indptr, cols, blocks, diag_pos)


def restrict_residual(fine: LinearLevel, parent: ParentMap) -> np.ndarray:
    """Coarse right-hand side: children's linear residuals summed.

    With the rhs convention b = -R this is the restriction
    R_coarse = sum_children (R + A*correction), returned as -R_coarse.
    """
    res = fine.linear_residual()
    nc = parent.child_ptr.shape[0] - 1
    out = np.zeros((nc, res.shape[1]))
    np.add.at(out, parent.fine_to_coarse, res)
    return out


def prolongate_correct(coarse_correction: np.ndarray, parent: ParentMap,
                       fine_correction: np.ndarray) -> np.ndarray:
    """Piecewise-constant injection: every child inherits its parent's
    correction, added in place."""
    fine_correction += coarse_correction[parent.fine_to_coarse]
    return fine_correction


def solve_coarsest(level: LinearLevel, mode: str = "direct") -> np.ndarray:
    """Exact (or near-exact) solve on the coarsest level."""
    if mode == "direct":
        if level._lu is None:
            level._lu = scipy.linalg.lu_factor(level.matrix.to_dense())
        sol = scipy.linalg.lu_solve(level._lu, level.rhs.ravel())
        if not np.all(np.isfinite(sol)):
            raise AssemblyError("coarsest direct solve failed")
        level.correction = sol.reshape(level.rhs.shape)
        return level.correction
    # iterated symmetric sweeps
    level.correction[:] = 0.0
    bnorm = np.abs(level.rhs).sum()
    floor = 1e-12 * bnorm if bnorm > 0.0 else 0.0
    for _ in range(500):
        block_sgs_sweep(level)
        if np.abs(level.linear_residual()).sum() <= floor:
            break
    return level.correction


def mg_cycle(levels: list, l: int, config: CycleConfig,
             visits: list | None = None) -> np.ndarray:
    """Recursive gamma-cycle on the linear hierarchy starting at level l.

    Pre-smooths, restricts to a zeroed coarse correction, recurses gamma
    times (once when l is the finest level), prolongates and
    post-smooths; the coarsest level is solved exactly instead.
    Returns the updated correction on level l.
    """
    if visits is not None:
        visits[l] += 1
    lv = levels[l]
    if l == len(levels) - 1:
        return solve_coarsest(lv, config.coarsest_solver)
    for _ in range(config.nu1):
        block_sgs_sweep(lv)
    coarse = levels[l + 1]
    coarse.rhs = restrict_residual(lv, coarse.parent)
    coarse.correction[:] = 0.0
    gamma = 1 if l == 0 else config.gamma
    for _ in range(gamma):
        mg_cycle(levels, l + 1, config, visits)
    prolongate_correct(coarse.correction, coarse.parent, lv.correction)
    for _ in range(config.nu2):
        block_sgs_sweep(lv)
    return lv.correction


def instrumented_cycles(levels: list, config: CycleConfig,
                        n_cycles: int) -> list:
    """Run cycles on the finest level recording, per cycle, the linear
    residual norm and the visit count of every level."""
    rows = []
    for k in range(n_cycles):
        visits = [0] * len(levels)
        mg_cycle(levels, 0, config, visits)
        lin = float(np.abs(levels[0].linear_residual()).sum())
        rows.append((k + 1, lin, tuple(visits)))
    return rows


def build_linear_levels(A0: BlockSparseMatrix, rhs0: np.ndarray,
                        hierarchy: MeshHierarchy,
                        n_coarse_levels: int) -> list:
    """Galerkin hierarchy of LinearLevels under the fine system."""
    if n_coarse_levels > hierarchy.n_coarse_levels:
        raise ValueError("mesh hierarchy is too shallow for the cycle")
    levels = [LinearLevel(A0, rhs0)]
    for l in range(1, n_coarse_levels + 1):
        parent = hierarchy[l].parent
        A = galerkin_coarsen(levels[-1].matrix, parent)
        levels.append(LinearLevel(A, np.zeros((A.n, A.m)), parent=parent))
    return levels
