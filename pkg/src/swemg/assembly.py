"""Residual and Jacobian assembly into block-CSR storage.

The nonlinear residual of cell i is the edge-length-weighted sum of
well-balanced interface fluxes; the Newton matrix couples each cell to
its edge neighbors through forward-difference flux derivatives (with a
central-difference retry at flux branch points) and carries the
residual-norm regularization alpha*|R_i|_1 on the diagonal.  Rows of
clamped-dry cells are replaced by the identity with zero right-hand
side, freezing them inside the linear solve.
"""

from __future__ import annotations

import numpy as np

from . import kernels, physics
from .errors import AssemblyError
from .mesh import MeshLevel


class BlockSparseMatrix:
    """Block-CSR matrix of dense m-by-m blocks with a diagonal block in
    every row; the sparsity pattern is structurally symmetric."""

    def __init__(self, n, m, indptr, indices, blocks, diag_pos):
        self.n = n
        self.m = m
        self.indptr = indptr
        self.indices = indices
        self.blocks = blocks
        self.diag_pos = diag_pos

    @property
    def nnzb(self) -> int:
        return self.blocks.shape[0]

    def matvec(self, x: np.ndarray) -> np.ndarray:
        if x.shape != (self.n, self.m):
            raise ValueError(f"matvec expects shape {(self.n, self.m)}, "
                             f"got {x.shape}")
        out = np.empty_like(x)
        kernels.bsr_matvec(self.indptr, self.indices, self.blocks, x, out)
        return out

    def diagonal_blocks(self) -> np.ndarray:
        return self.blocks[self.diag_pos]

    def to_dense(self) -> np.ndarray:
        n, m = self.n, self.m
        out = np.zeros((n * m, n * m))
        for i in range(n):
            for p in range(self.indptr[i], self.indptr[i + 1]):
                j = self.indices[p]
                out[i * m:(i + 1) * m, j * m:(j + 1) * m] = self.blocks[p]
        return out

    def copy(self) -> "BlockSparseMatrix":
        return BlockSparseMatrix(self.n, self.m, self.indptr, self.indices,
                                 self.blocks.copy(), self.diag_pos)

    def dump(self, path) -> None:
        """Coordinate text dump: row, col, then the m*m block entries."""
        with open(path, "w") as f:
            for i in range(self.n):
                for p in range(self.indptr[i], self.indptr[i + 1]):
                    vals = " ".join(f"{v:.17g}" for v in self.blocks[p].ravel())
                    f.write(f"{i} {self.indices[p]} {vals}\n")


class ResidualVector:
    """Per-cell residuals with cached l1 norms."""

    def __init__(self, per_cell: np.ndarray):
        self.per_cell = per_cell
        self.cell_norms = np.abs(per_cell).sum(axis=1)
        self.total = float(self.cell_norms.sum())


class _Pattern:
    """Frozen CSR pattern of a mesh level plus per-edge scatter positions."""

    def __init__(self, level: MeshLevel):
        n = level.n_cells
        neighbors = [[] for _ in range(n)]
        for e in range(level.n_edges):
            j = level.edge_right[e]
            if j >= 0:
                i = level.edge_left[e]
                neighbors[i].append(j)
                neighbors[j].append(i)
        indptr = np.zeros(n + 1, dtype=np.int64)
        cols = []
        for i in range(n):
            row = sorted(set(neighbors[i]) | {i})
            cols.extend(row)
            indptr[i + 1] = indptr[i] + len(row)
        indices = np.asarray(cols, dtype=np.int64)
        pos = {}
        for i in range(n):
            for p in range(indptr[i], indptr[i + 1]):
                pos[(i, int(indices[p]))] = p
        self.indptr = indptr
        self.indices = indices
        self.diag_pos = np.array([pos[(i, i)] for i in range(n)], dtype=np.int64)
        epij = np.full(level.n_edges, -1, dtype=np.int64)
        epji = np.full(level.n_edges, -1, dtype=np.int64)
        for e in range(level.n_edges):
            j = level.edge_right[e]
            if j >= 0:
                i = int(level.edge_left[e])
                epij[e] = pos[(i, int(j))]
                epji[e] = pos[(int(j), i)]
        self.edge_pos_ij = epij
        self.edge_pos_ji = epji


def _pattern(level: MeshLevel) -> _Pattern:
    pat = getattr(level, "_system_pattern", None)
    if pat is None:
        pat = _Pattern(level)
        level._system_pattern = pat
    return pat


def assemble_residual(level: MeshLevel, sol: np.ndarray, flux_kind: str,
                      boundary, g: float = physics.GRAVITY,
                      h_eps: float = physics.H_EPS) -> ResidualVector:
    """Nonlinear residual of every cell for the given solution."""
    code = physics.FLUX_KINDS[flux_kind]
    bkind, bh, bqn, but = physics.boundary_tables(level.tag_names, boundary)
    out = np.empty((level.n_cells, level.m))
    kernels.residual_kernel(sol, level.z, level.m,
                            level.edge_left, level.edge_right, level.edge_tag,
                            level.normals[:, 0], level.normals[:, 1],
                            level.lengths, bkind, bh, bqn, but,
                            code, g, h_eps, out)
    return ResidualVector(out)


def jacobian_block_fd(level: MeshLevel, sol: np.ndarray, edge: int, side: str,
                      flux_kind: str, boundary, g: float = physics.GRAVITY,
                      eps: float = 1e-8, h_eps: float = physics.H_EPS,
                      central: bool = False) -> np.ndarray:
    """Finite-difference derivative of the total interface flux of one
    edge (seen from its left cell) with respect to one side's averages.

    On boundary edges the ghost state is recomputed from the perturbed
    interior state, so the chain rule through the boundary closure is
    captured.
    """
    code = physics.FLUX_KINDS[flux_kind]
    m = level.m
    nx = float(level.normals[edge, 0])
    ny = float(level.normals[edge, 1])
    i = int(level.edge_left[edge])
    j = int(level.edge_right[edge])
    bii = np.empty((3, 3))
    if j < 0:
        if side != "i":
            raise ValueError("boundary edges only have an interior side")
        bkind, bh, bqn, but = physics.boundary_tables(level.tag_names, boundary)
        t = int(level.edge_tag[edge])
        kernels._edge_blocks_boundary(code, sol, level.z, m, i, bkind[t],
                                      bh[t], bqn[t], but[t], nx, ny, g, h_eps,
                                      eps, central, bii)
        return bii[:m, :m].copy()
    bij = np.empty((3, 3))
    bji = np.empty((3, 3))
    bjj = np.empty((3, 3))
    kernels._edge_blocks_interior(code, sol, level.z, m, i, j, nx, ny, g,
                                  h_eps, eps, central, bii, bij, bji, bjj)
    block = bii if side == "i" else bij
    return block[:m, :m].copy()


def assemble_regularized_system(level: MeshLevel, sol: np.ndarray,
                                flux_kind: str, boundary,
                                g: float = physics.GRAVITY,
                                alpha: float = 3.0, eps: float = 1e-8,
                                h_eps: float = physics.H_EPS):
    """Regularized Newton system: returns (matrix, residual).

    Diagonal blocks are alpha*|R_i|_1 I plus the summed flux derivatives;
    each interior neighbor contributes one off-diagonal block.  The
    matching right-hand side is -R with dry rows zeroed (see
    :func:`newton_rhs`).
    """
    pat = _pattern(level)
    code = physics.FLUX_KINDS[flux_kind]
    bkind, bh, bqn, but = physics.boundary_tables(level.tag_names, boundary)
    m = level.m
    blocks = np.empty((pat.indices.shape[0], m, m))
    R = np.empty((level.n_cells, m))
    kernels.system_kernel(sol, level.z, m,
                          level.edge_left, level.edge_right, level.edge_tag,
                          level.normals[:, 0], level.normals[:, 1],
                          level.lengths, bkind, bh, bqn, but,
                          code, g, h_eps, alpha, eps,
                          pat.indptr, pat.diag_pos,
                          pat.edge_pos_ij, pat.edge_pos_ji, blocks, R)
    if not np.all(np.isfinite(blocks)):
        raise AssemblyError("Jacobian assembly produced non-finite blocks")
    matrix = BlockSparseMatrix(level.n_cells, m, pat.indptr, pat.indices,
                               blocks, pat.diag_pos)
    return matrix, ResidualVector(R)


def newton_rhs(residual: ResidualVector, sol: np.ndarray,
               h_eps: float = physics.H_EPS) -> np.ndarray:
    """Right-hand side -R with clamped-dry rows zeroed to pair with the
    identity rows of the assembled matrix."""
    rhs = -residual.per_cell.copy()
    rhs[sol[:, 0] <= h_eps] = 0.0
    return rhs


def matvec(A: BlockSparseMatrix, x: np.ndarray) -> np.ndarray:
    """y_i = sum_j A_ij x_j for a block vector x."""
    return A.matvec(x)
