"""Spectral analysis and exact-solution oracles.

The error-propagation matrix of one symmetric block Gauss-Seidel sweep
is built column by column (a sweep with zero right-hand side applied to
each basis vector) and its dense spectrum gives the asymptotic
convergence rate of the single-grid iteration around a steady state.
Exact profiles for the subcritical, transcritical (with and without a
stationary jump) and lake-at-rest benchmarks close the loop on solution
accuracy.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np
from scipy.optimize import brentq

from . import kernels
from .assembly import BlockSparseMatrix
from .mesh import MeshLevel

MAX_DENSE_DIM = 4096


@dataclass(frozen=True)
class SpectralReport:
    """Spectrum of the sweep iteration matrix.

    ``rho`` is the spectral radius and ``r_inf = -ln(rho)`` the
    asymptotic per-sweep convergence rate.
    """
    eigenvalues: np.ndarray
    rho: float
    r_inf: float

    def dump_scatter(self, path) -> None:
        """Two-column (Re, Im) text file for eigenvalue scatter plots."""
        with open(path, "w") as f:
            for lam in self.eigenvalues:
                f.write(f"{lam.real:.17g} {lam.imag:.17g}\n")


@dataclass(frozen=True)
class RateFit:
    """Least-squares slope C of 1 - rho against the mesh width."""
    samples: tuple
    C: float
    residual: float


def build_iteration_matrix(A: BlockSparseMatrix) -> np.ndarray:
    """Dense error-propagation operator of one symmetric block-GS sweep.

    Column k is the result of one forward+backward sweep with zero
    right-hand side started from the k-th basis vector, i.e.
    T = (D+U)^-1 L (D+L)^-1 U for A = L + D + U.
    """
    dim = A.n * A.m
    if dim > MAX_DENSE_DIM:
        raise ValueError(f"dense iteration matrix capped at {MAX_DENSE_DIM}, "
                         f"got {dim}")
    dinv = np.linalg.inv(A.diagonal_blocks())
    b = np.zeros((A.n, A.m))
    T = np.empty((dim, dim))
    for k in range(dim):
        x = np.zeros((A.n, A.m))
        x[k // A.m, k % A.m] = 1.0
        kernels.sgs_half_sweep(A.indptr, A.indices, A.blocks, dinv, x, b,
                               A.m, True)
        kernels.sgs_half_sweep(A.indptr, A.indices, A.blocks, dinv, x, b,
                               A.m, False)
        T[:, k] = x.ravel()
    return T


def apply_sweep(A: BlockSparseMatrix, x: np.ndarray) -> np.ndarray:
    """One symmetric sweep with zero right-hand side: x -> T x."""
    dinv = np.linalg.inv(A.diagonal_blocks())
    b = np.zeros((A.n, A.m))
    y = x.copy()
    kernels.sgs_half_sweep(A.indptr, A.indices, A.blocks, dinv, y, b, A.m, True)
    kernels.sgs_half_sweep(A.indptr, A.indices, A.blocks, dinv, y, b, A.m, False)
    return y


def spectrum(T: np.ndarray) -> SpectralReport:
    """All eigenvalues of a dense iteration matrix."""
    if not np.all(np.isfinite(T)):
        raise ValueError("iteration matrix has non-finite entries")
    lam = np.linalg.eigvals(T)
    rho = float(np.max(np.abs(lam)))
    return SpectralReport(eigenvalues=lam, rho=rho,
                          r_inf=-math.log(rho) if rho > 0.0 else math.inf)


def power_iteration_rho(T: np.ndarray, iters: int = 500,
                        seed: int = 0) -> float:
    """Spectral-radius estimate from the asymptotic norm growth rate of
    power iteration (log-mean of the late growth ratios, which also
    handles a dominant complex pair)."""
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(T.shape[0])
    v /= np.linalg.norm(v)
    burn = iters // 2
    acc = 0.0
    count = 0
    for k in range(iters):
        w = T @ v
        nw = np.linalg.norm(w)
        if nw == 0.0:
            return 0.0
        if k >= burn:
            acc += math.log(nw)
            count += 1
        v = w / nw
    return math.exp(acc / count)


def fit_rate_law(samples) -> RateFit:
    """Fit rho ~ 1 - C dx by least squares through the origin on
    (dx, 1 - rho) pairs."""
    pts = [(float(dx), float(r)) for dx, r in samples]
    if len(pts) < 3:
        raise ValueError("need at least 3 samples")
    dx = np.array([p[0] for p in pts])
    if np.unique(dx).shape[0] < 3:
        raise ValueError("need at least 3 distinct mesh widths")
    y = 1.0 - np.array([p[1] for p in pts])
    C = float((dx * y).sum() / (dx * dx).sum())
    resid = float(np.sqrt(np.mean((y - C * dx) ** 2)))
    return RateFit(samples=tuple(pts), C=C, residual=resid)


def _bernoulli_depth(q: float, z: float, const: float, g: float,
                     branch: str, h_crit: float) -> float:
    """Depth solving q^2/(2 g h^2) + h + z = const on one branch."""
    def f(h):
        return q * q / (2.0 * g * h * h) + h + z - const
    if branch == "subcritical":
        lo, hi = h_crit, const - z + 1.0
        if f(lo) > 0.0:
            # at the crest the two branches merge
            return h_crit
        return brentq(f, lo, hi, xtol=1e-14, rtol=8.9e-16)
    lo, hi = 1e-12, h_crit
    if f(hi) > 0.0:
        return h_crit
    return brentq(f, lo, hi, xtol=1e-14, rtol=8.9e-16)


def exact_subcritical_1d(x, bed: Callable, g: float = 9.81, q: float = 1.0,
                         h_inf: float = 1.0):
    """Exact smooth subcritical profile with far-field (q, h_inf).

    The depth follows the energy relation u^2/2 + g (h + z) = const with
    h = q/u on the subcritical branch (u below the critical velocity
    (g q)^(1/3)); for the unit normalization this is the cubic
    u^3 + (2 g z - 2 g - 1) u + 2 g = 0.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    z = np.asarray(bed(x), dtype=float)
    u_inf = q / h_inf
    two_b = u_inf * u_inf + 2.0 * g * h_inf
    u_crit = (g * q) ** (1.0 / 3.0)
    u = np.empty_like(x)
    for k in range(x.shape[0]):
        def f(uu):
            return uu ** 3 + (2.0 * g * z[k] - two_b) * uu + 2.0 * g * q
        if f(u_crit) >= 0.0:
            raise ValueError("no subcritical root: flow reaches critical")
        u[k] = brentq(f, 1e-12, u_crit, xtol=1e-15, rtol=8.9e-16)
    return q / u, u


def _jump_data(bed: Callable, x_min: float, x_max: float, g: float, q: float,
               h_down: float):
    """Stationary-jump data (x_s, z_s, h1, h2) matching the crest-energy
    supercritical branch to the outlet-energy subcritical branch through
    the momentum-flux balance q^2/h + g h^2/2."""
    xs = np.linspace(x_min, x_max, 20001)
    zs = np.asarray(bed(xs), dtype=float)
    ic = int(np.argmax(zs))
    x_crest = xs[ic]
    z_crest = zs[ic]
    h_c = (q * q / g) ** (1.0 / 3.0)
    b_up = q * q / (2.0 * g * h_c * h_c) + h_c + z_crest
    z_out = float(np.asarray(bed(np.array([x_max])), dtype=float)[0])
    b_down = q * q / (2.0 * g * h_down * h_down) + h_down + z_out

    def jump_mismatch(z_s):
        h1 = _bernoulli_depth(q, z_s, b_up, g, "supercritical", h_c)
        h2 = _bernoulli_depth(q, z_s, b_down, g, "subcritical", h_c)
        return (q * q / h1 + 0.5 * g * h1 * h1
                - q * q / h2 - 0.5 * g * h2 * h2)

    grid = np.linspace(0.0, z_crest * (1.0 - 1e-9), 400)
    vals = np.array([jump_mismatch(zz) for zz in grid])
    flips = np.flatnonzero(np.diff(np.sign(vals)) != 0)
    if flips.size == 0:
        raise ValueError("no admissible stationary jump in the domain")
    z_s = brentq(jump_mismatch, grid[flips[0]], grid[flips[0] + 1],
                 xtol=1e-15, rtol=8.9e-16)
    h1 = _bernoulli_depth(q, z_s, b_up, g, "supercritical", h_c)
    h2 = _bernoulli_depth(q, z_s, b_down, g, "subcritical", h_c)

    down = (xs >= x_crest) & (zs >= z_s)
    k_last = np.flatnonzero(down)[-1]
    x_s = xs[k_last]
    if k_last + 1 < xs.shape[0]:
        x_s = brentq(lambda xx: float(bed(np.array([xx]))[0]) - z_s,
                     xs[k_last], xs[k_last + 1], xtol=1e-13)
    return x_s, z_s, h1, h2, b_up, b_down, h_c, x_crest


def exact_transcritical_1d(x, bed: Callable, g: float = 9.81, q: float = 1.53,
                           h_down: float = 0.66, with_shock: bool = False):
    """Exact transcritical profile over a single-maximum bump.

    The flow is critical exactly at the crest, h_c = (q^2/g)^(1/3);
    energy branches integrate upstream (subcritical) and downstream
    (supercritical).  With a stationary jump, its bed height solves the
    momentum-flux matching q^2/h1 + g h1^2/2 = q^2/h2 + g h2^2/2 between
    the crest-energy supercritical branch and the outlet-energy
    subcritical branch; downstream of the jump the profile meets h_down
    at the outlet.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    xs = np.linspace(x.min(), x.max(), 20001)
    zs = np.asarray(bed(xs), dtype=float)
    ic = int(np.argmax(zs))
    x_crest = xs[ic]
    z_crest = zs[ic]
    h_c = (q * q / g) ** (1.0 / 3.0)
    b_up = q * q / (2.0 * g * h_c * h_c) + h_c + z_crest

    z = np.asarray(bed(x), dtype=float)
    h = np.empty_like(x)
    if not with_shock:
        for k in range(x.shape[0]):
            branch = "subcritical" if x[k] < x_crest else "supercritical"
            h[k] = _bernoulli_depth(q, z[k], b_up, g, branch, h_c)
        return h, q / h

    x_s, z_s, h1, h2, b_up, b_down, h_c, x_crest = _jump_data(
        bed, float(x.min()), float(x.max()), g, q, h_down)

    for k in range(x.shape[0]):
        if x[k] < x_crest:
            h[k] = _bernoulli_depth(q, z[k], b_up, g, "subcritical", h_c)
        elif x[k] <= x_s:
            h[k] = _bernoulli_depth(q, z[k], b_up, g, "supercritical", h_c)
        else:
            h[k] = _bernoulli_depth(q, z[k], b_down, g, "subcritical", h_c)
    return h, q / h


def transcritical_shock_position(bed: Callable, x_min: float, x_max: float,
                                 g: float = 9.81, q: float = 0.18,
                                 h_down: float = 0.33):
    """Location and adjacent exact depths (x_s, h1, h2) of the jump."""
    x_s, _, h1, h2, *_ = _jump_data(bed, x_min, x_max, g, q, h_down)
    return x_s, h1, h2


def lake_at_rest_exact(z, surface: float):
    """Rest state over topography: h = max(surface - z, 0), u = 0."""
    z = np.asarray(z, dtype=float)
    h = np.maximum(surface - z, 0.0)
    return h, np.zeros_like(h)


class ErrorNorms(NamedTuple):
    l1: np.ndarray
    l2: np.ndarray
    linf: np.ndarray


def error_norms(numeric: np.ndarray, exact: np.ndarray,
                level: MeshLevel) -> ErrorNorms:
    """Area-weighted L1/L2/Linf of numeric - exact, per component."""
    numeric = np.asarray(numeric, dtype=float)
    exact = np.asarray(exact, dtype=float)
    if exact.ndim == 1:
        exact = exact[:, None]
    k = exact.shape[1]
    if numeric.shape[0] != level.n_cells or exact.shape[0] != level.n_cells:
        raise ValueError("field length does not match the mesh")
    d = numeric[:, :k] - exact
    a = level.areas[:, None]
    return ErrorNorms(l1=np.abs(d * a).sum(axis=0),
                      l2=np.sqrt((d * d * a).sum(axis=0)),
                      linf=np.abs(d).max(axis=0))
