"""Numba-compiled computational kernels.

Everything hot lives here: interface fluxes in the edge-local frame,
hydrostatic reconstruction, ghost-state synthesis, residual and
finite-difference Jacobian assembly over edges, the nonlinear block
Gauss-Seidel sweep, and the linear block-SGS smoother on block-CSR
operators.

State layout is one row per cell, ``U[i] = (h, hu)`` in 1D and
``(h, hu, hv)`` in 2D; kernels take the block size ``m`` (2 or 3) and
internally carry a third component that stays zero in 1D.  Edge normals
always point from ``edge_left`` to ``edge_right``; boundary edges have
``edge_right == -1`` and a tag indexing the boundary tables.
"""

import math

import numpy as np
from numba import njit

from .errors import DryStateError

# flux kind codes
HLL = 0
HLLC = 1
LLF = 2
ROE = 3

# boundary kind codes
SUB_IN = 0
SUB_OUT = 1
SUP_IN = 2
SUP_OUT = 3
SLIP = 4
REFLECT = 5
AUTO = 6

ENTROPY_FIX = 0.4        # Harten fix half-width for the Roe flux
DRY_FRONT_FACTOR = 0.03  # wave-speed augmentation at wet/dry fronts
JAC_HUGE = 1e8           # forward-difference entry considered unusable
CENTRAL_EPS = 1e-6       # step of the central-difference fallback
OUTFLOW_FROUDE_GATE = 0.05  # below this normal Froude a depth-prescribed
                            # boundary couples to a still reservoir


@njit(cache=True)
def _harten(x):
    ax = abs(x)
    if ax >= 2.0 * ENTROPY_FIX:
        return ax
    return x * x / (4.0 * ENTROPY_FIX) + ENTROPY_FIX


@njit(cache=True)
def _frame_flux(kind, hm, unm, utm, hp, unp, utp, g, h_eps):
    """Numerical flux in the edge frame on a reconstructed pair.

    Takes interface depths and frame velocities (normal, tangential) on
    both sides; returns the mass, normal-momentum and tangential-momentum
    flux components.  The tangential component is identically zero for
    flat 1D input (utm = utp = 0).

    Dry-state branches key on exactly-zero reconstructed depths (the
    clamp produces exact zeros); keying on the larger state threshold
    h_eps would blind difference quotients to the wetting sensitivity of
    dry cells.  h_eps still gates the wet/dry wave-speed margin and the
    Roe wetness requirement.
    """
    dry_m = hm <= 0.0
    dry_p = hp <= 0.0
    if dry_m and dry_p:
        return 0.0, 0.0, 0.0
    cm = math.sqrt(g * hm)
    cp = math.sqrt(g * hp)
    qnm = hm * unm
    qtm = hm * utm
    qnp = hp * unp
    qtp = hp * utp
    flm0 = qnm
    flm1 = qnm * unm + 0.5 * g * hm * hm
    flm2 = qtm * unm
    flp0 = qnp
    flp1 = qnp * unp + 0.5 * g * hp * hp
    flp2 = qtp * unp

    if kind == LLF:
        smax = max(abs(unm) + cm, abs(unp) + cp)
        if hm <= h_eps or hp <= h_eps:
            smax += DRY_FRONT_FACTOR * math.sqrt(g * max(hm, hp))
        return (0.5 * (flm0 + flp0 - smax * (hp - hm)),
                0.5 * (flm1 + flp1 - smax * (qnp - qnm)),
                0.5 * (flm2 + flp2 - smax * (qtp - qtm)))

    if kind == ROE:
        if hm <= h_eps or hp <= h_eps:
            raise DryStateError("Roe flux needs wet states on both sides")
        sqm = math.sqrt(hm)
        sqp = math.sqrt(hp)
        w = 1.0 / (sqm + sqp)
        un_hat = (sqm * unm + sqp * unp) * w
        ut_hat = (sqm * utm + sqp * utp) * w
        c_hat = math.sqrt(0.5 * g * (hm + hp))
        dh = hp - hm
        dqn = qnp - qnm
        dqt = qtp - qtm
        a1 = ((un_hat + c_hat) * dh - dqn) / (2.0 * c_hat)
        a3 = (dqn - (un_hat - c_hat) * dh) / (2.0 * c_hat)
        a2 = dqt - ut_hat * dh
        q1 = _harten(un_hat - c_hat) * a1
        q2 = _harten(un_hat) * a2
        q3 = _harten(un_hat + c_hat) * a3
        d0 = q1 + q3
        d1 = q1 * (un_hat - c_hat) + q3 * (un_hat + c_hat)
        d2 = (q1 + q3) * ut_hat + q2
        return (0.5 * (flm0 + flp0 - d0),
                0.5 * (flm1 + flp1 - d1),
                0.5 * (flm2 + flp2 - d2))

    # HLL / HLLC: two-rarefaction star estimates, dry-front wave speeds
    u_star = 0.5 * (unm + unp) + cm - cp
    c_star = abs(0.5 * (cm + cp) + 0.25 * (unm - unp))
    if dry_m:
        s_l = unp - 2.0 * cp
    else:
        s_l = min(unm - cm, u_star - c_star)
    if dry_p:
        s_r = unm + 2.0 * cm
    else:
        s_r = max(unp + cp, u_star + c_star)

    if s_l >= 0.0:
        f0, f1, f2 = flm0, flm1, flm2
    elif s_r <= 0.0:
        f0, f1, f2 = flp0, flp1, flp2
    else:
        inv = 1.0 / (s_r - s_l)
        f0 = (s_r * flm0 - s_l * flp0 + s_l * s_r * (hp - hm)) * inv
        f1 = (s_r * flm1 - s_l * flp1 + s_l * s_r * (qnp - qnm)) * inv
        f2 = (s_r * flm2 - s_l * flp2 + s_l * s_r * (qtp - qtm)) * inv

    if kind == HLLC and s_l < 0.0 and s_r > 0.0:
        den = hp * (unp - s_r) - hm * (unm - s_l)
        s_m = (s_l * hp * (unp - s_r) - s_r * hm * (unm - s_l)) / den
        if s_m >= 0.0:
            f2 = utm * f0
        else:
            f2 = utp * f0
    return f0, f1, f2


@njit(cache=True)
def edge_flux(kind, hi, hui, hvi, hj, huj, hvj, zi, zj, nx, ny, g, h_eps):
    """Interface numerical flux with hydrostatic reconstruction.

    Returns the flux in global components (mass, x-momentum, y-momentum)
    plus the reconstructed interface depths ``(hm, hp)`` that feed the
    well-balanced pressure correction on either side.  The flux does NOT
    include that correction.
    """
    zmax = zi if zi >= zj else zj
    hm = hi + zi - zmax
    if hm < 0.0:
        hm = 0.0
    hp = hj + zj - zmax
    if hp < 0.0:
        hp = 0.0
    if hi > h_eps:
        ui = hui / hi
        vi = hvi / hi
    else:
        ui = 0.0
        vi = 0.0
    if hj > h_eps:
        uj = huj / hj
        vj = hvj / hj
    else:
        uj = 0.0
        vj = 0.0
    unm = ui * nx + vi * ny
    utm = -ui * ny + vi * nx
    unp = uj * nx + vj * ny
    utp = -uj * ny + vj * nx
    f0, fn, ft = _frame_flux(kind, hm, unm, utm, hp, unp, utp, g, h_eps)
    return f0, fn * nx - ft * ny, fn * ny + ft * nx, hm, hp


@njit(cache=True)
def _inflow_depth(qn, rinv, g):
    """Ghost depth from prescribed normal discharge and the outgoing
    invariant: solve qn/h + 2*sqrt(g*h) = rinv.

    Monotone increasing in h for qn <= 0, so bisection on an expanded
    bracket is exact and deterministic.  Degenerate data collapses to a
    (near-)dry ghost.
    """
    lo = 1e-12
    if qn / lo + 2.0 * math.sqrt(g * lo) - rinv > 0.0:
        return lo
    hi = 1.0
    grew = False
    for _ in range(200):
        if qn / hi + 2.0 * math.sqrt(g * hi) - rinv > 0.0:
            grew = True
            break
        hi *= 2.0
    if not grew:
        return hi
    a = lo
    b = hi
    for _ in range(100):
        c = 0.5 * (a + b)
        if qn / c + 2.0 * math.sqrt(g * c) - rinv < 0.0:
            a = c
        else:
            b = c
    return 0.5 * (a + b)


@njit(cache=True)
def ghost_frame(bkind, h_pre, qn_pre, ut_pre, h_i, un_i, ut_i, g, h_eps):
    """Ghost state (depth, normal velocity, tangential velocity) outside a
    boundary edge, given the interior state in the edge frame.

    Open boundaries follow the local-Froude dispatch: the invariant
    u_n + 2*sqrt(g*h) is carried from the interior whenever the regime
    leaves it outgoing.  NaN in a prescribed slot means "not given".
    """
    kind = bkind
    if kind == AUTO:
        if h_i <= h_eps:
            return 0.0, 0.0, 0.0
        fr = math.sqrt(un_i * un_i + ut_i * ut_i) / math.sqrt(g * h_i)
        if un_i < 0.0 and not math.isnan(qn_pre):
            kind = SUP_IN if fr >= 1.0 else SUB_IN
        elif fr >= 1.0 or math.isnan(h_pre):
            kind = SUP_OUT
        else:
            kind = SUB_OUT

    if kind == SUP_OUT:
        return h_i, un_i, ut_i
    if kind == SLIP:
        return h_i, 0.0, ut_i
    if kind == REFLECT:
        return h_i, -un_i, ut_i

    ut_g = 0.0 if math.isnan(ut_pre) else ut_pre
    if kind == SUP_IN:
        h_g = h_i if math.isnan(h_pre) else h_pre
        if h_g <= h_eps:
            return 0.0, 0.0, ut_g
        qn_g = h_i * un_i if math.isnan(qn_pre) else qn_pre
        return h_g, qn_g / h_g, ut_g
    if kind == SUB_OUT:
        h_g = h_pre
        if h_i <= h_eps or h_g <= 0.0:
            return max(h_g, 0.0), 0.0, ut_i
        c_i = math.sqrt(g * h_i)
        if un_i > OUTFLOW_FROUDE_GATE * c_i:
            # genuine outflow: carry the outgoing invariant to the ghost
            un_g = un_i + 2.0 * (c_i - math.sqrt(g * h_g))
            return h_g, un_g, ut_i
        # near-rest or reversed flow with only the depth given: couple to a
        # still reservoir; pure invariant extrapolation leaves the cell's
        # momentum unconstrained and destabilizes the symmetric sweeps
        return h_g, 0.0, ut_i
    # SUB_IN: prescribed normal discharge, depth closes the invariant
    if h_i <= h_eps:
        return 0.0, 0.0, ut_g
    rinv = un_i + 2.0 * math.sqrt(g * h_i)
    h_g = _inflow_depth(qn_pre, rinv, g)
    if h_g <= 1e-12:
        return 0.0, 0.0, ut_g
    return h_g, qn_pre / h_g, ut_g


@njit(cache=True)
def boundary_flux(kind, bkind, h_pre, qn_pre, ut_pre,
                  hi, hui, hvi, zi, nx, ny, g, h_eps):
    """Numerical flux through a boundary edge.

    The ghost state is synthesized from the interior state in the edge
    frame (so differentiating through this routine captures the chain
    rule of the ghost closure) and shares the interior bed elevation.
    Returns global flux components plus the interior-side reconstructed
    depth for the pressure correction.
    """
    if hi > h_eps:
        ui = hui / hi
        vi = hvi / hi
    else:
        ui = 0.0
        vi = 0.0
    un_i = ui * nx + vi * ny
    ut_i = -ui * ny + vi * nx
    hg, ung, utg = ghost_frame(bkind, h_pre, qn_pre, ut_pre, hi, un_i, ut_i, g, h_eps)
    hug = hg * (ung * nx - utg * ny)
    hvg = hg * (ung * ny + utg * nx)
    f0, fx, fy, hm, hp = edge_flux(kind, hi, hui, hvi, hg, hug, hvg,
                                   zi, zi, nx, ny, g, h_eps)
    return f0, fx, fy, hm


@njit(cache=True)
def residual_kernel(U, z, m, eleft, eright, ebtag, enx, eny, elen,
                    bkind, bh, bqn, but, kind, g, h_eps, out):
    """Assemble the per-cell residual R_i = sum over edges of
    |e| (numerical flux - interface pressure term), in place."""
    out[:] = 0.0
    for e in range(eleft.shape[0]):
        i = eleft[e]
        j = eright[e]
        nx = enx[e]
        ny = eny[e]
        le = elen[e]
        hi = U[i, 0]
        hui = U[i, 1]
        hvi = U[i, 2] if m == 3 else 0.0
        if j >= 0:
            hj = U[j, 0]
            huj = U[j, 1]
            hvj = U[j, 2] if m == 3 else 0.0
            f0, fx, fy, hm, hp = edge_flux(kind, hi, hui, hvi, hj, huj, hvj,
                                           z[i], z[j], nx, ny, g, h_eps)
            sm = 0.5 * g * hm * hm
            sp = 0.5 * g * hp * hp
            out[i, 0] += le * f0
            out[i, 1] += le * (fx - sm * nx)
            out[j, 0] -= le * f0
            out[j, 1] -= le * (fx - sp * nx)
            if m == 3:
                out[i, 2] += le * (fy - sm * ny)
                out[j, 2] -= le * (fy - sp * ny)
        else:
            t = ebtag[e]
            f0, fx, fy, hm = boundary_flux(kind, bkind[t], bh[t], bqn[t], but[t],
                                           hi, hui, hvi, z[i], nx, ny, g, h_eps)
            sm = 0.5 * g * hm * hm
            out[i, 0] += le * f0
            out[i, 1] += le * (fx - sm * nx)
            if m == 3:
                out[i, 2] += le * (fy - sm * ny)


@njit(cache=True)
def _cell_residual(i, U, z, m, cptr, cidx, eleft, eright, ebtag, enx, eny, elen,
                   bkind, bh, bqn, but, kind, g, h_eps):
    """Residual of a single cell using the freshest neighbor values."""
    r0 = 0.0
    r1 = 0.0
    r2 = 0.0
    hi = U[i, 0]
    hui = U[i, 1]
    hvi = U[i, 2] if m == 3 else 0.0
    for p in range(cptr[i], cptr[i + 1]):
        e = cidx[p]
        nx = enx[e]
        ny = eny[e]
        le = elen[e]
        if eleft[e] == i:
            j = eright[e]
            if j >= 0:
                hj = U[j, 0]
                huj = U[j, 1]
                hvj = U[j, 2] if m == 3 else 0.0
                f0, fx, fy, hm, hp = edge_flux(kind, hi, hui, hvi, hj, huj, hvj,
                                               z[i], z[j], nx, ny, g, h_eps)
            else:
                t = ebtag[e]
                f0, fx, fy, hm = boundary_flux(kind, bkind[t], bh[t], bqn[t], but[t],
                                               hi, hui, hvi, z[i], nx, ny, g, h_eps)
            s = 0.5 * g * hm * hm
            r0 += le * f0
            r1 += le * (fx - s * nx)
            r2 += le * (fy - s * ny)
        else:
            j = eleft[e]
            hj = U[j, 0]
            huj = U[j, 1]
            hvj = U[j, 2] if m == 3 else 0.0
            f0, fx, fy, hm, hp = edge_flux(kind, hj, huj, hvj, hi, hui, hvi,
                                           z[j], z[i], nx, ny, g, h_eps)
            s = 0.5 * g * hp * hp
            r0 -= le * f0
            r1 -= le * (fx - s * nx)
            r2 -= le * (fy - s * ny)
    return r0, r1, r2


@njit(cache=True)
def _solve_small(A, b, m):
    """Solve the leading m-by-m system in place (partial pivoting);
    b holds the solution on success."""
    for col in range(m):
        piv = col
        big = abs(A[col, col])
        for r in range(col + 1, m):
            a = abs(A[r, col])
            if a > big:
                big = a
                piv = r
        if not (big > 1e-300) or not math.isfinite(big):
            return False
        if piv != col:
            for c in range(col, m):
                tmp = A[col, c]
                A[col, c] = A[piv, c]
                A[piv, c] = tmp
            tmp = b[col]
            b[col] = b[piv]
            b[piv] = tmp
        inv = 1.0 / A[col, col]
        for r in range(col + 1, m):
            f = A[r, col] * inv
            if f != 0.0:
                for c in range(col + 1, m):
                    A[r, c] -= f * A[col, c]
                b[r] -= f * b[col]
    for col in range(m - 1, -1, -1):
        s = b[col]
        for c in range(col + 1, m):
            s -= A[col, c] * b[c]
        b[col] = s / A[col, col]
        if not math.isfinite(b[col]):
            return False
    return True


@njit(cache=True)
def blusgs_half_sweep(U, z, m, cptr, cidx, eleft, eright, ebtag, enx, eny, elen,
                      bkind, bh, bqn, but, kind, g, h_eps, alpha, eps_fd, forward):
    """One nonlinear block Gauss-Seidel pass, updating U in place.

    Each visited cell solves its residual-regularized diagonal system
    (alpha*|R_i|_1 I + dR_i/dU_i) dU = R_i with the freshest neighbor
    values, then applies the dry clamp.  Returns the number of cells
    whose local solve was skipped (zero residual or singular block).
    """
    n = U.shape[0]
    J = np.empty((3, 3))
    rhs = np.empty(3)
    skipped = 0
    for s_idx in range(n):
        i = s_idx if forward else n - 1 - s_idx
        r0, r1, r2 = _cell_residual(i, U, z, m, cptr, cidx, eleft, eright, ebtag,
                                    enx, eny, elen, bkind, bh, bqn, but,
                                    kind, g, h_eps)
        rnorm = abs(r0) + abs(r1)
        if m == 3:
            rnorm += abs(r2)
        if rnorm == 0.0:
            continue
        if U[i, 0] <= h_eps:
            # dry cell: momentum is pinned at zero by admissibility, so
            # only the mass equation is solved; the cell re-wets at rest
            saved = U[i, 0]
            U[i, 0] = saved + eps_fd
            p0, p1, p2 = _cell_residual(i, U, z, m, cptr, cidx, eleft, eright,
                                        ebtag, enx, eny, elen, bkind, bh, bqn,
                                        but, kind, g, h_eps)
            U[i, 0] = saved
            d = alpha * rnorm + (p0 - r0) / eps_fd
            if not (abs(d) > 1e-300) or not math.isfinite(d):
                skipped += 1
                continue
            hn = U[i, 0] - r0 / d
            U[i, 0] = 0.0 if hn <= h_eps else hn
            continue
        for k in range(m):
            saved = U[i, k]
            U[i, k] = saved + eps_fd
            p0, p1, p2 = _cell_residual(i, U, z, m, cptr, cidx, eleft, eright,
                                        ebtag, enx, eny, elen, bkind, bh, bqn,
                                        but, kind, g, h_eps)
            U[i, k] = saved
            J[0, k] = (p0 - r0) / eps_fd
            J[1, k] = (p1 - r1) / eps_fd
            if m == 3:
                J[2, k] = (p2 - r2) / eps_fd
        for k in range(m):
            J[k, k] += alpha * rnorm
        rhs[0] = r0
        rhs[1] = r1
        rhs[2] = r2
        if not _solve_small(J, rhs, m):
            skipped += 1
            continue
        for k in range(m):
            U[i, k] -= rhs[k]
        if U[i, 0] <= h_eps:
            for k in range(m):
                U[i, k] = 0.0
    return skipped


@njit(cache=True)
def _edge_blocks_interior(kind, U, z, m, i, j, nx, ny, g, h_eps, eps, central,
                          bii, bij, bji, bjj):
    """Finite-difference blocks of the two total edge fluxes for one
    interior edge.

    Row-i flux is fhat - S(hm); row-j flux is -(fhat - S(hp)).  Fills the
    four m-by-m blocks and returns (ok, ti0, ti1, ti2, tj0, tj1, tj2)
    where t* are the base total fluxes and ok reports finite,
    moderately-sized entries.
    """
    hi = U[i, 0]
    hui = U[i, 1]
    hvi = U[i, 2] if m == 3 else 0.0
    hj = U[j, 0]
    huj = U[j, 1]
    hvj = U[j, 2] if m == 3 else 0.0
    f0, fx, fy, hm, hp = edge_flux(kind, hi, hui, hvi, hj, huj, hvj,
                                   z[i], z[j], nx, ny, g, h_eps)
    sm = 0.5 * g * hm * hm
    sp = 0.5 * g * hp * hp
    ti0 = f0
    ti1 = fx - sm * nx
    ti2 = fy - sm * ny
    tj0 = -f0
    tj1 = -(fx - sp * nx)
    tj2 = -(fy - sp * ny)
    ok = True
    for k in range(3):
        if k >= m:
            break
        d0 = eps if k == 0 else 0.0
        d1 = eps if k == 1 else 0.0
        d2 = eps if k == 2 else 0.0
        # side i
        a0, ax, ay, ahm, ahp = edge_flux(kind, hi + d0, hui + d1, hvi + d2,
                                         hj, huj, hvj, z[i], z[j], nx, ny, g, h_eps)
        if central:
            b0, bx, by, bhm, bhp = edge_flux(kind, hi - d0, hui - d1, hvi - d2,
                                             hj, huj, hvj, z[i], z[j], nx, ny,
                                             g, h_eps)
            den = 2.0 * eps
        else:
            b0, bx, by, bhm = f0, fx, fy, hm
            den = eps
        asm = 0.5 * g * ahm * ahm
        bsm = 0.5 * g * bhm * bhm
        bii[0, k] = (a0 - b0) / den
        bii[1, k] = ((ax - asm * nx) - (bx - bsm * nx)) / den
        bii[2, k] = ((ay - asm * ny) - (by - bsm * ny)) / den
        bji[0, k] = -(a0 - b0) / den
        bji[1, k] = -(ax - bx) / den
        bji[2, k] = -(ay - by) / den
        # side j
        a0, ax, ay, ahm, ahp = edge_flux(kind, hi, hui, hvi, hj + d0, huj + d1,
                                         hvj + d2, z[i], z[j], nx, ny, g, h_eps)
        if central:
            b0, bx, by, bhm, bhp2 = edge_flux(kind, hi, hui, hvi, hj - d0,
                                              huj - d1, hvj - d2, z[i], z[j],
                                              nx, ny, g, h_eps)
            php = bhp2
        else:
            b0, bx, by, php = f0, fx, fy, hp
        asp = 0.5 * g * ahp * ahp
        bsp = 0.5 * g * php * php
        bij[0, k] = (a0 - b0) / den
        bij[1, k] = (ax - bx) / den
        bij[2, k] = (ay - by) / den
        bjj[0, k] = -(a0 - b0) / den
        bjj[1, k] = -((ax - asp * nx) - (bx - bsp * nx)) / den
        bjj[2, k] = -((ay - asp * ny) - (by - bsp * ny)) / den
        for r in range(m):
            v1 = bii[r, k]
            v2 = bij[r, k]
            v3 = bji[r, k]
            v4 = bjj[r, k]
            if (not math.isfinite(v1) or not math.isfinite(v2)
                    or not math.isfinite(v3) or not math.isfinite(v4)
                    or abs(v1) > JAC_HUGE or abs(v2) > JAC_HUGE
                    or abs(v3) > JAC_HUGE or abs(v4) > JAC_HUGE):
                ok = False
    return ok, ti0, ti1, ti2, tj0, tj1, tj2


@njit(cache=True)
def _edge_blocks_boundary(kind, U, z, m, i, bk, h_pre, qn_pre, ut_pre,
                          nx, ny, g, h_eps, eps, central, bii):
    """Finite-difference block of the total boundary flux; the ghost
    state is recomputed from each perturbed interior state."""
    hi = U[i, 0]
    hui = U[i, 1]
    hvi = U[i, 2] if m == 3 else 0.0
    f0, fx, fy, hm = boundary_flux(kind, bk, h_pre, qn_pre, ut_pre,
                                   hi, hui, hvi, z[i], nx, ny, g, h_eps)
    sm = 0.5 * g * hm * hm
    ti0 = f0
    ti1 = fx - sm * nx
    ti2 = fy - sm * ny
    ok = True
    for k in range(3):
        if k >= m:
            break
        d0 = eps if k == 0 else 0.0
        d1 = eps if k == 1 else 0.0
        d2 = eps if k == 2 else 0.0
        a0, ax, ay, ahm = boundary_flux(kind, bk, h_pre, qn_pre, ut_pre,
                                        hi + d0, hui + d1, hvi + d2, z[i],
                                        nx, ny, g, h_eps)
        if central:
            b0, bx, by, bhm = boundary_flux(kind, bk, h_pre, qn_pre, ut_pre,
                                            hi - d0, hui - d1, hvi - d2, z[i],
                                            nx, ny, g, h_eps)
            den = 2.0 * eps
        else:
            b0, bx, by, bhm = f0, fx, fy, hm
            den = eps
        asm = 0.5 * g * ahm * ahm
        bsm = 0.5 * g * bhm * bhm
        bii[0, k] = (a0 - b0) / den
        bii[1, k] = ((ax - asm * nx) - (bx - bsm * nx)) / den
        bii[2, k] = ((ay - asm * ny) - (by - bsm * ny)) / den
        for r in range(m):
            v = bii[r, k]
            if not math.isfinite(v) or abs(v) > JAC_HUGE:
                ok = False
    return ok, ti0, ti1, ti2


@njit(cache=True)
def system_kernel(U, z, m, eleft, eright, ebtag, enx, eny, elen,
                  bkind, bh, bqn, but, kind, g, h_eps, alpha, eps_fd,
                  indptr, diag_pos, edge_pos_ij, edge_pos_ji, blocks, R):
    """Assemble the regularized Newton system into the block-CSR storage.

    Fills ``blocks`` (pattern fixed by the mesh) and the residual ``R``.
    Diagonal blocks receive alpha*|R_i|_1 I; rows of clamped-dry cells
    are replaced by the identity so the linear solve freezes them.
    Edges whose forward differences misbehave (non-finite or huge) are
    redone with central differences.
    """
    n = U.shape[0]
    blocks[:] = 0.0
    R[:] = 0.0
    bii = np.empty((3, 3))
    bij = np.empty((3, 3))
    bji = np.empty((3, 3))
    bjj = np.empty((3, 3))
    for e in range(eleft.shape[0]):
        i = eleft[e]
        j = eright[e]
        nx = enx[e]
        ny = eny[e]
        le = elen[e]
        if j >= 0:
            ok, ti0, ti1, ti2, tj0, tj1, tj2 = _edge_blocks_interior(
                kind, U, z, m, i, j, nx, ny, g, h_eps, eps_fd, False,
                bii, bij, bji, bjj)
            if not ok:
                ok, ti0, ti1, ti2, tj0, tj1, tj2 = _edge_blocks_interior(
                    kind, U, z, m, i, j, nx, ny, g, h_eps, CENTRAL_EPS, True,
                    bii, bij, bji, bjj)
            R[i, 0] += le * ti0
            R[i, 1] += le * ti1
            R[j, 0] += le * tj0
            R[j, 1] += le * tj1
            if m == 3:
                R[i, 2] += le * ti2
                R[j, 2] += le * tj2
            pii = diag_pos[i]
            pjj = diag_pos[j]
            pij = edge_pos_ij[e]
            pji = edge_pos_ji[e]
            for a in range(m):
                for b in range(m):
                    blocks[pii, a, b] += le * bii[a, b]
                    blocks[pij, a, b] += le * bij[a, b]
                    blocks[pji, a, b] += le * bji[a, b]
                    blocks[pjj, a, b] += le * bjj[a, b]
        else:
            t = ebtag[e]
            ok, ti0, ti1, ti2 = _edge_blocks_boundary(
                kind, U, z, m, i, bkind[t], bh[t], bqn[t], but[t],
                nx, ny, g, h_eps, eps_fd, False, bii)
            if not ok:
                ok, ti0, ti1, ti2 = _edge_blocks_boundary(
                    kind, U, z, m, i, bkind[t], bh[t], bqn[t], but[t],
                    nx, ny, g, h_eps, CENTRAL_EPS, True, bii)
            R[i, 0] += le * ti0
            R[i, 1] += le * ti1
            if m == 3:
                R[i, 2] += le * ti2
            pii = diag_pos[i]
            for a in range(m):
                for b in range(m):
                    blocks[pii, a, b] += le * bii[a, b]
    for i in range(n):
        if U[i, 0] <= h_eps:
            for p in range(indptr[i], indptr[i + 1]):
                for a in range(m):
                    for b in range(m):
                        blocks[p, a, b] = 0.0
            for a in range(m):
                blocks[diag_pos[i], a, a] = 1.0
        else:
            rn = abs(R[i, 0]) + abs(R[i, 1])
            if m == 3:
                rn += abs(R[i, 2])
            for a in range(m):
                blocks[diag_pos[i], a, a] += alpha * rn


@njit(cache=True)
def sgs_half_sweep(indptr, indices, blocks, dinv, x, b, m, forward):
    """One (forward or backward) linear block Gauss-Seidel pass on a
    block-CSR operator, updating x in place."""
    n = b.shape[0]
    acc = np.empty(3)
    for s in range(n):
        i = s if forward else n - 1 - s
        for a in range(m):
            acc[a] = b[i, a]
        for p in range(indptr[i], indptr[i + 1]):
            j = indices[p]
            if j == i:
                continue
            for a in range(m):
                t = 0.0
                for c in range(m):
                    t += blocks[p, a, c] * x[j, c]
                acc[a] -= t
        for a in range(m):
            t = 0.0
            for c in range(m):
                t += dinv[i, a, c] * acc[c]
            x[i, a] = t


@njit(cache=True)
def bsr_matvec(indptr, indices, blocks, x, out):
    """out = A @ x for a block-CSR operator and block vector x."""
    n = indptr.shape[0] - 1
    m = x.shape[1]
    for i in range(n):
        for a in range(m):
            out[i, a] = 0.0
        for p in range(indptr[i], indptr[i + 1]):
            j = indices[p]
            for a in range(m):
                t = 0.0
                for c in range(m):
                    t += blocks[p, a, c] * x[j, c]
                out[i, a] += t
