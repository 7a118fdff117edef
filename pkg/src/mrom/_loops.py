"""Compiled pair loops behind the neighbour search and the SPH sums.

Every routine walks pairs sorted by ``i`` serially, so accumulation order and
therefore results are bit-for-bit reproducible. Displacements are
``d = x_i - x_j`` and kernel gradients ``grad_i W_ij = fw * d`` with
``fw = (dW/dr) / r``.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit


@njit(cache=True)
def _min_image(d, L, periodic):
    if periodic:
        d -= L * math.floor(d / L + 0.5)
    return d


@njit(cache=True)
def _cell_index(c, off, K, periodic):
    n = c + off
    if periodic:
        return n % K
    return n if 0 <= n < K else -1


@njit(cache=True)
def cell_pairs(qcell, qx, px, order, start, count, dims, periodic, L, offx, offy, cutoff, exclude_self):
    """All (query, particle) pairs closer than ``cutoff`` via the cell list, sorted by query."""
    nq = len(qx)
    cutoff2 = cutoff * cutoff
    # upper bound on the pair count: every particle of every neighbour cell
    cap = 0
    for q in range(nq):
        for a in range(len(offx)):
            nx = _cell_index(qcell[q, 0], offx[a], dims[0], periodic[0])
            if nx < 0:
                continue
            for b in range(len(offy)):
                ny = _cell_index(qcell[q, 1], offy[b], dims[1], periodic[1])
                if ny >= 0:
                    cap += count[nx * dims[1] + ny]
    out_i = np.empty(cap, np.int64)
    out_j = np.empty(cap, np.int64)
    out_d = np.empty((cap, 2))
    out_r = np.empty(cap)
    m = 0
    for q in range(nq):
        xq, yq = qx[q, 0], qx[q, 1]
        for a in range(len(offx)):
            nx = _cell_index(qcell[q, 0], offx[a], dims[0], periodic[0])
            if nx < 0:
                continue
            for b in range(len(offy)):
                ny = _cell_index(qcell[q, 1], offy[b], dims[1], periodic[1])
                if ny < 0:
                    continue
                c = nx * dims[1] + ny
                for k in range(start[c], start[c] + count[c]):
                    j = order[k]
                    if exclude_self and j == q:
                        continue
                    dx = _min_image(xq - px[j, 0], L[0], periodic[0])
                    dy = _min_image(yq - px[j, 1], L[1], periodic[1])
                    r2 = dx * dx + dy * dy
                    if r2 < cutoff2:
                        out_i[m] = q
                        out_j[m] = j
                        out_d[m, 0] = dx
                        out_d[m, 1] = dy
                        out_r[m] = math.sqrt(r2)
                        m += 1
    return out_i[:m].copy(), out_j[:m].copy(), out_d[:m].copy(), out_r[:m].copy()


@njit(cache=True)
def ghost_sums(pi, pj, d, w, is_ghost, p, rho, u, n):
    """Shepard sums over fluid neighbours of every ghost.

    Returns ``sum W``, ``sum p W``, ``sum u W`` and ``sum rho_j (x_i - x_j) W``.
    """
    den = np.zeros(n)
    pnum = np.zeros(n)
    unum = np.zeros((n, 2))
    hyd = np.zeros((n, 2))
    for k in range(len(pi)):
        i, j = pi[k], pj[k]
        if not is_ghost[i] or is_ghost[j]:
            continue
        wk = w[k]
        den[i] += wk
        pnum[i] += p[j] * wk
        unum[i, 0] += u[j, 0] * wk
        unum[i, 1] += u[j, 1] * wk
        hyd[i, 0] += rho[j] * d[k, 0] * wk
        hyd[i, 1] += rho[j] * d[k, 1] * wk
    return den, pnum, unum, hyd


@njit(cache=True)
def shift_sums(pi, pj, d, w, fw, V, is_ghost, normal, chi_over_wdx, xi, n):
    """Unscaled shifting sum ``sum (1 + chi W / W(dx))^xi grad W V_j`` and the
    ``W``-weighted ghost-normal sum seen by each fluid particle."""
    raw = np.zeros((n, 2))
    nwall = np.zeros((n, 2))
    for k in range(len(pi)):
        i, j = pi[k], pj[k]
        base = 1.0 + chi_over_wdx * w[k]
        if xi == 4.0:
            base *= base
            c = base * base
        else:
            c = base**xi
        c *= fw[k] * V[j]
        raw[i, 0] += c * d[k, 0]
        raw[i, 1] += c * d[k, 1]
        if is_ghost[j] and not is_ghost[i]:
            nwall[i, 0] += w[k] * normal[j, 0]
            nwall[i, 1] += w[k] * normal[j, 1]
    return raw, nwall


@njit(cache=True)
def renorm_sums(pi, pj, d, fw, V, rho, n):
    """``A_i = sum (x_j - x_i) (x) grad W V_j`` and ``sum (rho_j - rho_i) grad W V_j``."""
    A = np.zeros((n, 2, 2))
    g = np.zeros((n, 2))
    for k in range(len(pi)):
        i, j = pi[k], pj[k]
        c = fw[k] * V[j]
        gx, gy = c * d[k, 0], c * d[k, 1]
        A[i, 0, 0] -= d[k, 0] * gx
        A[i, 0, 1] -= d[k, 0] * gy
        A[i, 1, 0] -= d[k, 1] * gx
        A[i, 1, 1] -= d[k, 1] * gy
        drho = rho[j] - rho[i]
        g[i, 0] += drho * gx
        g[i, 1] += drho * gy
    return A, g


@njit(cache=True)
def rate_sums(pi, pj, d, r2, fw, V, rho, p, u, uc, s, grad_rho, n):
    """Per-particle pair sums entering the continuity and momentum equations.

    Columns of the returned ``(n, 12)`` array:

    0  sum ((uc+s)_j - (uc+s)_i) . gW V      (velocity divergence, ``uc``: continuity velocity)
    1  sum (rho_j s_j + rho_i s_i) . gW V    (shifting flux)
    2  sum bracket (x_ji . gW) / r^2 V       (density diffusion, halved)
    3-4  sum (p_i + p_j) gW V
    5-6  sum pi_ij gW V with pi_ij = (u_j - u_i) . x_ji / r^2
    7-8  sum (u_j (s_j . gW) + u_i (s_i . gW)) V
    9  sum (s_j - s_i) . gW V
    10 sum (rho_j u_j + rho_i u_i) . gW V
    11 sum (u_j - u_i) . gW V
    and a second ``(n, 2)`` array ``sum (u_j (u_j . gW) + u_i (u_i . gW)) V``.
    """
    out = np.zeros((n, 12))
    adv = np.zeros((n, 2))
    for k in range(len(pi)):
        i, j = pi[k], pj[k]
        Vj = V[j]
        gx, gy = fw[k] * d[k, 0], fw[k] * d[k, 1]
        xjx, xjy = -d[k, 0], -d[k, 1]
        uix, uiy, ujx, ujy = u[i, 0], u[i, 1], u[j, 0], u[j, 1]
        six, siy, sjx, sjy = s[i, 0], s[i, 1], s[j, 0], s[j, 1]
        out[i, 0] += ((uc[j, 0] + sjx - uc[i, 0] - six) * gx + (uc[j, 1] + sjy - uc[i, 1] - siy) * gy) * Vj
        out[i, 1] += ((rho[j] * sjx + rho[i] * six) * gx + (rho[j] * sjy + rho[i] * siy) * gy) * Vj
        inv_r2 = 1.0 / r2[k] if r2[k] > 0.0 else 0.0
        bracket = (rho[j] - rho[i]) - 0.5 * ((grad_rho[j, 0] + grad_rho[i, 0]) * xjx
                                            + (grad_rho[j, 1] + grad_rho[i, 1]) * xjy)
        out[i, 2] += bracket * (xjx * gx + xjy * gy) * inv_r2 * Vj
        pp = (p[i] + p[j]) * Vj
        out[i, 3] += pp * gx
        out[i, 4] += pp * gy
        pij = ((ujx - uix) * xjx + (ujy - uiy) * xjy) * inv_r2 * Vj
        out[i, 5] += pij * gx
        out[i, 6] += pij * gy
        sj = sjx * gx + sjy * gy
        si = six * gx + siy * gy
        out[i, 7] += (ujx * sj + uix * si) * Vj
        out[i, 8] += (ujy * sj + uiy * si) * Vj
        out[i, 9] += (sj - si) * Vj
        out[i, 10] += ((rho[j] * ujx + rho[i] * uix) * gx + (rho[j] * ujy + rho[i] * uiy) * gy) * Vj
        out[i, 11] += ((ujx - uix) * gx + (ujy - uiy) * gy) * Vj
        uj = ujx * gx + ujy * gy
        ui = uix * gx + uiy * gy
        adv[i, 0] += (ujx * uj + uix * ui) * Vj
        adv[i, 1] += (ujy * uj + uiy * ui) * Vj
    return out, adv
