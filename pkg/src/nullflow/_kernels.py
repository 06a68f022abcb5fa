"""Compiled right-hand side of the graph flow.

Mirrors :func:`nullflow.graph.expansion_of` composed with
:func:`nullflow.background.sample_at` (cubic) node for node; the test-suite
checks the two paths against each other to roundoff.
"""

from __future__ import annotations

import math

import numba
import numpy as np

SNAP = 1e-10


@numba.njit(cache=True)
def _cubic_weights(t):
    return (
        -t * (t - 1.0) * (t - 2.0) / 6.0,
        (t + 1.0) * (t - 1.0) * (t - 2.0) / 2.0,
        -(t + 1.0) * t * (t - 2.0) / 2.0,
        (t + 1.0) * t * (t - 1.0) / 6.0,
    )


@numba.njit(cache=True)
def half_expansion(table, cols, lam0, dlam, omega, sin_t, sin_f, dth, dph, out, grad_out, spacing):
    """Fill ``out`` with ``trchi_omega / 2``; return the number of nodes out of range.

    ``grad_out`` receives ``|grad omega|^2`` and ``spacing[0]`` the smallest
    squared cell edge measured with the graph metric.

    ``cols`` indexes the table components as
    ``(g_tt, g_tp, g_pp, trchib, kappa, trchi, tau_t, tau_p)``.
    """
    nl = table.shape[0]
    nt, nphi = omega.shape
    lam_max = lam0 + (nl - 1) * dlam
    vals = np.empty((8, nt, nphi))
    bad = 0
    for i in range(nt):
        for j in range(nphi):
            w = omega[i, j]
            if not (w >= lam0 - 1e-12 and w <= lam_max + 1e-12):
                bad += 1
                continue
            u = (w - lam0) / dlam
            near = math.floor(u + 0.5)
            if abs(u - near) < SNAP:
                u = near
            k = int(math.floor(u))
            if k < 1:
                k = 1
            if k > nl - 3:
                k = nl - 3
            t = u - k
            w0, w1, w2, w3 = _cubic_weights(t)
            node = i * nphi + j
            for c in range(8):
                cc = cols[c]
                vals[c, i, j] = (
                    w0 * table[k - 1, node, cc]
                    + w1 * table[k, node, cc]
                    + w2 * table[k + 1, node, cc]
                    + w3 * table[k + 2, node, cc]
                )
    if bad:
        return bad

    inv_tt = np.empty((nt, nphi))
    inv_tp = np.empty((nt, nphi))
    inv_pp = np.empty((nt, nphi))
    sq = np.empty((nt, nphi))
    f_t = np.empty((nt, nphi))
    f_p = np.zeros((nt, nphi))
    shift = nphi // 2
    h2 = 1e300
    for i in range(nt):
        for j in range(nphi):
            gtt = vals[0, i, j]
            gtp = vals[1, i, j]
            gpp = vals[2, i, j]
            det = gtt * gpp - gtp * gtp
            inv_tt[i, j] = gpp / det
            inv_tp[i, j] = -gtp / det
            inv_pp[i, j] = gtt / det
            sq[i, j] = math.sqrt(det)
            e2 = gtt * dth * dth
            if e2 < h2:
                h2 = e2
            if nphi > 1:
                e2 = gpp * dph * dph
                if e2 < h2:
                    h2 = e2
            jj = (j + shift) % nphi
            up = omega[i - 1, j] if i > 0 else omega[0, jj]
            dn = omega[i + 1, j] if i < nt - 1 else omega[nt - 1, jj]
            f_t[i, j] = (dn - up) / (2.0 * dth)
            if nphi > 1:
                f_p[i, j] = (omega[i, (j + 1) % nphi] - omega[i, (j - 1) % nphi]) / (2.0 * dph)

    # theta fluxes on interior faces
    flux_t = np.zeros((nt + 1, nphi))
    for i in range(nt - 1):
        for j in range(nphi):
            a0 = sq[i, j] / sin_t[i] * inv_tt[i, j]
            a1 = sq[i + 1, j] / sin_t[i + 1] * inv_tt[i + 1, j]
            fl = sin_f[i] * 0.5 * (a0 + a1) * (omega[i + 1, j] - omega[i, j]) / dth
            if nphi > 1:
                q0 = sq[i, j] * inv_tp[i, j]
                q1 = sq[i + 1, j] * inv_tp[i + 1, j]
                fl += 0.5 * (q0 + q1) * 0.5 * (f_p[i, j] + f_p[i + 1, j])
            flux_t[i + 1, j] = fl
    flux_p = np.zeros((nt, nphi))
    if nphi > 1:
        for i in range(nt):
            for j in range(nphi):
                jn = (j + 1) % nphi
                r0 = sq[i, j] * inv_pp[i, j]
                r1 = sq[i, jn] * inv_pp[i, jn]
                q0 = sq[i, j] * inv_tp[i, j]
                q1 = sq[i, jn] * inv_tp[i, jn]
                flux_p[i, j] = 0.5 * (r0 + r1) * (omega[i, jn] - omega[i, j]) / dph + 0.5 * (q0 + q1) * 0.5 * (
                    f_t[i, j] + f_t[i, jn]
                )

    for i in range(nt):
        for j in range(nphi):
            div = (flux_t[i + 1, j] - flux_t[i, j]) / dth
            if nphi > 1:
                div += (flux_p[i, j] - flux_p[i, (j - 1) % nphi]) / dph
            lap = div / sq[i, j]
            ft = f_t[i, j]
            fp = f_p[i, j]
            grad_sq = inv_tt[i, j] * ft * ft + 2.0 * inv_tp[i, j] * ft * fp + inv_pp[i, j] * fp * fp
            if grad_sq < 0.0:
                grad_sq = 0.0
            grad_out[i, j] = grad_sq
            tau_t = vals[6, i, j]
            tau_p = vals[7, i, j]
            tau_grad = (
                inv_tt[i, j] * tau_t * ft + inv_tp[i, j] * (tau_t * fp + tau_p * ft) + inv_pp[i, j] * tau_p * fp
            )
            out[i, j] = -lap - 2.0 * tau_grad + 0.5 * vals[5, i, j] + (0.5 * vals[3, i, j] + vals[4, i, j]) * grad_sq
    spacing[0] = h2
    return 0
