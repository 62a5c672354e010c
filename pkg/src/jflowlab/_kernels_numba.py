"""Numba-compiled pointwise field kernels (hot path).

Same contracts as _kernels_numpy; see that module for the packed layout.
Loops are serial on purpose: reduction order stays fixed, so runs are
bit-reproducible for a given configuration.
"""

import math

import numpy as np
from numba import njit

_TWO_PI_THIRDS = 2.0 * math.pi / 3.0


@njit(cache=True)
def speed_fields_n2(gp, tp, c, beta):
    P = gp.shape[1]
    speed = np.empty(P)
    mineig = np.empty(P)
    det = np.empty(P)
    for i in range(P):
        g11 = gp[0, i]
        g12 = gp[1, i]
        g22 = gp[2, i]
        d = g11 * g22 - g12 * g12
        cross = g22 * tp[0, i] - 2.0 * g12 * tp[1, i] + g11 * tp[2, i]
        speed[i] = c - (cross + beta) / d
        half = 0.5 * (g11 + g22)
        rad = math.sqrt((0.5 * (g11 - g22)) ** 2 + g12 * g12)
        mineig[i] = half - rad
        det[i] = d
    return speed, mineig, det


@njit(cache=True, inline="always")
def _eig3(a, b, c, d, e, f):
    q = (a + d + f) / 3.0
    da = a - q
    dd = d - q
    df = f - q
    p2 = da * da + dd * dd + df * df + 2.0 * (b * b + c * c + e * e)
    p = math.sqrt(p2 / 6.0)
    if p <= 1e-300:
        return q, q
    b11 = da / p
    b22 = dd / p
    b33 = df / p
    b12 = b / p
    b13 = c / p
    b23 = e / p
    detb = (b11 * (b22 * b33 - b23 * b23)
            + b12 * (b23 * b13 - b12 * b33)
            + b13 * (b12 * b23 - b22 * b13))
    r = 0.5 * detb
    if r > 1.0:
        r = 1.0
    elif r < -1.0:
        r = -1.0
    phi = math.acos(r) / 3.0
    emax = q + 2.0 * p * math.cos(phi)
    emin = q + 2.0 * p * math.cos(phi + _TWO_PI_THIRDS)
    return emin, emax


@njit(cache=True, inline="always")
def _adj_det3(a, b, c, d, e, f):
    a11 = d * f - e * e
    a12 = c * e - b * f
    a13 = b * e - c * d
    a22 = a * f - c * c
    a23 = b * c - a * e
    a33 = a * d - b * b
    det = a * a11 + b * a12 + c * a13
    return a11, a12, a13, a22, a23, a33, det


@njit(cache=True)
def speed_fields_n3(gp, tp, c, beta):
    P = gp.shape[1]
    speed = np.empty(P)
    mineig = np.empty(P)
    det = np.empty(P)
    for i in range(P):
        a = gp[0, i]
        b = gp[1, i]
        cc = gp[2, i]
        d = gp[3, i]
        e = gp[4, i]
        f = gp[5, i]
        a11, a12, a13, a22, a23, a33, dt = _adj_det3(a, b, cc, d, e, f)
        cross = (a11 * tp[0, i] + a22 * tp[3, i] + a33 * tp[5, i]
                 + 2.0 * (a12 * tp[1, i] + a13 * tp[2, i] + a23 * tp[4, i]))
        speed[i] = c - (cross + beta) / dt
        emin, _ = _eig3(a, b, cc, d, e, f)
        mineig[i] = emin
        det[i] = dt
    return speed, mineig, det


@njit(cache=True)
def eig_bounds_n2(sp):
    P = sp.shape[1]
    emin = np.empty(P)
    emax = np.empty(P)
    for i in range(P):
        s11 = sp[0, i]
        s12 = sp[1, i]
        s22 = sp[2, i]
        half = 0.5 * (s11 + s22)
        rad = math.sqrt((0.5 * (s11 - s22)) ** 2 + s12 * s12)
        emin[i] = half - rad
        emax[i] = half + rad
    return emin, emax


@njit(cache=True)
def eig_bounds_n3(sp):
    P = sp.shape[1]
    emin = np.empty(P)
    emax = np.empty(P)
    for i in range(P):
        lo, hi = _eig3(sp[0, i], sp[1, i], sp[2, i], sp[3, i], sp[4, i], sp[5, i])
        emin[i] = lo
        emax[i] = hi
    return emin, emax


@njit(cache=True)
def wedge_fields_n2(gp, tp):
    P = gp.shape[1]
    traceq = np.empty(P)
    volr = np.empty(P)
    det = np.empty(P)
    for i in range(P):
        g11 = gp[0, i]
        g12 = gp[1, i]
        g22 = gp[2, i]
        d = g11 * g22 - g12 * g12
        cross = g22 * tp[0, i] - 2.0 * g12 * tp[1, i] + g11 * tp[2, i]
        traceq[i] = cross / d
        volr[i] = 1.0 / d
        det[i] = d
    return traceq, volr, det


@njit(cache=True)
def wedge_fields_n3(gp, tp):
    P = gp.shape[1]
    traceq = np.empty(P)
    volr = np.empty(P)
    det = np.empty(P)
    for i in range(P):
        a11, a12, a13, a22, a23, a33, dt = _adj_det3(
            gp[0, i], gp[1, i], gp[2, i], gp[3, i], gp[4, i], gp[5, i])
        cross = (a11 * tp[0, i] + a22 * tp[3, i] + a33 * tp[5, i]
                 + 2.0 * (a12 * tp[1, i] + a13 * tp[2, i] + a23 * tp[4, i]))
        traceq[i] = cross / dt
        volr[i] = 1.0 / dt
        det[i] = dt
    return traceq, volr, det


@njit(cache=True)
def gen_eig_stats_n2(gp, tp):
    P = gp.shape[1]
    trsum = np.empty(P)
    mu_min = np.empty(P)
    for i in range(P):
        g11 = gp[0, i]
        g12 = gp[1, i]
        g22 = gp[2, i]
        t11 = tp[0, i]
        t12 = tp[1, i]
        t22 = tp[2, i]
        d = g11 * g22 - g12 * g12
        cross = g22 * t11 - 2.0 * g12 * t12 + g11 * t22
        dett = t11 * t22 - t12 * t12
        disc = cross * cross - 4.0 * d * dett
        if disc < 0.0:
            disc = 0.0
        trsum[i] = cross / d
        mu_min[i] = (cross - math.sqrt(disc)) / (2.0 * d)
    return trsum, mu_min


@njit(cache=True)
def gen_eig_stats_n3(gp, tp):
    P = gp.shape[1]
    trsum = np.empty(P)
    mu_min = np.empty(P)
    for i in range(P):
        a = gp[0, i]
        b = gp[1, i]
        c = gp[2, i]
        d = gp[3, i]
        e = gp[4, i]
        f = gp[5, i]
        a11, a12, a13, a22, a23, a33, dt = _adj_det3(a, b, c, d, e, f)
        cross = (a11 * tp[0, i] + a22 * tp[3, i] + a33 * tp[5, i]
                 + 2.0 * (a12 * tp[1, i] + a13 * tp[2, i] + a23 * tp[4, i]))
        trsum[i] = cross / dt
        # Cholesky of G, then whiten T and take the smallest eigenvalue.
        l11 = math.sqrt(a)
        l21 = b / l11
        l31 = c / l11
        l22 = math.sqrt(d - l21 * l21)
        l32 = (e - l31 * l21) / l22
        l33 = math.sqrt(f - l31 * l31 - l32 * l32)
        # A = L^-1 T  (forward substitution on each column of T)
        t = ((tp[0, i], tp[1, i], tp[2, i]),
             (tp[1, i], tp[3, i], tp[4, i]),
             (tp[2, i], tp[4, i], tp[5, i]))
        a0 = (t[0][0] / l11, t[0][1] / l11, t[0][2] / l11)
        a1 = ((t[1][0] - l21 * a0[0]) / l22,
              (t[1][1] - l21 * a0[1]) / l22,
              (t[1][2] - l21 * a0[2]) / l22)
        a2 = ((t[2][0] - l31 * a0[0] - l32 * a1[0]) / l33,
              (t[2][1] - l31 * a0[1] - l32 * a1[1]) / l33,
              (t[2][2] - l31 * a0[2] - l32 * a1[2]) / l33)
        # W = A L^-T = (L^-1 A^T)^T; W symmetric, so compute rows the same way.
        w00 = a0[0] / l11
        w01 = (a0[1] - l21 * w00) / l22
        w02 = (a0[2] - l31 * w00 - l32 * w01) / l33
        w11 = (a1[1] - l21 * w01) / l22
        w12 = (a1[2] - l31 * w01 - l32 * w11) / l33
        w22 = (a2[2] - l31 * w02 - l32 * w12) / l33
        emin, _ = _eig3(w00, w01, w02, w11, w12, w22)
        mu_min[i] = emin
    return trsum, mu_min


@njit(cache=True)
def eta_packed_n2(gp, tp, w):
    P = gp.shape[1]
    out = np.empty((3, P))
    for i in range(P):
        g11 = gp[0, i]
        g12 = gp[1, i]
        g22 = gp[2, i]
        t11 = tp[0, i]
        t12 = tp[1, i]
        t22 = tp[2, i]
        d = g11 * g22 - g12 * g12
        i11 = g22 / d
        i12 = -g12 / d
        i22 = g11 / d
        m11 = i11 * t11 + i12 * t12
        m12 = i11 * t12 + i12 * t22
        m21 = i12 * t11 + i22 * t12
        m22 = i12 * t12 + i22 * t22
        wi = w[i]
        out[0, i] = m11 * i11 + m12 * i12 + wi * i11
        out[1, i] = m11 * i12 + m12 * i22 + wi * i12
        out[2, i] = m21 * i12 + m22 * i22 + wi * i22
    return out


@njit(cache=True)
def eta_packed_n3(gp, tp, w):
    P = gp.shape[1]
    out = np.empty((6, P))
    inv = np.empty((3, 3))
    t = np.empty((3, 3))
    m = np.empty((3, 3))
    for i in range(P):
        a11, a12, a13, a22, a23, a33, dt = _adj_det3(
            gp[0, i], gp[1, i], gp[2, i], gp[3, i], gp[4, i], gp[5, i])
        inv[0, 0] = a11 / dt
        inv[0, 1] = a12 / dt
        inv[0, 2] = a13 / dt
        inv[1, 0] = a12 / dt
        inv[1, 1] = a22 / dt
        inv[1, 2] = a23 / dt
        inv[2, 0] = a13 / dt
        inv[2, 1] = a23 / dt
        inv[2, 2] = a33 / dt
        t[0, 0] = tp[0, i]
        t[0, 1] = tp[1, i]
        t[0, 2] = tp[2, i]
        t[1, 0] = tp[1, i]
        t[1, 1] = tp[3, i]
        t[1, 2] = tp[4, i]
        t[2, 0] = tp[2, i]
        t[2, 1] = tp[4, i]
        t[2, 2] = tp[5, i]
        for r in range(3):
            for s in range(3):
                acc = 0.0
                for k in range(3):
                    acc += inv[r, k] * t[k, s]
                m[r, s] = acc
        wi = w[i]
        comp = 0
        for r in range(3):
            for s in range(r, 3):
                acc = 0.0
                for k in range(3):
                    acc += m[r, k] * inv[k, s]
                out[comp, i] = acc + wi * inv[r, s]
                comp += 1
    return out


@njit(cache=True)
def contract_sym_n2(ep, sp):
    P = ep.shape[1]
    out = np.empty(P)
    for i in range(P):
        out[i] = ep[0, i] * sp[0, i] + 2.0 * ep[1, i] * sp[1, i] + ep[2, i] * sp[2, i]
    return out


@njit(cache=True)
def contract_sym_n3(ep, sp):
    P = ep.shape[1]
    out = np.empty(P)
    for i in range(P):
        out[i] = (ep[0, i] * sp[0, i] + ep[3, i] * sp[3, i] + ep[5, i] * sp[5, i]
                  + 2.0 * (ep[1, i] * sp[1, i] + ep[2, i] * sp[2, i]
                           + ep[4, i] * sp[4, i]))
    return out
