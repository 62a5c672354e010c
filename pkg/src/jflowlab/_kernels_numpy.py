"""Pure-numpy implementations of the pointwise field kernels.

Fallback backend, selected with JFLOWLAB_BACKEND=numpy (or automatically when
numba is unavailable). Symmetric matrix fields arrive in packed layout with
the grid flattened: shape (m, P) where m = n*(n+1)/2 and the components are
row-major upper triangle, so n=2 -> [s11, s12, s22] and
n=3 -> [s11, s12, s13, s22, s23, s33].
"""

import numpy as np

_TWO_PI_THIRDS = 2.0 * np.pi / 3.0


def speed_fields_n2(gp, tp, c, beta):
    """Flow speed c - tr(G^-1 T) - beta/det G, plus min-eig(G) and det G."""
    g11, g12, g22 = gp[0], gp[1], gp[2]
    t11, t12, t22 = tp[0], tp[1], tp[2]
    det = g11 * g22 - g12 * g12
    cross = g22 * t11 - 2.0 * g12 * t12 + g11 * t22
    speed = c - (cross + beta) / det
    half = 0.5 * (g11 + g22)
    rad = np.sqrt((0.5 * (g11 - g22)) ** 2 + g12 * g12)
    return speed, half - rad, det


def _adj3(sp):
    a, b, c, d, e, f = sp[0], sp[1], sp[2], sp[3], sp[4], sp[5]
    a11 = d * f - e * e
    a12 = c * e - b * f
    a13 = b * e - c * d
    a22 = a * f - c * c
    a23 = b * c - a * e
    a33 = a * d - b * b
    return a11, a12, a13, a22, a23, a33


def _det3(sp, adj):
    a, b, c = sp[0], sp[1], sp[2]
    a11, a12, a13 = adj[0], adj[1], adj[2]
    return a * a11 + b * a12 + c * a13


def speed_fields_n3(gp, tp, c, beta):
    adj = _adj3(gp)
    det = _det3(gp, adj)
    cross = (adj[0] * tp[0] + adj[3] * tp[3] + adj[5] * tp[5]
             + 2.0 * (adj[1] * tp[1] + adj[2] * tp[2] + adj[4] * tp[4]))
    speed = c - (cross + beta) / det
    mineig, _ = eig_bounds_n3(gp)
    return speed, mineig, det


def eig_bounds_n2(sp):
    s11, s12, s22 = sp[0], sp[1], sp[2]
    half = 0.5 * (s11 + s22)
    rad = np.sqrt((0.5 * (s11 - s22)) ** 2 + s12 * s12)
    return half - rad, half + rad


def eig_bounds_n3(sp):
    # Closed-form symmetric 3x3 eigenvalue bounds (trigonometric method).
    a, b, c, d, e, f = sp[0], sp[1], sp[2], sp[3], sp[4], sp[5]
    q = (a + d + f) / 3.0
    da, dd, df = a - q, d - q, f - q
    p2 = da * da + dd * dd + df * df + 2.0 * (b * b + c * c + e * e)
    p = np.sqrt(p2 / 6.0)
    safe = p > 1e-300
    ps = np.where(safe, p, 1.0)
    b11, b22, b33 = da / ps, dd / ps, df / ps
    b12, b13, b23 = b / ps, c / ps, e / ps
    detb = (b11 * (b22 * b33 - b23 * b23)
            + b12 * (b23 * b13 - b12 * b33)
            + b13 * (b12 * b23 - b22 * b13))
    r = np.clip(0.5 * detb, -1.0, 1.0)
    phi = np.arccos(r) / 3.0
    emax = q + 2.0 * ps * np.cos(phi)
    emin = q + 2.0 * ps * np.cos(phi + _TWO_PI_THIRDS)
    return np.where(safe, emin, q), np.where(safe, emax, q)


def wedge_fields_n2(gp, tp):
    g11, g12, g22 = gp[0], gp[1], gp[2]
    t11, t12, t22 = tp[0], tp[1], tp[2]
    det = g11 * g22 - g12 * g12
    cross = g22 * t11 - 2.0 * g12 * t12 + g11 * t22
    return cross / det, 1.0 / det, det


def wedge_fields_n3(gp, tp):
    adj = _adj3(gp)
    det = _det3(gp, adj)
    cross = (adj[0] * tp[0] + adj[3] * tp[3] + adj[5] * tp[5]
             + 2.0 * (adj[1] * tp[1] + adj[2] * tp[2] + adj[4] * tp[4]))
    return cross / det, 1.0 / det, det


def gen_eig_stats_n2(gp, tp):
    """Trace sum and minimum of the eigenvalues of T relative to G."""
    g11, g12, g22 = gp[0], gp[1], gp[2]
    t11, t12, t22 = tp[0], tp[1], tp[2]
    det = g11 * g22 - g12 * g12
    cross = g22 * t11 - 2.0 * g12 * t12 + g11 * t22
    dett = t11 * t22 - t12 * t12
    disc = np.maximum(cross * cross - 4.0 * det * dett, 0.0)
    mu_min = (cross - np.sqrt(disc)) / (2.0 * det)
    return cross / det, mu_min


def gen_eig_stats_n3(gp, tp):
    adj = _adj3(gp)
    det = _det3(gp, adj)
    cross = (adj[0] * tp[0] + adj[3] * tp[3] + adj[5] * tp[5]
             + 2.0 * (adj[1] * tp[1] + adj[2] * tp[2] + adj[4] * tp[4]))
    # Whiten with the Cholesky factor of G, then use the 3x3 closed form.
    P = gp.shape[1]
    G = np.empty((P, 3, 3))
    T = np.empty((P, 3, 3))
    idx = ((0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2))
    for comp, (i, j) in enumerate(idx):
        G[:, i, j] = gp[comp]
        G[:, j, i] = gp[comp]
        T[:, i, j] = tp[comp]
        T[:, j, i] = tp[comp]
    L = np.linalg.cholesky(G)
    A = np.linalg.solve(L, T)
    W = np.linalg.solve(L, np.swapaxes(A, -1, -2))
    wp = np.stack([W[:, 0, 0], W[:, 0, 1], W[:, 0, 2],
                   W[:, 1, 1], W[:, 1, 2], W[:, 2, 2]])
    mu_min, _ = eig_bounds_n3(wp)
    return cross / det, mu_min


def eta_packed_n2(gp, tp, w):
    """Linearization coefficients G^-1 T G^-1 + w * G^-1 (w a scalar field)."""
    g11, g12, g22 = gp[0], gp[1], gp[2]
    t11, t12, t22 = tp[0], tp[1], tp[2]
    det = g11 * g22 - g12 * g12
    i11, i12, i22 = g22 / det, -g12 / det, g11 / det
    m11 = i11 * t11 + i12 * t12
    m12 = i11 * t12 + i12 * t22
    m21 = i12 * t11 + i22 * t12
    m22 = i12 * t12 + i22 * t22
    e11 = m11 * i11 + m12 * i12 + w * i11
    e12 = m11 * i12 + m12 * i22 + w * i12
    e22 = m21 * i12 + m22 * i22 + w * i22
    return np.stack([e11, e12, e22])


def eta_packed_n3(gp, tp, w):
    adj = _adj3(gp)
    det = _det3(gp, adj)
    P = gp.shape[1]
    inv = np.empty((P, 3, 3))
    T = np.empty((P, 3, 3))
    idx = ((0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2))
    for comp, (i, j) in enumerate(idx):
        inv[:, i, j] = adj[comp] / det
        inv[:, j, i] = adj[comp] / det
        T[:, i, j] = tp[comp]
        T[:, j, i] = tp[comp]
    eta = inv @ T @ inv + w[:, None, None] * inv
    return np.stack([eta[:, 0, 0], eta[:, 0, 1], eta[:, 0, 2],
                     eta[:, 1, 1], eta[:, 1, 2], eta[:, 2, 2]])


def contract_sym_n2(ep, sp):
    return ep[0] * sp[0] + 2.0 * ep[1] * sp[1] + ep[2] * sp[2]


def contract_sym_n3(ep, sp):
    return (ep[0] * sp[0] + ep[3] * sp[3] + ep[5] * sp[5]
            + 2.0 * (ep[1] * sp[1] + ep[2] * sp[2] + ep[4] * sp[4]))
