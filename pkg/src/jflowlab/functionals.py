"""Energy functionals on potentials, by exact pointwise mixed determinants.

Wedge products of reduced forms become mixed-determinant polynomials of
the matrix fields: a product of n reduced (1,1)-forms has volume density
n! * D(A_1, ..., A_n) with D the normalized mixed determinant
(D(A, ..., A) = det A), so for n=2 the densities are

    w^2/2! -> 1,   w ^ w_phi /2! -> tr G / 2,   w_phi^2/2! -> det G,

and similarly with the twist form replacing one slot. The convention is
pinned by the path-independence oracles in the test suite.
"""

from dataclasses import dataclass

import numpy as np

from .errors import PositivityError, ValidationError
from .geometry import PD_TOL, PSD_TOL, omega_phi_packed


@dataclass(frozen=True)
class FunctionalReport:
    """Snapshot of every tracked functional at one potential.

    theta_bar is the class constant n [theta].[w]^(n-1) / [w]^n. On the
    flat torus the reference metric is Ricci-flat, so the pluripotential
    part of the K-energy vanishes identically and the full K-energy
    equals the entropy term; it is therefore not stored separately.
    """

    I: float
    J: float
    J_twisted: float
    entropy: float
    theta_bar: float


def _tr(sp, n):
    if n == 2:
        return sp[0] + sp[2]
    return sp[0] + sp[3] + sp[5]


def _det(sp, n):
    if n == 2:
        return sp[0] * sp[2] - sp[1] * sp[1]
    a, b, c, d, e, f = sp
    return a * (d * f - e * e) + b * (c * e - b * f) + c * (b * e - c * d)


def _sigma2(sp):
    a, b, c, d, e, f = sp
    return (a * d - b * b) + (a * f - c * c) + (d * f - e * e)


def _trprod(ap, bp, n):
    if n == 2:
        return ap[0] * bp[0] + 2.0 * ap[1] * bp[1] + ap[2] * bp[2]
    return (ap[0] * bp[0] + ap[3] * bp[3] + ap[5] * bp[5]
            + 2.0 * (ap[1] * bp[1] + ap[2] * bp[2] + ap[4] * bp[4]))


def _adj_cross(gp, tp, n):
    """tr(adj(G) T) = n * D(G^(n-1), T)."""
    if n == 2:
        return gp[2] * tp[0] - 2.0 * gp[1] * tp[1] + gp[0] * tp[2]
    a, b, c, d, e, f = gp
    a11 = d * f - e * e
    a12 = c * e - b * f
    a13 = b * e - c * d
    a22 = a * f - c * c
    a23 = b * c - a * e
    a33 = a * d - b * b
    return (a11 * tp[0] + a22 * tp[3] + a33 * tp[5]
            + 2.0 * (a12 * tp[1] + a13 * tp[2] + a23 * tp[4]))


def volume_mix_fields(gp, n):
    """Densities of w^k ^ w_phi^(n-k) / n! for k = 0..n."""
    if n == 2:
        return [_det(gp, 2), 0.5 * _tr(gp, 2), np.ones_like(gp[0])]
    return [_det(gp, 3), _sigma2(gp) / 3.0, _tr(gp, 3) / 3.0, np.ones_like(gp[0])]


def twist_mix_fields(gp, tp, n):
    """Densities of theta ^ w^k ^ w_phi^(n-1-k) / n! for k = 0..n-1."""
    if n == 2:
        return [0.5 * _adj_cross(gp, tp, 2), 0.5 * _tr(tp, 2)]
    return [_adj_cross(gp, tp, 3) / 3.0,
            (_tr(gp, 3) * _tr(tp, 3) - _trprod(gp, tp, 3)) / 6.0,
            _tr(tp, 3) / 3.0]


def _require_metric(phi, strict):
    from . import kernels

    gp = omega_phi_packed(phi)
    emin, _ = kernels.eig_bounds(gp, phi.grid.n)
    low = float(emin.min())
    floor = PD_TOL if strict else PSD_TOL
    if low < floor:
        idx = int(np.argmin(emin))
        raise PositivityError(
            f"deformed metric fails positivity (min eig {low:.3e})",
            min_eig=low, location=np.unravel_index(idx, phi.grid.shape))
    return gp


def aubin_I_from_packed(phi_values, gp, n):
    mix = volume_mix_fields(gp, n)
    return float(sum((phi_values * m).mean() for m in mix) / (n + 1))


def aubin_I(phi):
    """I(phi) = (1/(n+1)!) sum_k int phi w^k ^ w_phi^(n-k); I(0) = 0."""
    gp = _require_metric(phi, strict=False)
    return aubin_I_from_packed(phi.values, gp, phi.grid.n)


def aubin_I_classical(phi):
    """Classical comparability functional int phi (w^n - w_phi^n) / n!.

    Distinct from aubin_I: this one is shift-invariant and non-negative
    on w-psh potentials and enters the sandwich J/n <= I - J <= n J,
    while aubin_I is the primitive of the volume pairing that the flow
    conserves.
    """
    gp = _require_metric(phi, strict=False)
    det = _det(gp, phi.grid.n)
    return float((phi.values * (1.0 - det)).mean())


def aubin_J(phi):
    """J(phi) = int phi w^n / n! - I(phi); zero on constants, >= 0 on w-psh."""
    gp = _require_metric(phi, strict=False)
    n = phi.grid.n
    return float(phi.values.mean()) - aubin_I_from_packed(phi.values, gp, n)


def twisted_J_from_packed(phi_values, gp, tp, theta_bar, beta, n):
    mix = twist_mix_fields(gp, tp, n)
    base = float(sum((phi_values * m).mean() for m in mix))
    I = aubin_I_from_packed(phi_values, gp, n)
    J = float(phi_values.mean()) - I
    return base - theta_bar * I + beta * J


def twisted_J(phi, theta, beta):
    """J^theta(phi) + beta J(phi); invariant under phi -> phi + const."""
    gp = _require_metric(phi, strict=False)
    tp = theta.realize().packed()
    return twisted_J_from_packed(phi.values, gp, tp, theta.class_trace(),
                                 float(beta), phi.grid.n)


def mabuchi_entropy(phi):
    """int log(w_phi^n / w^n) w_phi^n / n!; zero at phi = 0, >= 0 at fixed volume."""
    gp = _require_metric(phi, strict=True)
    det = _det(gp, phi.grid.n)
    return float((np.log(det) * det).mean())


def evaluate(phi, theta, beta):
    """All functionals at once (shared metric work)."""
    gp = _require_metric(phi, strict=True)
    n = phi.grid.n
    tp = theta.realize().packed()
    theta_bar = theta.class_trace()
    I = aubin_I_from_packed(phi.values, gp, n)
    J = float(phi.values.mean()) - I
    mix = twist_mix_fields(gp, tp, n)
    Jt = float(sum((phi.values * m).mean() for m in mix)) - theta_bar * I + beta * J
    det = _det(gp, n)
    ent = float((np.log(det) * det).mean())
    return FunctionalReport(I, J, Jt, ent, theta_bar)


def report_from_packed(phi_values, gp, tp, theta_bar, beta, n):
    """Fast path for the flow recorder: packed fields already in hand.

    Weak trajectories may touch det G = 0 on the degeneracy locus; the
    entropy integrand x log x extends by 0 there.
    """
    I = aubin_I_from_packed(phi_values, gp, n)
    J = float(phi_values.mean()) - I
    mix = twist_mix_fields(gp, tp, n)
    Jt = float(sum((phi_values * m).mean() for m in mix)) - theta_bar * I + beta * J
    det = _det(gp, n)
    ent_integrand = np.where(det > 0.0, np.log(np.maximum(det, 1e-300)) * det, 0.0)
    ent = float(ent_integrand.mean())
    return FunctionalReport(I, J, Jt, ent, theta_bar)


def _gauss_nodes(nodes):
    x, w = np.polynomial.legendre.leggauss(nodes)
    return 0.5 * (x + 1.0), 0.5 * w


def _packed_at(hp, t, n):
    gp = t * hp
    diag = (0, 2) if n == 2 else (0, 3, 5)
    for comp in diag:
        gp[comp] += 1.0
    return gp


def path_integral_I(phi, nodes=64):
    """I along the linear path t -> t*phi (independent route, for checking)."""
    from .geometry import hessian_packed

    n = phi.grid.n
    hp = hessian_packed(phi)
    ts, ws = _gauss_nodes(nodes)
    total = 0.0
    for t, w in zip(ts, ws):
        total += w * float((phi.values * _det(_packed_at(hp, t, n), n)).mean())
    return total


def path_integral_J(phi, nodes=64):
    """J by its path definition int_0^1 int phi (w^n - w_phi_t^n)/n! dt."""
    from .geometry import hessian_packed

    n = phi.grid.n
    hp = hessian_packed(phi)
    ts, ws = _gauss_nodes(nodes)
    total = 0.0
    for t, w in zip(ts, ws):
        det = _det(_packed_at(hp, t, n), n)
        total += w * float((phi.values * (1.0 - det)).mean())
    return total


def path_integral_twisted(phi, theta, beta, nodes=64):
    """J^theta_beta by its path definition along the linear path."""
    from .geometry import hessian_packed

    n = phi.grid.n
    hp = hessian_packed(phi)
    tp = theta.realize().packed()
    theta_bar = theta.class_trace()
    ts, ws = _gauss_nodes(nodes)
    total = 0.0
    for t, w in zip(ts, ws):
        gp = _packed_at(hp, t, n)
        det = _det(gp, n)
        integrand = phi.values * (_adj_cross(gp, tp, n) - theta_bar * det
                                  + beta * (1.0 - det))
        total += w * float(integrand.mean())
    return total


def gradient_pairing(phi, v, theta, beta, c_beta):
    """-int v (flow speed) w_phi^n / n!: the first variation of J^theta_beta."""
    from . import kernels

    n = phi.grid.n
    gp = omega_phi_packed(phi)
    tp = theta.realize().packed()
    speed, _, det = kernels.speed_fields(gp, tp, c_beta, beta, n)
    return -float((v.values * speed * det).mean())


@dataclass(frozen=True)
class MonotonicityReport:
    monotone_ok: bool
    max_increase: float
    identity_ok: bool
    identity_max_rel_err: float
    identity_points: int
    step_tol: float
    rel_tol: float


def flow_monotonicity_check(series, setup=None, *, step_tol=1e-10,
                            rel_tol=1e-3, deriv_floor=1e-8):
    """Decay of the twisted functional along a recorded trajectory.

    Checks (a) that the recorded J^theta_beta values never increase by
    more than step_tol, and (b) that the centered time-difference of
    J^theta_beta matches minus the recorded dissipation integral
    int (d_t phi)^2 w_phi^n / n! to rel_tol relative, wherever the
    derivative magnitude exceeds deriv_floor.
    """
    t = np.asarray(series.column("t"))
    J = np.asarray(series.column("J_twisted"))
    dissip = np.asarray(series.column("dissipation"))
    if t.size < 2:
        return MonotonicityReport(True, 0.0, True, 0.0, 0, step_tol, rel_tol)
    increase = float(np.max(np.diff(J))) if t.size > 1 else 0.0
    monotone_ok = increase <= step_tol
    worst = 0.0
    count = 0
    for i in range(1, t.size - 1):
        dt2 = t[i + 1] - t[i - 1]
        if dt2 <= 0:
            continue
        dJdt = (J[i + 1] - J[i - 1]) / dt2
        if abs(dJdt) <= deriv_floor:
            continue
        count += 1
        rel = abs(dJdt + dissip[i]) / abs(dJdt)
        worst = max(worst, rel)
    identity_ok = worst <= rel_tol
    return MonotonicityReport(monotone_ok, increase, identity_ok, worst,
                              count, step_tol, rel_tol)
