"""Exact pointwise algebra of the flow in eigenvalue form.

In a frame where the reference metric is the identity and the deformed
metric is diagonal with eigenvalues lambda, the twist form has diagonal
entries mu and the flow speed is

    c_beta - sum_k mu_k / lambda_k - beta / (lambda_1 ... lambda_n).

All operations here are pure functions on value inputs and safe to call
concurrently.
"""

from dataclasses import dataclass

import numpy as np

from .errors import PositivityError, ValidationError
from .geometry import PD_TOL, PSD_TOL


def _as_tuple(values):
    arr = np.asarray(values, dtype=np.float64).reshape(-1)
    return tuple(float(v) for v in arr)


@dataclass(frozen=True)
class Spectrum:
    """Eigenvalues of the deformed metric relative to the reference.

    All entries must be strictly positive (membership in the positive
    cone); entries are stored non-increasing, ties keeping their original
    order, so comparisons are deterministic.
    """

    lam: tuple

    def __init__(self, lam):
        lam = _as_tuple(lam)
        if any(v <= 0.0 for v in lam):
            raise PositivityError(
                f"spectrum outside the positive cone: {lam}", min_eig=min(lam))
        order = np.argsort([-v for v in lam], kind="stable")
        object.__setattr__(self, "lam", tuple(lam[i] for i in order))

    @property
    def values(self):
        return np.array(self.lam)

    def __len__(self):
        return len(self.lam)


@dataclass(frozen=True)
class ThetaEigen:
    """Diagonal entries of the twist form in the frame diagonalizing the metric."""

    mu: tuple

    def __init__(self, mu):
        mu = _as_tuple(mu)
        if any(v < PSD_TOL for v in mu):
            raise ValidationError(f"negative twist eigenvalue beyond tolerance: {mu}")
        object.__setattr__(self, "mu", mu)

    @property
    def values(self):
        return np.array(self.mu)

    def __len__(self):
        return len(self.mu)


@dataclass(frozen=True)
class ConeCertificate:
    """Positivity margin delta0 in c_beta - sum_{j != k} mu_j >= delta0."""

    delta0: float
    c_beta: float

    def __post_init__(self):
        if not (0.0 < self.delta0 <= self.c_beta):
            raise ValidationError(
                f"need 0 < delta0 <= c_beta, got delta0={self.delta0}, c_beta={self.c_beta}")


def flow_speed(lam, mu, beta, c_beta):
    """Pointwise time-derivative of the potential, exact up to rounding.

    The k-th entries of lam and mu must belong to the same eigenvector
    (as produced together by simultaneous_frame); the value only depends
    on that pairing, not on the ordering.
    """
    lv = lam.values if isinstance(lam, Spectrum) else \
        np.asarray(lam, dtype=np.float64).reshape(-1)
    mv = mu.values if isinstance(mu, ThetaEigen) else \
        np.asarray(mu, dtype=np.float64).reshape(-1)
    if lv.size != mv.size:
        raise ValidationError("lambda and mu must have the same length")
    if lv.min() <= 0.0:
        raise PositivityError(
            f"spectrum outside the positive cone: {tuple(lv)}", min_eig=float(lv.min()))
    if mv.min() < PSD_TOL:
        raise ValidationError(f"negative twist eigenvalue beyond tolerance: {tuple(mv)}")
    return float(c_beta - np.sum(mv / lv) - beta / np.prod(lv))


def cone_margin(mu, c_beta):
    """min over k of c_beta - sum_{j != k} mu_j (invariant under permutation)."""
    mu = mu if isinstance(mu, ThetaEigen) else ThetaEigen(mu)
    mv = mu.values
    return float(c_beta - (mv.sum() - mv.min()))


def simultaneous_frame(G, Theta):
    """Eigenvalues of G and matching diagonal entries of Theta.

    Diagonalizes G in the reference-orthonormal frame; mu_k is the
    quadratic form of Theta on the k-th eigenvector. sum mu_k / lambda_k
    equals tr(G^-1 Theta) and prod lambda_k equals det G, up to solver
    tolerance. With repeated eigenvalues of G the individual mu_k depend
    on the eigenbasis the solver returns (only their lambda-weighted sums
    are basis-independent).
    """
    G = np.asarray(G, dtype=np.float64)
    Theta = np.asarray(Theta, dtype=np.float64)
    if G.ndim != 2 or G.shape[0] != G.shape[1] or G.shape != Theta.shape:
        raise ValidationError("G and Theta must be square matrices of equal size")
    if np.abs(Theta - Theta.T).max() > 1e-10 * max(1.0, np.abs(Theta).max()):
        raise ValidationError("Theta must be symmetric")
    w, V = np.linalg.eigh(0.5 * (G + G.T))
    if w[0] <= PD_TOL:
        raise PositivityError(
            f"G is not positive definite (min eig {w[0]:.3e})", min_eig=float(w[0]))
    w = w[::-1]
    V = V[:, ::-1]
    mu = np.einsum("ji,jk,ki->i", V, Theta, V)
    return Spectrum(w), ThetaEigen(np.maximum(mu, 0.0) if mu.min() > PSD_TOL else mu)


@dataclass(frozen=True)
class KeyC0Report:
    """Outcome of the brute-force bound verification.

    passed is True when no admissible grid node violates the candidate
    bound; otherwise counterexample holds one violating (mu, lambda, tau)
    tuple. vacuous flags an empty admissible set; outside_hypotheses
    flags inputs outside the stated range (delta0 not in (0, 1), or
    delta0 > c), which the scan still accepts.
    """

    passed: bool
    counterexample: tuple
    resolution: int
    lam_max: float
    nodes_scanned: int
    admissible_nodes: int
    vacuous: bool
    outside_hypotheses: bool
    notes: tuple = ()


def default_k_candidate(c, delta0, C0, n):
    """Default bound candidate; loose on purpose, the verifier is the truth."""
    if delta0 <= 0:
        return 2.0 * c
    return max(c + n * C0 * (4.0 * c + 4.0) / delta0 ** 2, 2.0 * c)


def _default_f(beta):
    def f(lams):
        return beta / np.prod(lams, axis=0)
    return f


def key_c0_verify(c, delta0, C0, K_candidate, grid_resolution, *, n=2,
                  beta=0.0, f=None, lam_max=None):
    """Search admissible (mu, lambda, tau) nodes for violations of the bound.

    Hypotheses scanned: 0 <= mu_i <= C0 with c - sum_{j != k} mu_j >= delta0,
    lambda_k >= 1 - delta where delta = delta0 / (4c + 4), and tau >= -delta
    determined by sum_k mu_k / lambda_k + f(lambda) = c + tau. A violation
    is an admissible node with |tau| > K_candidate or some lambda_k above
    K_candidate. The lambda axes are scanned exhaustively; for n <= 2 the
    cone constraint decouples into per-axis caps, so the extreme mu values
    per lambda node cover the whole mu grid (property-tested against the
    full product scan).
    """
    if K_candidate <= 0:
        raise ValidationError(f"K_candidate must be positive, got {K_candidate}")
    if n not in (1, 2):
        raise ValidationError("the fast scan supports n in {1, 2}; use the reference for n=3")
    if C0 <= 0:
        raise ValidationError(f"C0 must be positive, got {C0}")
    R = int(grid_resolution)
    if R < 2:
        raise ValidationError("grid_resolution must be at least 2")
    notes = []
    outside = False
    if not (0.0 < delta0 < 1.0):
        outside = True
        notes.append(f"delta0={delta0} outside the stated range (0, 1)")
    if delta0 > c:
        outside = True
        notes.append(f"delta0={delta0} exceeds c={c}")
    delta = delta0 / (4.0 * c + 4.0)
    K = float(K_candidate)
    if lam_max is None:
        lam_max = max(10.0 * K, 1.0 - delta + 1.0)
    lam_axis = np.linspace(1.0 - delta, lam_max, R)
    ffun = f if f is not None else _default_f(beta)

    cap = C0 if n == 1 else min(C0, c - delta0)
    if cap < 0.0:
        return KeyC0Report(True, None, R, float(lam_max), 0, 0, True, outside,
                           tuple(notes) + ("cone caps exclude every mu",))
    mu_axis = np.linspace(0.0, C0, R)
    hi_idx = int(np.searchsorted(mu_axis, cap + 1e-15, side="right")) - 1
    mu_hi = float(mu_axis[max(hi_idx, 0)])

    if n == 1:
        lams = lam_axis[None, :]
    else:
        l1, l2 = np.meshgrid(lam_axis, lam_axis, indexing="ij")
        lams = np.stack([l1, l2])
    fvals = np.asarray(ffun(lams), dtype=np.float64)
    inv_sum = np.sum(1.0 / lams, axis=0)
    tau_hi = mu_hi * inv_sum + fvals - c
    admissible = tau_hi >= -delta
    admissible_nodes = int(np.count_nonzero(admissible))
    nodes = int(lams[0].size)

    lam_over = np.any(lams > K, axis=0)
    violation = admissible & (lam_over | (tau_hi > K))
    witness = None
    if violation.any():
        flat = int(np.argmax(violation.reshape(-1)))
        idx = np.unravel_index(flat, violation.shape)
        lam_w = tuple(float(lams[a][idx]) for a in range(n))
        witness = ((mu_hi,) * n, lam_w, float(tau_hi[idx]))
    elif K < delta and admissible_nodes:
        # tau < -K can only violate when K < delta; resolve those nodes by a
        # direct scan over the mu grid (pathological candidates only).
        mu_adm = mu_axis[mu_axis <= cap + 1e-15]
        for flat in np.flatnonzero(admissible.reshape(-1)):
            idx = np.unravel_index(int(flat), admissible.shape)
            lam_w = tuple(float(lams[a][idx]) for a in range(n))
            if n == 1:
                taus = mu_adm / lam_w[0] + float(fvals[idx]) - c
                mus = mu_adm[:, None]
            else:
                m1, m2 = np.meshgrid(mu_adm, mu_adm, indexing="ij")
                taus = (m1 / lam_w[0] + m2 / lam_w[1] + float(fvals[idx]) - c).reshape(-1)
                mus = np.stack([m1.reshape(-1), m2.reshape(-1)], axis=1)
            bad = (taus >= -delta) & (taus < -K)
            if bad.any():
                j = int(np.argmax(bad))
                witness = (tuple(float(v) for v in np.atleast_1d(mus[j])),
                           lam_w, float(taus.reshape(-1)[j]))
                break

    if witness is not None:
        return KeyC0Report(False, witness, R, float(lam_max), nodes,
                           admissible_nodes, False, outside, tuple(notes))
    return KeyC0Report(True, None, R, float(lam_max), nodes, admissible_nodes,
                       admissible_nodes == 0, outside, tuple(notes))


def find_passing_k(c, delta0, C0, grid_resolution, *, n=2, beta=0.0,
                   start=None, max_doublings=12):
    """Smallest candidate in a doubling sweep that the verifier accepts."""
    K = float(start) if start is not None else default_k_candidate(c, delta0, C0, n)
    for _ in range(max_doublings + 1):
        report = key_c0_verify(c, delta0, C0, K, grid_resolution, n=n, beta=beta)
        if report.passed:
            return K, report
        K *= 2.0
    raise ValidationError(
        f"no passing bound found up to K={K} for c={c}, delta0={delta0}, C0={C0}")


def _key_c0_scan_reference(c, delta0, C0, K, R, *, n=2, beta=0.0, lam_max=None):
    """Naive full product-grid scan; slow, used as the test oracle."""
    delta = delta0 / (4.0 * c + 4.0)
    if lam_max is None:
        lam_max = max(10.0 * K, 1.0 - delta + 1.0)
    lam_axis = np.linspace(1.0 - delta, lam_max, R)
    mu_axis = np.linspace(0.0, C0, R)
    mu_nodes = np.stack(np.meshgrid(*([mu_axis] * n), indexing="ij"),
                        axis=-1).reshape(-1, n)
    keep = []
    for mu in mu_nodes:
        s = mu.sum()
        if all(c - (s - mu[k]) >= delta0 - 1e-15 for k in range(n)):
            keep.append(mu)
    lam_nodes = np.stack(np.meshgrid(*([lam_axis] * n), indexing="ij"),
                         axis=-1).reshape(-1, n)
    admissible = 0
    for lam in lam_nodes:
        fval = beta / np.prod(lam)
        for mu in keep:
            tau = float(np.sum(mu / lam) + fval - c)
            if tau < -delta:
                continue
            admissible += 1
            if abs(tau) > K or np.any(lam > K):
                return False, (tuple(mu), tuple(lam), tau), admissible
    return True, None, admissible
