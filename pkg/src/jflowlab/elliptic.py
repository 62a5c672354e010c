"""Damped Newton solution of the stationary (twisted J-) equation.

Solves, for a potential u with positive deformed metric,

    psi = tr_{w_u} theta + rho * w^n / w_u^n        (divided form)

via inexact Newton: the linearization is the second-order operator with
coefficient field eta = G^-1 Theta G^-1 + (rho / det G) G^-1 acting on
the reduced Hessian of the update, discretized spectrally, with Krylov
linear solves preconditioned by the constant-coefficient inverse of the
mean-coefficient operator. Backtracking guards positivity and residual
decrease. The specialized case psi = c_beta, rho = beta is the
stationary equation of the flow, which makes this solver the independent
oracle for flow limits.
"""

from dataclasses import dataclass

import numpy as np
import scipy.fft as _fft
from scipy.sparse.linalg import LinearOperator, gmres

from . import kernels
from .errors import (ContinuationRequired, NewtonError, PositivityError,
                     ValidationError)
from .geometry import (PD_TOL, PotentialField, hessian_packed,
                       omega_phi_packed, spectral_ops, subsolution_check,
                       zero_potential)


@dataclass
class EllipticProblem:
    """Data of one elliptic solve.

    psi and rho may be constants or scalar fields; psi must be positive
    everywhere. The solvability prerequisite for the specialized form --
    a positive subsolution margin -- is recorded when a subsolution is
    supplied.
    """

    theta: object
    psi: object
    rho: object
    normalization: str = "mean"
    subsolution: PotentialField = None
    subsolution_margin: float = None

    def __post_init__(self):
        if self.normalization not in ("mean", "sup"):
            raise ValidationError("normalization must be 'mean' or 'sup'")
        grid = self.theta.grid
        self.psi = self._broadcast(grid, self.psi, "psi")
        self.rho = self._broadcast(grid, self.rho, "rho")
        if float(self.psi.min()) <= 0.0:
            raise ValidationError("psi must be positive everywhere")

    @staticmethod
    def _broadcast(grid, value, name):
        arr = np.asarray(value, dtype=np.float64)
        if arr.ndim == 0:
            return np.full(grid.shape, float(arr))
        if arr.shape != grid.shape:
            raise ValidationError(f"{name} must be scalar or match the grid shape")
        return arr.copy()

    @classmethod
    def twisted_j_equation(cls, setup, normalization="mean"):
        problem = cls(setup.theta, setup.c_beta, setup.beta, normalization,
                      subsolution=setup.subsolution)
        candidate = setup.subsolution if setup.subsolution is not None \
            else zero_potential(setup.grid)
        problem.subsolution_margin = subsolution_check(
            candidate, setup.theta, setup.c_beta).margin
        return problem

    @property
    def grid(self):
        return self.theta.grid

    def is_degenerate_without_rho(self):
        rho_zero = float(np.abs(self.rho).max()) == 0.0
        if not rho_zero:
            return False
        if self.theta.degeneracy is not None:
            return True
        emin, _ = self.theta.realize().min_eig()
        return emin <= PD_TOL


def _normalize(values, gauge):
    if gauge == "sup":
        return values - values.max()
    return values - values.mean()


def residual(u, problem):
    """Pointwise residual psi - tr_{w_u} theta - rho / det G (divided form)."""
    grid = problem.grid
    gp = omega_phi_packed(u)
    emin, _ = kernels.eig_bounds(gp, grid.n)
    low = float(emin.min())
    if low <= PD_TOL:
        idx = int(np.argmin(emin))
        raise PositivityError(
            f"metric of u is not positive (min eig {low:.3e})",
            min_eig=low, location=np.unravel_index(idx, grid.shape))
    traceq, _, det = kernels.wedge_fields(gp, problem.theta.realize().packed(), grid.n)
    return problem.psi - traceq - problem.rho / det


@dataclass
class NewtonResult:
    u: PotentialField
    sup_residual: float
    iterations: int
    residual_history: list
    converged: bool


def _linear_solve(ops, eta, rhs, rtol, grid):
    """GMRES on the spectrally discretized linearization.

    The operator annihilates constants; left preconditioning by the
    constant-coefficient inverse projects the mean away, so iterates stay
    in the mean-zero gauge.
    """
    n = grid.n
    shape = grid.shape
    npts = grid.npoints

    def matvec(flat):
        values = flat.reshape(shape)
        hp = ops.hessian_packed(values)
        return kernels.contract_sym(eta, hp, n).reshape(-1)

    eta_mean = [float(comp.mean()) for comp in eta]
    sym = ops.symbol(eta_mean)
    flat_sym = sym.copy()
    flat_sym.flat[0] = 1.0

    def precond(flat):
        vhat = _fft.rfftn(flat.reshape(shape))
        vhat /= flat_sym
        vhat.flat[0] = 0.0
        return _fft.irfftn(vhat, s=shape).reshape(-1)

    A = LinearOperator((npts, npts), matvec=matvec)
    M = LinearOperator((npts, npts), matvec=precond)
    b = rhs.reshape(-1)
    sol, info = gmres(A, b, M=M, rtol=rtol, atol=0.0, restart=40, maxiter=200)
    return sol.reshape(shape), info


def newton_solve(problem, u0, tol=1e-10, max_iter=30):
    """Damped Newton iteration to sup-residual below tol.

    Raises ContinuationRequired for a degenerate twist form with rho = 0
    (no uniform ellipticity near the locus; the epsilon-continuation of
    the flow engine is the designed route there), and NewtonError on
    stagnation, unrecoverable positivity loss, or max_iter.
    """
    if problem.is_degenerate_without_rho():
        raise ContinuationRequired(
            "degenerate twist form with rho = 0: solve via epsilon continuation")
    grid = problem.grid
    ops = spectral_ops(grid)
    tp = problem.theta.realize().packed()
    u = _normalize(u0.values.copy(), problem.normalization)
    history = []
    for it in range(max_iter + 1):
        gp = hessian_packed(PotentialField(grid, u))
        for comp, (j, k) in enumerate(grid.packed_index()):
            if j == k:
                gp[comp] += 1.0
        emin, _ = kernels.eig_bounds(gp, grid.n)
        low = float(emin.min())
        if low <= PD_TOL:
            raise PositivityError(
                f"iterate lost metric positivity (min eig {low:.3e})", min_eig=low)
        traceq, _, det = kernels.wedge_fields(gp, tp, grid.n)
        res = problem.psi - traceq - problem.rho / det
        sup_res = float(np.abs(res).max())
        history.append(sup_res)
        if sup_res < tol:
            return NewtonResult(PotentialField(grid, u), sup_res, it, history, True)
        if it == max_iter:
            break
        w = problem.rho / det
        eta = kernels.eta_packed(gp, tp, w, grid.n)
        eta_min, _ = kernels.eig_bounds(eta, grid.n)
        if float(eta_min.min()) <= 0.0:
            raise NewtonError(
                "linearization coefficients lost positive definiteness "
                f"(min eig {float(eta_min.min()):.3e})")
        rtol = 0.1
        delta, info = _linear_solve(ops, eta, -res, rtol, grid)
        delta -= delta.mean()
        alpha = 1.0
        accepted = False
        for _ in range(40):
            trial = u + alpha * delta
            gp_t = hessian_packed(PotentialField(grid, trial))
            for comp, (j, k) in enumerate(grid.packed_index()):
                if j == k:
                    gp_t[comp] += 1.0
            emin_t, _ = kernels.eig_bounds(gp_t, grid.n)
            if float(emin_t.min()) > PD_TOL:
                traceq_t, _, det_t = kernels.wedge_fields(gp_t, tp, grid.n)
                res_t = problem.psi - traceq_t - problem.rho / det_t
                if float(np.abs(res_t).max()) <= (1.0 - 1e-4 * alpha) * sup_res:
                    u = _normalize(trial, problem.normalization)
                    accepted = True
                    break
            alpha *= 0.5
        if not accepted:
            raise NewtonError(
                f"line search stalled at iteration {it} "
                f"(sup residual {sup_res:.3e}, gmres info {info})")
    raise NewtonError(
        f"max_iter={max_iter} exceeded with sup residual {history[-1]:.3e}")


@dataclass
class UniquenessReport:
    solutions: list
    max_pairwise_diff: float
    agree: bool
    tol: float
    residuals: list


def uniqueness_probe(problem, seeds, tol=1e-10, max_iter=40, agree_tol=1e-6):
    """Solve from each seed and compare limits after gauge normalization."""
    solutions = []
    residuals = []
    for seed in seeds:
        result = newton_solve(problem, seed, tol=tol, max_iter=max_iter)
        solutions.append(result.u)
        residuals.append(result.sup_residual)
    worst = 0.0
    for i in range(len(solutions)):
        for j in range(i + 1, len(solutions)):
            a = _normalize(solutions[i].values, problem.normalization)
            b = _normalize(solutions[j].values, problem.normalization)
            worst = max(worst, float(np.abs(a - b).max()))
    return UniquenessReport(solutions, worst, worst <= agree_tol, agree_tol,
                            residuals)
