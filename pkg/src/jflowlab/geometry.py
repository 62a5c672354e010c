"""Flat periodic torus with real-variable symmetry reduction.

All fields live on the reduced real torus [0,1)^n sampled on a uniform
N^n grid. Under the reduction every real (1,1)-form becomes a symmetric
n x n matrix field, the reference Kahler form is the identity matrix
field, and the complex Hessian of a potential phi reduces to one quarter
of its real Hessian, taken spectrally. Integrals are plain grid averages
(exact for band-limited periodic integrands), with total volume 1.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.fft as _fft

from . import kernels
from .errors import PositivityError, ValidationError

# A matrix field counts as positive definite when its grid-min eigenvalue
# exceeds PD_TOL, and as semi-positive when it stays above PSD_TOL
# (eigen-solver noise floor).
PD_TOL = 1e-10
PSD_TOL = -1e-10


@dataclass(frozen=True)
class Grid:
    """Uniform grid on the reduced torus [0,1)^n.

    N must be even and at least 8 so spectral differentiation is
    well-defined with the Nyquist mode handled explicitly.
    """

    n: int
    N: int

    def __post_init__(self):
        if self.n not in (2, 3):
            raise ValidationError(f"dimension n must be 2 or 3, got {self.n}")
        if self.N < 8 or self.N % 2 != 0:
            raise ValidationError(f"N must be even and >= 8, got {self.N}")

    @property
    def spacing(self):
        return 1.0 / self.N

    @property
    def shape(self):
        return (self.N,) * self.n

    @property
    def npoints(self):
        return self.N ** self.n

    @property
    def ncomp(self):
        """Number of packed components of a symmetric n x n matrix."""
        return self.n * (self.n + 1) // 2

    def axis_coords(self):
        return np.arange(self.N) / self.N

    def coords(self):
        """Broadcastable coordinate arrays, one per axis."""
        x = self.axis_coords()
        return np.meshgrid(*([x] * self.n), indexing="ij", sparse=True)

    def packed_index(self):
        return tuple((j, k) for j in range(self.n) for k in range(j, self.n))


class SpectralOps:
    """FFT workspace for one grid: wavenumbers and Hessian multipliers.

    The reduced Hessian is H[phi]_{jk} = (1/4) d^2 phi / dx_j dx_k. Mixed
    derivatives zero the Nyquist mode of each first-derivative factor so
    the result stays real and symmetric; pure second derivatives keep it.
    """

    def __init__(self, grid):
        self.grid = grid
        n, N = grid.n, grid.N
        rshape = (N,) * (n - 1) + (N // 2 + 1,)
        self.rshape = rshape
        k_full = 2.0 * np.pi * np.fft.fftfreq(N, d=1.0 / N)
        k_odd = k_full.copy()
        k_odd[N // 2] = 0.0
        kr_full = 2.0 * np.pi * np.fft.rfftfreq(N, d=1.0 / N)
        kr_odd = kr_full.copy()
        kr_odd[-1] = 0.0

        def axis_vec(vec_full, vec_r, axis):
            v = vec_r if axis == n - 1 else vec_full
            shape = [1] * n
            shape[axis] = v.size
            return v.reshape(shape)

        self.k_even = [axis_vec(k_full, kr_full, a) for a in range(n)]
        self.k_odd = [axis_vec(k_odd, kr_odd, a) for a in range(n)]

        mults = []
        for (j, k) in grid.packed_index():
            if j == k:
                mults.append(np.broadcast_to(-0.25 * self.k_even[j] ** 2, rshape).copy())
            else:
                mults.append(np.broadcast_to(-0.25 * self.k_odd[j] * self.k_odd[k], rshape).copy())
        self.hess_mult = np.stack(mults)

    def hessian_packed(self, values):
        """Packed reduced Hessian of a periodic scalar field."""
        vhat = _fft.rfftn(values - values.mean())
        hk = self.hess_mult * vhat[None]
        return _fft.irfftn(hk, s=self.grid.shape, axes=tuple(range(1, self.grid.n + 1)))

    def symbol(self, coeff_packed_means):
        """Fourier symbol of sum_c w_c eta_c * hess_mult_c for constant eta."""
        n = self.grid.n
        sym = np.zeros(self.rshape)
        for comp, (j, k) in enumerate(self.grid.packed_index()):
            w = 1.0 if j == k else 2.0
            sym += w * coeff_packed_means[comp] * self.hess_mult[comp]
        return sym


_OPS_CACHE = {}


def spectral_ops(grid):
    key = (grid.n, grid.N)
    ops = _OPS_CACHE.get(key)
    if ops is None:
        ops = SpectralOps(grid)
        _OPS_CACHE[key] = ops
    return ops


@dataclass
class PotentialField:
    """Periodic scalar field on the grid (a Kahler potential).

    Two fields differing by a constant describe the same metric; the
    mean-zero representative is the normalized gauge.
    """

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        self.values = np.ascontiguousarray(self.values, dtype=np.float64)
        if self.values.shape != self.grid.shape:
            raise ValidationError(
                f"potential shape {self.values.shape} does not match grid {self.grid.shape}")

    def mean(self):
        return float(self.values.mean())

    def mean_zero(self):
        return PotentialField(self.grid, self.values - self.values.mean())

    def shifted(self, c):
        return PotentialField(self.grid, self.values + c)

    def oscillation(self):
        return float(self.values.max() - self.values.min())


def zero_potential(grid):
    return PotentialField(grid, np.zeros(grid.shape))


@dataclass(frozen=True)
class CosineMode:
    """One band-limited building block: amp * cos(2 pi k.x + phase)."""

    k: tuple
    amp: float
    phase: float = 0.0


def potential_from_modes(grid, modes):
    vals = np.zeros(grid.shape)
    xs = grid.coords()
    for mode in modes:
        kvec = tuple(int(v) for v in mode.k)
        if len(kvec) != grid.n:
            raise ValidationError(f"mode wavevector {kvec} has wrong length for n={grid.n}")
        if max(abs(v) for v in kvec) >= grid.N // 2:
            raise ValidationError(f"mode {kvec} is at or above the Nyquist limit N/2={grid.N // 2}")
        phase = 2.0 * np.pi * sum(k * x for k, x in zip(kvec, xs)) + mode.phase
        vals = vals + mode.amp * np.cos(phase)
    return PotentialField(grid, vals)


def random_bandlimited(grid, rng, max_mode=3, amplitude=0.01):
    """Random low-mode potential; deterministic for a seeded generator."""
    modes = []
    ranges = [range(-max_mode, max_mode + 1)] * grid.n
    for kvec in np.stack(np.meshgrid(*ranges, indexing="ij"), axis=-1).reshape(-1, grid.n):
        if not kvec.any():
            continue
        modes.append(CosineMode(tuple(int(v) for v in kvec),
                                amplitude * rng.standard_normal(),
                                float(2.0 * np.pi * rng.random())))
    return potential_from_modes(grid, modes)


@dataclass
class FormField:
    """Symmetric n x n matrix field: the reduced form of a real (1,1)-form."""

    grid: Grid
    matrices: np.ndarray

    def __post_init__(self):
        self.matrices = np.ascontiguousarray(self.matrices, dtype=np.float64)
        n = self.grid.n
        if self.matrices.shape != self.grid.shape + (n, n):
            raise ValidationError(
                f"form shape {self.matrices.shape} does not match grid {self.grid.shape + (n, n)}")
        asym = np.abs(self.matrices - np.swapaxes(self.matrices, -1, -2)).max()
        scale = max(1.0, np.abs(self.matrices).max())
        if asym > 1e-12 * scale:
            raise ValidationError(f"matrix field is not symmetric (max asymmetry {asym:.3e})")

    @classmethod
    def constant(cls, grid, matrix):
        mat = np.asarray(matrix, dtype=np.float64)
        return cls(grid, np.broadcast_to(mat, grid.shape + mat.shape).copy())

    @classmethod
    def identity(cls, grid):
        return cls.constant(grid, np.eye(grid.n))

    @classmethod
    def from_packed(cls, grid, packed):
        return cls(grid, unpack_sym(packed, grid.n))

    def packed(self):
        return pack_sym(self.matrices, self.grid.n)

    def min_eig(self):
        """Grid-min eigenvalue and the grid index where it occurs."""
        emin, _ = kernels.eig_bounds(self.packed(), self.grid.n)
        idx = int(np.argmin(emin))
        loc = np.unravel_index(idx, self.grid.shape)
        return float(emin.flat[idx]), loc

    def eig_range(self):
        emin, emax = kernels.eig_bounds(self.packed(), self.grid.n)
        return float(emin.min()), float(emax.max())

    def trace_field(self):
        return np.trace(self.matrices, axis1=-2, axis2=-1)


def pack_sym(mat_field, n):
    comps = [mat_field[..., j, k] for j in range(n) for k in range(j, n)]
    return np.ascontiguousarray(np.stack(comps))


def unpack_sym(packed, n):
    shape = packed.shape[1:]
    out = np.empty(shape + (n, n))
    comp = 0
    for j in range(n):
        for k in range(j, n):
            out[..., j, k] = packed[comp]
            out[..., k, j] = packed[comp]
            comp += 1
    return out


def identity_packed(grid):
    out = np.zeros((grid.ncomp,) + grid.shape)
    for comp, (j, k) in enumerate(grid.packed_index()):
        if j == k:
            out[comp] = 1.0
    return out


def reduced_hessian(phi):
    """Reduced Hessian H[phi] as a FormField.

    Linear, annihilates constants, symmetric pointwise, and every
    component has zero grid mean; exact for band-limited inputs up to
    rounding.
    """
    packed = spectral_ops(phi.grid).hessian_packed(phi.values)
    return FormField.from_packed(phi.grid, packed)


def hessian_packed(phi):
    return spectral_ops(phi.grid).hessian_packed(phi.values)


def omega_phi(phi):
    """Deformed metric I + H[phi]; query .min_eig() for the positivity margin."""
    packed = hessian_packed(phi)
    for comp, (j, k) in enumerate(phi.grid.packed_index()):
        if j == k:
            packed[comp] += 1.0
    return FormField.from_packed(phi.grid, packed)


def omega_phi_packed(phi):
    packed = hessian_packed(phi)
    for comp, (j, k) in enumerate(phi.grid.packed_index()):
        if j == k:
            packed[comp] += 1.0
    return packed


@dataclass(frozen=True)
class LocusPiece:
    """A grid-aligned piece of the degeneracy locus D.

    Either a subtorus {x_axis = value} (axis set, point None) or a single
    point of the torus (point set).
    """

    axis: int = None
    value: float = None
    point: tuple = None

    @classmethod
    def subtorus(cls, axis, value):
        return cls(axis=int(axis), value=float(value))

    @classmethod
    def at_point(cls, coords):
        return cls(point=tuple(float(c) for c in coords))

    def distance(self, grid):
        xs = grid.coords()

        def wrap(d):
            d = np.abs(d) % 1.0
            return np.minimum(d, 1.0 - d)

        if self.point is not None:
            if len(self.point) != grid.n:
                raise ValidationError("locus point has wrong dimension")
            sq = sum(wrap(x - p) ** 2 for x, p in zip(xs, self.point))
            return np.broadcast_to(np.sqrt(sq), grid.shape).copy()
        if self.axis is None or not (0 <= self.axis < grid.n):
            raise ValidationError(f"locus axis {self.axis} out of range for n={grid.n}")
        return np.broadcast_to(wrap(xs[self.axis] - self.value), grid.shape).copy()


@dataclass(frozen=True)
class Degeneracy:
    """Vanishing descriptor: min-eig(theta) >= c0 * dist(., D)^(2 gamma)."""

    gamma: float
    locus: tuple
    c0: float = None

    def distance_field(self, grid):
        if not self.locus:
            raise ValidationError("degeneracy declared with an empty locus")
        dists = [piece.distance(grid) for piece in self.locus]
        return np.minimum.reduce(dists)


@dataclass(frozen=True)
class ThetaValidation:
    min_eig: float
    location: tuple
    psd_ok: bool
    class_trace: float
    degeneracy_ok: bool = None
    c0_effective: float = None
    messages: tuple = ()


@dataclass
class ThetaSpec:
    """Twist form theta = theta0 + H[psi]: constant PSD part plus a potential part.

    The realized matrix field must be checked semi-positive on the grid
    (validate(), not assumed). When a degeneracy is declared the realized
    field must also satisfy the distance-power lower bound.
    """

    grid: Grid
    theta0: np.ndarray
    psi: PotentialField = None
    degeneracy: Degeneracy = None
    _realized: FormField = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        self.theta0 = np.asarray(self.theta0, dtype=np.float64)
        n = self.grid.n
        if self.theta0.shape != (n, n):
            raise ValidationError(f"theta0 must be {n}x{n}, got {self.theta0.shape}")
        if np.abs(self.theta0 - self.theta0.T).max() > 1e-12:
            raise ValidationError("theta0 must be symmetric")
        if self.psi is not None and self.psi.grid != self.grid:
            raise ValidationError("psi lives on a different grid than the theta spec")

    def realize(self):
        if self._realized is None:
            if self.psi is None:
                form = FormField.constant(self.grid, self.theta0)
            else:
                packed = hessian_packed(self.psi)
                for comp, (j, k) in enumerate(self.grid.packed_index()):
                    packed[comp] += self.theta0[j, k]
                form = FormField.from_packed(self.grid, packed)
            self._realized = form
        return self._realized

    def class_trace(self):
        """Trace of the harmonic part (the cohomology class of theta)."""
        return float(np.trace(self.theta0))

    def with_epsilon(self, eps):
        """Regularized spec theta + eps * omega (degeneracy descriptor dropped)."""
        return ThetaSpec(self.grid, self.theta0 + eps * np.eye(self.grid.n), self.psi, None)

    def validate(self):
        form = self.realize()
        emin_field, _ = kernels.eig_bounds(form.packed(), self.grid.n)
        idx = int(np.argmin(emin_field))
        loc = np.unravel_index(idx, self.grid.shape)
        min_eig = float(emin_field.flat[idx])
        psd_ok = min_eig >= PSD_TOL
        messages = []
        if not psd_ok:
            messages.append(f"theta is not semi-positive: min eig {min_eig:.3e} at {loc}")
        deg_ok = None
        c0_eff = None
        if self.degeneracy is not None:
            dist = self.degeneracy.distance_field(self.grid)
            weight = dist ** (2.0 * self.degeneracy.gamma)
            off = weight > 0
            ratios = emin_field[off] / weight[off]
            c0_eff = float(ratios.min()) if ratios.size else 0.0
            if self.degeneracy.c0 is not None:
                deg_ok = bool(np.all(emin_field + 1e-12 >= self.degeneracy.c0 * weight))
                if not deg_ok:
                    messages.append(
                        f"degeneracy bound fails for declared c0={self.degeneracy.c0}")
            else:
                deg_ok = c0_eff > 0.0
                if not deg_ok:
                    messages.append("no positive c0 certifies the degeneracy bound")
        return ThetaValidation(min_eig, loc, psd_ok, self.class_trace(),
                               deg_ok, c0_eff, tuple(messages))


def cohomology_constant(theta, beta):
    """Constant n * integral(theta ^ omega^(n-1)) / integral(omega^n) + beta.

    Quadrature is the plain grid average of tr(theta); since the Hessian
    part integrates to zero this equals trace(theta0) + beta up to
    rounding, which the tests assert.
    """
    form = theta.realize()
    return float(form.trace_field().mean()) + float(beta)


def wedge_quotients(G, Theta):
    """Pointwise trace quotient n w_phi^(n-1)^theta / w_phi^n and volume ratio w^n / w_phi^n."""
    grid = G.grid
    gp = G.packed()
    tp = Theta.packed()
    emin_field, _ = kernels.eig_bounds(gp, grid.n)
    idx = int(np.argmin(emin_field))
    emin = float(emin_field.flat[idx])
    if emin <= PD_TOL:
        raise PositivityError(
            f"metric field is singular (min eig {emin:.3e})",
            min_eig=emin, location=np.unravel_index(idx, grid.shape))
    traceq, volr, _ = kernels.wedge_fields(gp, tp, grid.n)
    return traceq, volr


@dataclass(frozen=True)
class SubsolutionReport:
    margin: float
    location: tuple
    c_beta: float
    passed: bool


def subsolution_check(candidate, theta, c_beta):
    """Pointwise cone condition for the candidate metric omega-hat.

    In the eigenvalue form the condition asks, for the eigenvalues mu-hat
    of theta relative to omega-hat, that c_beta - sum_{j != k} mu-hat_j
    stays positive for every k; the report carries the grid minimum.
    """
    grid = candidate.grid
    ghat = omega_phi_packed(candidate)
    emin_field, _ = kernels.eig_bounds(ghat, grid.n)
    idx = int(np.argmin(emin_field))
    emin = float(emin_field.flat[idx])
    if emin <= PD_TOL:
        raise PositivityError(
            f"candidate metric is not positive (min eig {emin:.3e})",
            min_eig=emin, location=np.unravel_index(idx, grid.shape))
    tp = theta.realize().packed()
    trsum, mu_min = kernels.gen_eig_stats(ghat, tp, grid.n)
    margin_field = c_beta - (trsum - mu_min)
    idx = int(np.argmin(margin_field))
    margin = float(margin_field.flat[idx])
    return SubsolutionReport(margin, np.unravel_index(idx, grid.shape),
                             float(c_beta), margin > 0.0)


def degenerate_theta_example(grid, t1, t2):
    """Canonical degenerate twist form for n=2.

    theta0 = diag(t1, t2) with psi chosen so the realized field is
    diag(t1 (1 - cos 2 pi x1), t2): semi-positive, vanishing in the first
    eigen-direction exactly on the subtorus {x1 = 0}, with exponent
    gamma = 1 and a floor constant computed from the grid.
    """
    if grid.n != 2:
        raise ValidationError("degenerate_theta_example is defined for n=2")
    if t1 <= 0 or t2 <= 0:
        raise ValidationError("t1 and t2 must be positive")
    amp = 4.0 * t1 / (2.0 * np.pi) ** 2
    psi = potential_from_modes(grid, [CosineMode((1, 0), amp)])
    deg = Degeneracy(gamma=1.0, locus=(LocusPiece.subtorus(0, 0.0),))
    spec = ThetaSpec(grid, np.diag([float(t1), float(t2)]), psi, deg)
    report = spec.validate()
    if not (report.psd_ok and report.degeneracy_ok):
        raise ValidationError("degenerate example failed its own validation")
    spec.degeneracy = Degeneracy(gamma=1.0, locus=deg.locus, c0=report.c0_effective)
    return spec


@dataclass
class GeometrySetup:
    """Fixed data of one experiment: grid, twist form, beta and derived constant."""

    grid: Grid
    theta: ThetaSpec
    beta: float
    c_beta: float
    epsilon0: float = 0.0
    subsolution: PotentialField = None

    @classmethod
    def build(cls, grid, theta, beta, epsilon0=0.0, subsolution=None,
              require_subsolution=False):
        if beta < 0:
            raise ValidationError(f"beta must be non-negative, got {beta}")
        report = theta.validate()
        if not report.psd_ok:
            raise ValidationError("; ".join(report.messages) or "theta not PSD")
        if report.degeneracy_ok is False:
            raise ValidationError("; ".join(report.messages) or "degeneracy bound fails")
        c_beta = cohomology_constant(theta, beta)
        setup = cls(grid, theta, float(beta), c_beta, float(epsilon0), subsolution)
        if subsolution is not None or require_subsolution:
            candidate = subsolution if subsolution is not None else zero_potential(grid)
            sub = subsolution_check(candidate, theta, c_beta)
            if not sub.passed:
                raise ValidationError(
                    f"subsolution margin {sub.margin:.4f} is not positive "
                    f"(worst point {sub.location})")
        return setup

    def distance_field(self):
        """Flat distance to the degeneracy locus, or 1 when none is declared."""
        if self.theta.degeneracy is None:
            return np.ones(self.grid.shape)
        return self.theta.degeneracy.distance_field(self.grid)
