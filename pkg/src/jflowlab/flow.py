"""Time integration of the (regularized) twisted J-flow.

Explicit four-stage Runge-Kutta on the pointwise speed

    c_eps - tr_{w_phi} theta_eps - beta w^n / w_phi^n,

with a parabolic step bound from the linearization's diffusion
coefficients and reject-and-halve on positivity violations. Convergence
is declared on the sup-norm of the speed alone: the speed is exactly the
residual of the stationary equation, so stationarity means solution.

A single logical stepping thread owns each state; states are plain
values and can be handed between threads when not being stepped.
"""

from dataclasses import dataclass, field

import numpy as np

from . import functionals, kernels
from .errors import NonFiniteError, PositivityError, ValidationError
from .geometry import (PD_TOL, PSD_TOL, PotentialField, hessian_packed,
                       spectral_ops)

CSV_COLUMNS = ("t", "dt", "sup_abs_dphi", "min_eig_margin", "osc_phi",
               "J_twisted", "I_aubin", "J_aubin", "entropy", "weighted_c2")

_EXTRA_COLUMNS = ("dissipation", "sup_phi", "inf_phi", "max_dphi", "min_dphi",
                  "trace_margin", "c_trace", "epsilon")


@dataclass
class FlowConfig:
    """Stepping and continuation knobs (the flow itself is continuous-time)."""

    dt_initial: float = 1e-4
    dt_max: float = 0.05
    safety: float = 0.5
    tol_converge: float = 1e-8
    max_steps: int = 200_000
    epsilon_schedule: tuple = (0.0,)
    record_every: int = 25
    c2_alpha: float = None
    dt_floor: float = 1e-12
    continue_on_failure: bool = False

    def __post_init__(self):
        if self.tol_converge <= 0:
            raise ValidationError("tol_converge must be positive")
        if not (0.0 < self.safety < 1.0):
            raise ValidationError("safety must lie in (0, 1)")
        if self.record_every < 1:
            raise ValidationError("record_every must be >= 1")
        sched = tuple(float(e) for e in self.epsilon_schedule)
        if not sched:
            raise ValidationError("epsilon_schedule must not be empty")
        if any(e < 0 for e in sched):
            raise ValidationError("epsilon values must be non-negative")
        if any(b >= a for a, b in zip(sched, sched[1:])):
            raise ValidationError("epsilon_schedule must be strictly decreasing")
        self.epsilon_schedule = sched


@dataclass(frozen=True)
class FlowDiagnostics:
    sup_abs_dphi: float
    max_dphi: float
    min_dphi: float
    min_eig: float
    min_eig_location: tuple
    osc_phi: float
    sup_phi: float
    inf_phi: float
    det_min: float
    dt_denominator: float


@dataclass
class FlowState:
    """One point of a trajectory: time, potential, cached metric and speed."""

    t: float
    phi: PotentialField
    G_packed: np.ndarray
    speed: np.ndarray
    diagnostics: FlowDiagnostics

    def metric(self):
        from .geometry import FormField
        return FormField.from_packed(self.phi.grid, self.G_packed)


class DiagnosticSeries:
    """Columnar recording of a trajectory."""

    def __init__(self):
        self._data = {name: [] for name in CSV_COLUMNS + _EXTRA_COLUMNS}

    def append(self, **kwargs):
        for name, col in self._data.items():
            col.append(float(kwargs[name]))

    def column(self, name):
        return np.asarray(self._data[name])

    def __len__(self):
        return len(self._data["t"])

    def csv_rows(self):
        for i in range(len(self)):
            yield [self._data[name][i] for name in CSV_COLUMNS]


class FlowContext:
    """Per-(setup, epsilon) precomputation shared by all steps of a run."""

    def __init__(self, setup, epsilon, config=None):
        grid = setup.grid
        self.setup = setup
        self.grid = grid
        self.n = grid.n
        self.epsilon = float(epsilon)
        self.beta = setup.beta
        self.c_eps = setup.c_beta + grid.n * self.epsilon
        self.theta_bar = setup.c_beta - setup.beta + grid.n * self.epsilon
        tp = setup.theta.realize().packed().copy()
        for comp, (j, k) in enumerate(grid.packed_index()):
            if j == k:
                tp[comp] += self.epsilon
        self.tp = tp
        _, tmax = kernels.eig_bounds(tp, grid.n)
        self.theta_maxeig = tmax
        deg = setup.theta.degeneracy
        gamma = deg.gamma if deg is not None else 1.0
        alpha = None if config is None else config.c2_alpha
        if alpha is None:
            alpha = (grid.n - 1) * gamma
        self.c2_alpha = float(alpha)
        dist = setup.distance_field()
        self.dist = dist
        self.c2_weight = dist ** (2.0 * self.c2_alpha)
        # Degenerate runs (epsilon = 0 with a declared locus) enforce the
        # weaker semi-positive floor on points within one spacing of D.
        if deg is not None and self.epsilon == 0.0:
            self.near_mask = dist <= grid.spacing
            self.far_mask = ~self.near_mask
        else:
            self.near_mask = None
            self.far_mask = None
        spectral_ops(grid)  # warm the FFT workspace cache

    def evaluate(self, values):
        gp = hessian_packed(PotentialField(self.grid, values))
        for comp, (j, k) in enumerate(self.grid.packed_index()):
            if j == k:
                gp[comp] += 1.0
        speed, emin, det = kernels.speed_fields(gp, self.tp, self.c_eps,
                                                self.beta, self.n)
        return gp, speed, emin, det

    def check_positive(self, emin):
        if self.near_mask is None or not self.near_mask.any():
            low = float(emin.min())
            if low <= PD_TOL:
                idx = int(np.argmin(emin))
                return low, np.unravel_index(idx, self.grid.shape)
            return None
        far_low = float(emin[self.far_mask].min()) if self.far_mask.any() else np.inf
        near_low = float(emin[self.near_mask].min())
        if far_low <= PD_TOL or near_low < PSD_TOL:
            idx = int(np.argmin(emin))
            return float(emin.flat[idx]), np.unravel_index(idx, self.grid.shape)
        return None

    def make_state(self, t, phi, evaluation=None):
        if not isinstance(phi, PotentialField):
            phi = PotentialField(self.grid, phi)
        gp, speed, emin, det = evaluation if evaluation is not None \
            else self.evaluate(phi.values)
        if not np.isfinite(speed).all():
            raise NonFiniteError("flow speed contains non-finite values")
        idx = int(np.argmin(emin))
        vals = phi.values
        diag = FlowDiagnostics(
            sup_abs_dphi=float(np.abs(speed).max()),
            max_dphi=float(speed.max()),
            min_dphi=float(speed.min()),
            min_eig=float(emin.flat[idx]),
            min_eig_location=np.unravel_index(idx, self.grid.shape),
            osc_phi=float(vals.max() - vals.min()),
            sup_phi=float(vals.max()),
            inf_phi=float(vals.min()),
            det_min=float(det.min()),
            dt_denominator=float((self.theta_maxeig + self.n * self.beta / det).max()),
        )
        return FlowState(float(t), phi, gp, speed, diag)

    def record(self, series, state, dt):
        gp = state.G_packed
        traceq, _, det = kernels.wedge_fields(gp, self.tp, self.n)
        c_trace = float(traceq.max())
        shifted = gp.copy()
        if c_trace > 0:
            shifted -= self.tp / c_trace
        emin_shift, _ = kernels.eig_bounds(shifted, self.n)
        report = functionals.report_from_packed(
            state.phi.values, gp, self.tp, self.theta_bar, self.beta, self.n)
        trace_g = sum(gp[comp] for comp, (j, k)
                      in enumerate(self.grid.packed_index()) if j == k)
        d = state.diagnostics
        series.append(
            t=state.t, dt=dt, sup_abs_dphi=d.sup_abs_dphi,
            min_eig_margin=d.min_eig, osc_phi=d.osc_phi,
            J_twisted=report.J_twisted, I_aubin=report.I, J_aubin=report.J,
            entropy=report.entropy,
            weighted_c2=float((self.c2_weight * trace_g).max()),
            dissipation=float((state.speed ** 2 * det).mean()),
            sup_phi=d.sup_phi, inf_phi=d.inf_phi,
            max_dphi=d.max_dphi, min_dphi=d.min_dphi,
            trace_margin=float(emin_shift.min()), c_trace=c_trace,
            epsilon=self.epsilon)


def step(state, setup, epsilon, dt, ctx=None):
    """One explicit RK4 update of the potential by the pointwise speed.

    Raises PositivityError when any stage leaves the positive cone (the
    caller should halve dt) and NonFiniteError on blow-up.
    """
    if ctx is None:
        ctx = FlowContext(setup, epsilon)
    phi = state.phi.values
    k1 = state.speed

    def stage(values):
        _, speed, emin, _ = ctx.evaluate(values)
        if not np.isfinite(speed).all():
            raise NonFiniteError("flow speed contains non-finite values")
        bad = ctx.check_positive(emin)
        if bad is not None:
            raise PositivityError(
                f"metric lost positivity during a stage (min eig {bad[0]:.3e})",
                min_eig=bad[0], location=bad[1])
        return speed

    k2 = stage(phi + 0.5 * dt * k1)
    k3 = stage(phi + 0.5 * dt * k2)
    k4 = stage(phi + dt * k3)
    new_values = phi + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    evaluation = ctx.evaluate(new_values)
    bad = ctx.check_positive(evaluation[2])
    if bad is not None:
        raise PositivityError(
            f"metric lost positivity after the step (min eig {bad[0]:.3e})",
            min_eig=bad[0], location=bad[1])
    return ctx.make_state(state.t + dt, new_values, evaluation)


def adaptive_dt(state, config):
    """Parabolic stability bound from the linearization's diffusion scale.

    dt <= safety * h^2 * (min lambda)^2 / max_x (max mu + n beta / det G),
    capped at dt_max (and equal to dt_max when the denominator vanishes,
    e.g. degenerate twist with beta = 0).
    """
    denom = state.diagnostics.dt_denominator
    if denom <= 0.0:
        return config.dt_max
    h = state.phi.grid.spacing
    bound = config.safety * h * h * state.diagnostics.min_eig ** 2 / denom
    return min(config.dt_max, bound)


@dataclass
class FlowResult:
    phi: PotentialField
    series: DiagnosticSeries
    converged: bool
    steps: int
    rejections: int
    sup_abs_dphi: float
    state: FlowState = field(repr=False, default=None)


def run_to_convergence(phi0, setup, epsilon, config, *, ctx=None):
    """Iterate adaptive RK4 steps until sup |d_t phi| < tol or max_steps.

    The returned potential is the mean-zero representative; the recorded
    series keeps the un-normalized sup/inf of the flow variable.
    """
    if ctx is None:
        ctx = FlowContext(setup, epsilon, config)
    state = ctx.make_state(0.0, phi0)
    bad = ctx.check_positive(kernels.eig_bounds(state.G_packed, ctx.n)[0])
    if bad is not None:
        raise PositivityError(
            f"initial potential has non-positive metric (min eig {bad[0]:.3e})",
            min_eig=bad[0], location=bad[1])
    series = DiagnosticSeries()
    ctx.record(series, state, 0.0)
    accepted = 0
    rejections = 0
    converged = state.diagnostics.sup_abs_dphi < config.tol_converge
    while not converged and accepted < config.max_steps:
        dt = adaptive_dt(state, config)
        if accepted == 0:
            dt = min(dt, config.dt_initial)
        while True:
            try:
                new_state = step(state, setup, epsilon, dt, ctx=ctx)
                break
            except PositivityError:
                rejections += 1
                dt *= 0.5
                if dt < config.dt_floor:
                    raise
        state = new_state
        accepted += 1
        recorded = False
        if accepted % config.record_every == 0:
            ctx.record(series, state, dt)
            recorded = True
        if state.diagnostics.sup_abs_dphi < config.tol_converge:
            converged = True
            if not recorded:
                ctx.record(series, state, dt)
    return FlowResult(state.phi.mean_zero(), series, converged, accepted,
                      rejections, state.diagnostics.sup_abs_dphi, state)


@dataclass(frozen=True)
class EstimatesRecord:
    """Live measurements of the a priori bounds (pure measurement, no action).

    sup_abs_dphi feeds the maximum-principle monitor; c_trace is the
    grid-sup of tr_{w_phi} theta_eps, and trace_margin the grid-min
    eigenvalue of G - theta_eps / c_trace (non-negative up to tolerance
    by pointwise linear algebra); sup_phi / inf_phi track the two-sided
    sign bound of the un-normalized variable; weighted_c2 is
    sup_x dist(x, D)^(2 alpha) tr G for the configured alpha.
    """

    sup_abs_dphi: float
    c_trace: float
    trace_margin: float
    sup_phi: float
    inf_phi: float
    weighted_c2: float
    identity_residual: float
    alpha: float


def monitor_estimates(state, setup, epsilon, ctx=None):
    if ctx is None:
        ctx = FlowContext(setup, epsilon)
    gp = state.G_packed
    traceq, _, det = kernels.wedge_fields(gp, ctx.tp, ctx.n)
    c_trace = float(traceq.max())
    shifted = gp - ctx.tp / c_trace if c_trace > 0 else gp.copy()
    emin_shift, _ = kernels.eig_bounds(shifted, ctx.n)
    trace_g = sum(gp[comp] for comp, (j, k)
                  in enumerate(ctx.grid.packed_index()) if j == k)
    identity = np.abs(traceq - (ctx.c_eps - state.speed - ctx.beta / det)).max()
    vals = state.phi.values
    return EstimatesRecord(
        sup_abs_dphi=float(np.abs(state.speed).max()),
        c_trace=c_trace,
        trace_margin=float(emin_shift.min()),
        sup_phi=float(vals.max()),
        inf_phi=float(vals.min()),
        weighted_c2=float((ctx.c2_weight * trace_g).max()),
        identity_residual=float(identity),
        alpha=ctx.c2_alpha,
    )


@dataclass
class EpsilonRun:
    epsilon: float
    result: FlowResult
    oscillation: float
    weighted_c2_final: float
    min_eig_final: float
    shift_from_previous: float


@dataclass
class ContinuationResult:
    runs: list
    converged_all: bool
    oscillation_max: float
    oscillation_last_variation: float
    weighted_c2_last_variation: float


def epsilon_continuation(phi0, setup, config):
    """Run the flow for each epsilon in the schedule, warm-starting each run
    from the previous limit, and report uniform-in-epsilon boundedness of
    the oscillation.

    Whether the epsilon = 0 discrete flow equals the limit of the
    discrete epsilon-flows is not assumed: shift_from_previous records
    the measured sup-distance between consecutive limits.
    """
    runs = []
    current = phi0
    previous_limit = None
    converged_all = True
    for eps in config.epsilon_schedule:
        ctx = FlowContext(setup, eps, config)
        result = run_to_convergence(current, setup, eps, config, ctx=ctx)
        limit = result.phi
        shift = (np.abs(limit.values - previous_limit.values).max()
                 if previous_limit is not None else np.nan)
        emin, _ = kernels.eig_bounds(result.state.G_packed, ctx.n)
        trace_g = sum(result.state.G_packed[comp] for comp, (j, k)
                      in enumerate(ctx.grid.packed_index()) if j == k)
        runs.append(EpsilonRun(
            eps, result, limit.oscillation(),
            float((ctx.c2_weight * trace_g).max()),
            float(emin.min()), float(shift)))
        converged_all = converged_all and result.converged
        if not result.converged and not config.continue_on_failure:
            break
        current = limit
        previous_limit = limit
    oscs = [r.oscillation for r in runs]
    osc_var = (abs(oscs[-1] - oscs[-2]) / max(abs(oscs[-1]), 1e-300)
               if len(oscs) >= 2 else 0.0)
    c2s = [r.weighted_c2_final for r in runs]
    c2_var = (abs(c2s[-1] - c2s[-2]) / max(abs(c2s[-1]), 1e-300)
              if len(c2s) >= 2 else 0.0)
    return ContinuationResult(runs, converged_all, max(oscs), osc_var, c2_var)
