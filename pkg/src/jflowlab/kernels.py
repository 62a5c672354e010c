"""Backend dispatch for the pointwise field kernels.

The environment variable JFLOWLAB_BACKEND selects the implementation:

* ``numba`` (default when numba imports cleanly) -- JIT-compiled loops,
* ``numpy`` -- vectorized fallback with identical semantics.

Every public function takes symmetric matrix fields in packed layout of
shape (m, *grid_shape) with m = n*(n+1)/2 (row-major upper triangle) and
returns fields shaped like the grid. ``benchmarks/kernel_bench.py`` times
the two backends side by side.
"""

import os

from .errors import ConfigError


def _select_backend():
    choice = os.environ.get("JFLOWLAB_BACKEND", "").strip().lower()
    if choice not in ("", "numba", "numpy"):
        raise ConfigError(
            f"JFLOWLAB_BACKEND must be 'numba' or 'numpy', got {choice!r}")
    if choice == "numpy":
        from . import _kernels_numpy as impl
        return impl, "numpy"
    try:
        from . import _kernels_numba as impl
        return impl, "numba"
    except ImportError:
        if choice == "numba":
            raise
        from . import _kernels_numpy as impl
        return impl, "numpy"


_IMPL, _NAME = _select_backend()


def backend_name():
    """Name of the active kernel backend ('numba' or 'numpy')."""
    return _NAME


def _flat(packed):
    m = packed.shape[0]
    return packed.reshape(m, -1), packed.shape[1:]


def speed_fields(gp, tp, c, beta, n):
    """Pointwise flow speed, min eigenvalue of G and det G."""
    g, shape = _flat(gp)
    t, _ = _flat(tp)
    fn = _IMPL.speed_fields_n2 if n == 2 else _IMPL.speed_fields_n3
    speed, mineig, det = fn(g, t, float(c), float(beta))
    return speed.reshape(shape), mineig.reshape(shape), det.reshape(shape)


def eig_bounds(sp, n):
    """Minimum and maximum eigenvalue fields of a symmetric matrix field."""
    s, shape = _flat(sp)
    fn = _IMPL.eig_bounds_n2 if n == 2 else _IMPL.eig_bounds_n3
    emin, emax = fn(s)
    return emin.reshape(shape), emax.reshape(shape)


def wedge_fields(gp, tp, n):
    """tr(G^-1 T), 1/det G and det G as pointwise fields."""
    g, shape = _flat(gp)
    t, _ = _flat(tp)
    fn = _IMPL.wedge_fields_n2 if n == 2 else _IMPL.wedge_fields_n3
    traceq, volr, det = fn(g, t)
    return traceq.reshape(shape), volr.reshape(shape), det.reshape(shape)


def gen_eig_stats(gp, tp, n):
    """Sum and minimum of the eigenvalues of T relative to G (G SPD)."""
    g, shape = _flat(gp)
    t, _ = _flat(tp)
    fn = _IMPL.gen_eig_stats_n2 if n == 2 else _IMPL.gen_eig_stats_n3
    trsum, mu_min = fn(g, t)
    return trsum.reshape(shape), mu_min.reshape(shape)


def eta_packed(gp, tp, w, n):
    """Coefficient field G^-1 T G^-1 + w G^-1 of the linearized operator."""
    g, shape = _flat(gp)
    t, _ = _flat(tp)
    fn = _IMPL.eta_packed_n2 if n == 2 else _IMPL.eta_packed_n3
    out = fn(g, t, w.reshape(-1))
    return out.reshape((out.shape[0],) + shape)


def contract_sym(ep, sp, n):
    """Full contraction of two packed symmetric fields (off-diagonals doubled)."""
    e, shape = _flat(ep)
    s, _ = _flat(sp)
    fn = _IMPL.contract_sym_n2 if n == 2 else _IMPL.contract_sym_n3
    return fn(e, s).reshape(shape)
