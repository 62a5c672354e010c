"""Numerical laboratory for the degenerate twisted J-flow on a flat torus."""

__version__ = "0.1.0"

from .errors import (ConfigError, ContinuationRequired, JFlowError,
                     NewtonError, NonFiniteError, PositivityError,
                     ValidationError)
from .geometry import (CosineMode, Degeneracy, FormField, GeometrySetup, Grid,
                       LocusPiece, PotentialField, ThetaSpec,
                       cohomology_constant, degenerate_theta_example,
                       omega_phi, potential_from_modes, random_bandlimited,
                       reduced_hessian, subsolution_check, wedge_quotients,
                       zero_potential)
from .pointwise import (ConeCertificate, Spectrum, ThetaEigen, cone_margin,
                        find_passing_k, flow_speed, key_c0_verify,
                        simultaneous_frame)
from .flow import (FlowConfig, FlowState, adaptive_dt, epsilon_continuation,
                   monitor_estimates, run_to_convergence, step)
from .functionals import (FunctionalReport, aubin_I, aubin_I_classical,
                          aubin_J, evaluate, flow_monotonicity_check,
                          mabuchi_entropy, twisted_J)
from .elliptic import (EllipticProblem, newton_solve, residual,
                       uniqueness_probe)

__all__ = [name for name in dir() if not name.startswith("_")]
