"""Invariant tori and attractors of (conformally) symplectic twist maps."""

from .errors import *  # noqa: F401,F403
from .fourier import (DiophantineFrequency, PeriodicGridFunction, derivative, grid, shift,
                      resample, sobolev_norm, solve_contraction, solve_contraction_reversed,
                      solve_small_divisor)
from .models import (CylinderState, MapModel, NonTwistMap, Potential, SpinOrbitMap,
                     StandardMap, TwoFactorMap, build_model, verify_conformality, FAMILIES)
from .newton import (NewtonReport, SolverOptions, TorusEmbedding, assemble_frame,
                     invariance_error, newton_step, solve, sup_error, uniqueness_check)
from .continuation import (BreakdownEstimate, ContinuationPolicy, ContinuationTrace,
                           continue_torus, estimate_breakdown, existence_region_scan)
from .bundles import bundle_angle, lyapunov_multipliers, stable_bundle
from .greene import approximants, find_periodic_orbit, greene_estimate, trace_tongue
from .dynamics import classify_basins, rotation_number, rotation_vs_parameter

__version__ = "0.1.0"
