"""Equilibrium measures on the real line in polynomial external fields.

The package follows one family of equilibrium measures as its total mass
grows: refining cut configurations, integrating the endpoint flow,
detecting and traversing the phase transitions where the support changes
topology, and checking the local scaling laws against their closed-form
rates.
"""

from .dynamics import (BIRTH_OF_CUT, EXTREMA_BIRTH, FUSION, TYPE_III,
                       CoordinateDerivatives, CouplingDerivatives,
                       EvolveOptions, Trajectory, TransitionEvent,
                       continue_state, coupling_derivatives, evolve,
                       hydrodynamic_residual, time_derivatives)
from .errors import (DegenerateField, DegreeMismatch, EqflowError,
                     EventResolutionFailed, InconsistentConfiguration,
                     InsufficientWindow, NearSingular, NegativeDensity,
                     NegativeRUnderRoot, NewtonDiverged, NonConvergence,
                     NoRealConfiguration, SeedFailed, SingularSystem,
                     StepUnderflow, TopologyBroken)
from .fekete import PointConfiguration, compare_to_equilibrium, fekete_points
from .fields import ExternalField, assemble_density_poly, double_zero_factor
from .polynomials import RealPolynomial, all_roots
from .probes import (RobinJumpReport, ScalingReport, robin_derivative_jump,
                     scaling_probe)
from .quadrature import (HFamily, RobinData, SupportConfig,
                         cheb_singular_integral, cheb_u_integral,
                         mass_integral, period_residuals, robin_data,
                         solve_h_family)
from .quartic import (FULL_SEQUENCE, ONE_CUT_FOREVER, REAL_CRITICAL_SEQUENCE,
                      SYMMETRIC_TWO_CUT, TYPE_III_BOUNDARY, Classification,
                      QuarticField, classify, critical_constants,
                      interior_merge_family, quadruple_points, type3_locus)
from .reporting import (events_json, field_from_json, field_json,
                        trajectory_csv, write_run)
from .state import (EquilibriumState, StateGuess, cauchy_at, density_at,
                    effective_potential, hodograph_refine, potential_at,
                    state_from_json, state_to_json, verify_equilibrium)

__all__ = [
    "EqflowError", "DegreeMismatch", "InconsistentConfiguration",
    "NonConvergence", "SingularSystem", "NegativeRUnderRoot",
    "NegativeDensity", "NewtonDiverged", "TopologyBroken", "SeedFailed",
    "NearSingular", "EventResolutionFailed", "StepUnderflow",
    "InsufficientWindow", "NoRealConfiguration", "DegenerateField",
    "RealPolynomial", "all_roots",
    "ExternalField", "double_zero_factor", "assemble_density_poly",
    "SupportConfig", "HFamily", "RobinData",
    "cheb_singular_integral", "cheb_u_integral", "solve_h_family",
    "robin_data", "period_residuals", "mass_integral",
    "EquilibriumState", "StateGuess", "hodograph_refine", "density_at",
    "cauchy_at", "potential_at", "effective_potential", "verify_equilibrium",
    "state_to_json", "state_from_json",
    "evolve", "continue_state", "Trajectory", "TransitionEvent",
    "EvolveOptions", "BIRTH_OF_CUT", "FUSION", "TYPE_III", "EXTREMA_BIRTH",
    "time_derivatives", "coupling_derivatives", "hydrodynamic_residual",
    "CoordinateDerivatives", "CouplingDerivatives",
    "QuarticField", "Classification", "classify", "critical_constants",
    "quadruple_points", "type3_locus", "interior_merge_family",
    "ONE_CUT_FOREVER", "TYPE_III_BOUNDARY", "FULL_SEQUENCE",
    "REAL_CRITICAL_SEQUENCE", "SYMMETRIC_TWO_CUT",
    "ScalingReport", "RobinJumpReport", "scaling_probe",
    "robin_derivative_jump",
    "PointConfiguration", "fekete_points", "compare_to_equilibrium",
    "trajectory_csv", "events_json", "field_json", "field_from_json",
    "write_run",
]

__version__ = "0.1.0"
