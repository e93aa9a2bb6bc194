"""Finite elements for fractional Sobolev spaces, capacitary measures and L^p-sparse problems."""

from .gram import (
    GramOperator,
    SpaceKind,
    assemble,
    assemble_integral_omega,
    assemble_integral_tilde,
    assemble_spectral,
    c_ds,
    gram_inner,
    seminorm_oracle,
)
from .measures import (
    NodalMeasure,
    capacity,
    check_K_membership,
    gamma_sequence_test,
    measure_from_z,
    relaxed_dirichlet_solve,
    torsion_z,
)
from .mesh import FeFunction, Mesh1D, l2_inner, lp_integral, lumped_mass, mass_matrix, stiffness_matrix
from .smoothing import SmoothingFamily, g_eps, psi, psi_prime
from .solver import (
    ProblemConfig,
    SolveReport,
    Tracking,
    dc_solve,
    mu_from_solution,
    multiplier_lambda,
    optimality_report,
    p_to_zero_continuation,
)

__all__ = [
    "GramOperator", "SpaceKind", "assemble", "assemble_integral_omega", "assemble_integral_tilde",
    "assemble_spectral", "c_ds", "gram_inner", "seminorm_oracle",
    "NodalMeasure", "capacity", "check_K_membership", "gamma_sequence_test", "measure_from_z",
    "relaxed_dirichlet_solve", "torsion_z",
    "FeFunction", "Mesh1D", "l2_inner", "lp_integral", "lumped_mass", "mass_matrix", "stiffness_matrix",
    "SmoothingFamily", "g_eps", "psi", "psi_prime",
    "ProblemConfig", "SolveReport", "Tracking", "dc_solve", "mu_from_solution", "multiplier_lambda",
    "optimality_report", "p_to_zero_continuation",
]

__version__ = "0.1.0"
