"""Nonlocal-Neumann fractional Schroedinger problems on bounded domains.

    eps^{2s} (-Delta)^s u + u = |u|^{p-1} u  in Omega,   N_s u = 0  outside Omega.

Modules, bottom-up: geometry (domains and box meshes), kernel (constants,
singular quadrature, pair weights), operators (fields, closure, Neumann
operator, bilinear form), energy, solver (Nehari-projected descent),
analysis (tent function, ledgers, integrability) and cli.
"""

__version__ = "0.1.0"

from .geometry import Domain, ExteriorTruncation, Mesh, MeshSpec, build_domain, build_mesh, collar_region
from .kernel import Params, ParameterError, normalization_constant, pair_energy, singular_cell_rule
from .operators import Field, bilinear_form, exterior_closure, neumann_operator, frac_laplacian, green_identity
from .energy import energy, derivative, nehari_scale
from .solver import SolveConfig, SolveReport, solve
from .analysis import (alpha_constant, critical_times, phi_l2_exact, phi_seminorm_ledger, scaling_fit,
                       weighted_l1, l2_local_check)

__all__ = [
    "Domain", "ExteriorTruncation", "Mesh", "MeshSpec", "build_domain", "build_mesh", "collar_region",
    "Params", "ParameterError", "normalization_constant", "pair_energy", "singular_cell_rule",
    "Field", "bilinear_form", "exterior_closure", "neumann_operator", "frac_laplacian", "green_identity",
    "energy", "derivative", "nehari_scale", "SolveConfig", "SolveReport", "solve",
    "alpha_constant", "critical_times", "phi_l2_exact", "phi_seminorm_ledger", "scaling_fit",
    "weighted_l1", "l2_local_check",
]
