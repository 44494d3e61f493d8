"""Bubble transform for piecewise polynomial differential forms on simplicial meshes."""
__version__ = "0.1.0"

from .mesh import (MeshError, SimplicialComplex, check_assumptions, load_mesh, macroelement,
                   omega_ef, refine_uniform)
from .forms import LambdaForm, PiecewiseForm, membership_Pr, membership_Pr_minus, random_form
from .weights import WeightFamily, build_weights, verify_weight_identities
from .transform import (BubbleDecomposition, average, bubble_transform, cutoff_global,
                        cutoff_local, order_reduction, r_identity_check)
from .harness import SuiteConfig, SuiteReport, emit_report, estimate_bounds, run_suite

__all__ = [
    "MeshError", "SimplicialComplex", "check_assumptions", "load_mesh", "macroelement", "omega_ef",
    "refine_uniform", "LambdaForm", "PiecewiseForm", "membership_Pr", "membership_Pr_minus",
    "random_form", "WeightFamily", "build_weights", "verify_weight_identities",
    "BubbleDecomposition", "average", "bubble_transform", "cutoff_global", "cutoff_local",
    "order_reduction", "r_identity_check", "SuiteConfig", "SuiteReport", "emit_report",
    "estimate_bounds", "run_suite",
]
