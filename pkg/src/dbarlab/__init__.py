"""Numerical laboratory for the weighted dbar-Neumann problem on C^n (n = 1, 2)."""

__version__ = "0.1.0"

from .errors import ConfigurationError, LabError, OutputError, PreconditionError, SamplingError, SolverError
from .grid import FormField, GridSpec, WeightedMeasure, build_grid, weighted_inner, weighted_norm
from .operators import (
    WeightedOperator, assemble_box_laplacian, dbar_0, dbar_1, dbar_star_formula, discrete_adjoint, q_form,
)
from .spectral import SolverConfig, SpectrumReport, apply_neumann, dense_oracle, smallest_eigenpairs, symmetrize
from .weights import WeightSpec, check_condition, coordinate_sum, eval_gradient, eval_levi, eval_weight, radial

__all__ = [
    "ConfigurationError", "LabError", "OutputError", "PreconditionError", "SamplingError", "SolverError",
    "FormField", "GridSpec", "WeightedMeasure", "build_grid", "weighted_inner", "weighted_norm",
    "WeightedOperator", "assemble_box_laplacian", "dbar_0", "dbar_1", "dbar_star_formula",
    "discrete_adjoint", "q_form", "SolverConfig", "SpectrumReport", "apply_neumann", "dense_oracle",
    "smallest_eigenpairs", "symmetrize", "WeightSpec", "check_condition", "coordinate_sum",
    "eval_gradient", "eval_levi", "eval_weight", "radial",
]
