"""Two-scale homogenization of the Maxwell resolvent with locally periodic coefficients.

Modules
-------
fields
    Lattices, periodic grids, spectral and finite-difference operators,
    matrix fields and the binary field format.
coefficients
    Coefficient models ``alpha(x, y)``, ``mu(x, y)`` and built-in families.
cell
    Periodic cell problems: correctors and the curl-div solver.
effective
    Effective tensors, blending-node families and the corrector multiplier.
maxwell
    Fine and homogenized Maxwell operators and their resolvents.
expansion
    Leading term, recurrence, divergence fixer, partial sums and errors.
harness
    Configuration, convergence sweeps, reports and the command line.
"""

from .cell import CellSolveConfig, CellSolveError, correctors, solve_curl_div
from .coefficients import CoefficientModel, builtin, random_smooth_spd, sample_cell, sample_on_grid, validate
from .effective import EffectiveTensors, effective_at, effective_fields, theta_multiplier, voigt_reuss_bounds
from .expansion import Expansion, divergence_fixer, estimate_error, partial_sum, term_norm_diagnostics
from .fields import CellGrid, FieldPair, Lattice, MacroGrid, MatrixField, dump_field, load_field
from .maxwell import MaxwellOperator, ResolventError, SpectralShift, resolvent_solve, selfadjointness_defect

__version__ = "0.1.0"

__all__ = [
    "CellSolveConfig",
    "CellSolveError",
    "correctors",
    "solve_curl_div",
    "CoefficientModel",
    "builtin",
    "random_smooth_spd",
    "sample_cell",
    "sample_on_grid",
    "validate",
    "EffectiveTensors",
    "effective_at",
    "effective_fields",
    "theta_multiplier",
    "voigt_reuss_bounds",
    "Expansion",
    "divergence_fixer",
    "estimate_error",
    "partial_sum",
    "term_norm_diagnostics",
    "CellGrid",
    "FieldPair",
    "Lattice",
    "MacroGrid",
    "MatrixField",
    "dump_field",
    "load_field",
    "MaxwellOperator",
    "ResolventError",
    "SpectralShift",
    "resolvent_solve",
    "selfadjointness_defect",
]
