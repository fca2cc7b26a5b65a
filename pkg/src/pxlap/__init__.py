"""Numerical laboratory for p(x)-Laplacian equations with gradient terms.

Submodules: ``exponents`` (variable exponents and admissibility),
``discretization`` (P1 meshes, quadrature, grid functions), ``modular``
(modulars, Luxemburg norms, embedding constants), ``toolkit`` (truncations,
test maps, pointwise inequalities), ``solver`` (regularized problems and the
outer schemes), ``suites`` (randomized property checks) and ``cli``.
"""

from .discretization import GridFunction, build_grid, quadrature
from .exponents import (NATURAL, SUBNATURAL, AdmissibilityError, Domain, ExponentField,
                        ExponentTriple, check_admissibility)
from .modular import luxemburg_norm, modular
from .reports import ValidationReport
from .solver import (ProblemSpec, SolveReport, SolverConfig, SolverError, natural_growth_scheme,
                     outer_scheme, solve_reference, solve_regularized)

__version__ = "0.1.0"
