"""Adaptive P1 finite elements for the Steklov eigenvalue problem.

Solves ``-Δu + u = 0`` in a polygon with ``∂u/∂n = λu`` on the boundary,
using three adaptive loops (full eigensolve per level, inverse iteration and
shifted inverse iteration) driven by a residual error estimator.
"""

from .config import SolverTolerances
from .errors import (
    DegenerateStartError,
    EigensolverStagnationError,
    GeometryError,
    NotSPDError,
    ShiftSingularError,
    SteklovError,
    StructuralError,
    UnsupportedDomainError,
)
from .mesh import DomainSpec, TriangleMesh, bisect, edge_tables, generate_uniform
from .assembly import DofMap, FormPair, assemble
from .eigensolve import (
    DiscreteEigenpair,
    EigenBasis,
    inverse_step,
    prolong,
    rayleigh_quotient,
    shifted_inverse_step,
    solve_coarse,
)
from .estimator import IndicatorField, compute_indicators
from .marking import MarkParams, mark
from .drivers import (
    ConvergenceHistory,
    RunConfig,
    run,
    run_algorithm_1,
    run_algorithm_2,
    run_algorithm_3,
    run_scheme_1,
)

__version__ = "0.1.0"
