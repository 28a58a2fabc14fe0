"""Numerical tolerances shared by the solvers and drivers."""

from dataclasses import dataclass


@dataclass(frozen=True)
class SolverTolerances:
    """All solver knobs in one place.

    None of these values come from the underlying method; they are
    engineering defaults chosen so the reported eigenvalues are limited by
    discretization error rather than by algebra.
    """

    #: relative residual ``||Ku - λMu|| / ||Ku||`` accepted by the Krylov eigensolvers
    eig_residual: float = 1e-10
    #: thick restarts allowed before giving up
    eig_max_restarts: int = 3
    #: shift-invert restarts for the per-level eigensolve of the full-resolve loop
    shift_invert_max_restarts: int = 3
    #: eigenvalues closer than this (relative) are treated as one cluster
    cluster_gap: float = 1e-8
    #: relative tolerance of the conjugate-gradient fallback
    cg_rtol: float = 1e-10
    #: conjugate-gradient iteration cap, as a multiple of the system size
    cg_maxiter_factor: int = 10
    #: number of ``sigma*(1 + 1e-8*j)`` retries on a singular shifted factorization
    shift_retries: int = 3
    shift_retry_step: float = 1e-8


DEFAULT_TOLERANCES = SolverTolerances()
