"""Adaptive loops and the non-adaptive multiscale reference run.

``run_algorithm_1``
    re-solves the discrete eigenproblem on every mesh (shift-invert Lanczos
    around the previous eigenvalue, warm-started from the prolonged vector);
``run_algorithm_2``
    one inverse-iteration solve ``K ũ = M u`` per mesh;
``run_algorithm_3``
    one shifted-inverse solve ``(K - λM) ũ = M u`` per mesh.

All three solve the eigenproblem once on the initial mesh, then loop
estimate -> mark -> bisect -> prolong -> update.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .assembly import assemble
from .config import DEFAULT_TOLERANCES, SolverTolerances
from .eigensolve import (
    DiscreteEigenpair,
    inverse_step,
    prolong,
    shift_invert_eigs,
    shifted_inverse_step,
    solve_coarse,
)
from .errors import DegenerateStartError, SteklovError
from .estimator import compute_indicators
from .linalg import factor_shifted, factor_spd
from .marking import DEFAULT_OMEGA, MarkParams, mark
from .mesh import DomainSpec, TriangleMesh, bisect, generate_uniform

logger = logging.getLogger(__name__)

ALGORITHMS = ("1", "2", "3", "scheme1")
DEFAULT_INITIAL_DIAMETER = np.sqrt(2.0) / 128
DEFAULT_MAX_DOF = 400_000

#: most refined published values, used for error columns when no reference is given
REFERENCE_EIGENVALUES = {
    ("square", 1): 0.24007909,
    ("square", 2): 1.49230397,
    ("square", 4): 2.08265094,
    ("lshape", 1): 0.18296424,
    ("lshape", 2): 0.89364690,
    ("lshape", 3): 1.68860181,
}


@dataclass
class RunConfig:
    """Everything one adaptive run needs.

    Stop rules are checked after every iteration in the order
    ``eta_tol``, ``max_dof``, ``max_iters``; the first one that fires ends the
    run.  ``max_dof`` stops once the current mesh has at least that many
    degrees of freedom.
    """

    algorithm: str = "3"
    k: int = 1
    omega: float = DEFAULT_OMEGA
    max_dof: int | None = DEFAULT_MAX_DOF
    max_iters: int | None = None
    eta_tol: float | None = None
    lambda_ref: float | None = None
    domain: DomainSpec | None = None
    initial_mesh: TriangleMesh | None = None
    initial_diameter: float = DEFAULT_INITIAL_DIAMETER
    tolerances: SolverTolerances = DEFAULT_TOLERANCES

    def __post_init__(self):
        self.algorithm = str(self.algorithm)
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"algorithm must be one of {ALGORITHMS}")
        if self.k < 1:
            raise ValueError("k must be >= 1")
        MarkParams(self.omega)
        if self.max_dof is None and self.max_iters is None and self.eta_tol is None:
            raise ValueError("at least one stop rule is required")
        if self.domain is None and self.initial_mesh is None:
            self.domain = DomainSpec.unit_square()

    @property
    def domain_name(self):
        return None if self.domain is None else self.domain.name

    def reference(self):
        if self.lambda_ref is not None:
            return self.lambda_ref
        return REFERENCE_EIGENVALUES.get((self.domain_name, self.k))

    def build_initial_mesh(self):
        if self.initial_mesh is not None:
            return self.initial_mesh
        return generate_uniform(self.domain, self.initial_diameter)


@dataclass(frozen=True)
class IterationRecord:
    iter: int
    dofs: int
    lam: float
    eta_global: float
    marked_count: int
    wall_time_s: float
    solves: int = 0


@dataclass
class ConvergenceHistory:
    algorithm: str
    k: int
    lambda_ref: float | None = None
    records: list = field(default_factory=list)
    stop_reason: str | None = None
    error: str | None = None
    cluster: tuple = ()
    final_mesh: TriangleMesh | None = field(default=None, repr=False)
    final_pair: DiscreteEigenpair | None = field(default=None, repr=False)

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def column(self, name):
        return np.array([getattr(r, name) for r in self.records])

    @property
    def dofs(self):
        return self.column("dofs")

    @property
    def lambdas(self):
        return self.column("lam")

    @property
    def etas(self):
        return self.column("eta_global")

    @property
    def errors(self):
        if self.lambda_ref is None:
            return None
        return np.abs(self.lambdas - self.lambda_ref)

    @property
    def final(self):
        return self.records[-1]

    def check(self):
        """Raise ``AssertionError`` if iteration numbers or DOF counts are inconsistent."""
        it = self.column("iter")
        assert np.array_equal(it, np.arange(1, len(it) + 1)), "iterations not consecutive from 1"
        assert np.all(np.diff(self.dofs) > 0), "DOF count not strictly increasing"
        return self


# --------------------------------------------------------------------------
# generic adaptive loop
# --------------------------------------------------------------------------


def _stop_reason(config, rec, converged):
    if converged:
        return "converged"
    if config.eta_tol is not None and rec.eta_global <= config.eta_tol:
        return "eta_tol"
    if config.max_dof is not None and rec.dofs >= config.max_dof:
        return "max_dof"
    if config.max_iters is not None and rec.iter >= config.max_iters:
        return "max_iters"
    return None


def _adaptive(config: RunConfig, update: Callable, tolerate=(), callback=None):
    """Shared estimate/mark/refine loop.

    ``update(forms, pair, u_prolonged)`` returns ``(new_pair, n_solves)``.
    ``callback(level, mesh, pair, indicators)`` is called after each record.
    """
    t0 = time.perf_counter()
    tol = config.tolerances
    params = MarkParams(config.omega)
    history = ConvergenceHistory(config.algorithm, config.k, config.reference())

    mesh = config.build_initial_mesh()
    forms = assemble(mesh)
    basis = solve_coarse(forms, config.k + 1, tol)
    pair = basis.pair(config.k)
    members, lam_hat = basis.cluster(config.k, tol.cluster_gap)
    history.cluster = tuple(members)
    lam_est = lam_hat if len(members) > 1 else pair.lam
    solves = 0
    level = 1
    while True:
        field_ = compute_indicators(mesh, pair.coeffs, lam_est)
        marked = mark(field_, params)
        rec = IterationRecord(
            level, mesh.n_vertices, pair.lam, field_.eta_global, len(marked), time.perf_counter() - t0, solves
        )
        history.records.append(rec)
        logger.info(
            "alg %s k=%d l=%d N=%d lambda=%.10f eta=%.3e marked=%d t=%.2fs",
            config.algorithm, config.k, level, rec.dofs, rec.lam, rec.eta_global, rec.marked_count, rec.wall_time_s,
        )
        if callback is not None:
            callback(level, mesh, pair, field_)
        history.stop_reason = _stop_reason(config, rec, marked.converged)
        if history.stop_reason:
            break
        fine = bisect(mesh, marked.ids)
        u0 = prolong(mesh, fine, pair.coeffs)
        forms = assemble(fine)
        try:
            pair, solves = update(forms, pair, u0)
        except tolerate as exc:
            history.error = f"iteration {level + 1}: {exc}"
            history.stop_reason = "error"
            logger.warning("run aborted: %s", history.error)
            break
        except SteklovError as exc:
            exc.iteration = level + 1
            logger.error("iteration %d failed: %s", level + 1, exc)
            raise
        mesh = fine
        lam_est = pair.lam
        level += 1
    history.final_mesh = mesh
    history.final_pair = pair
    return history


def run_algorithm_1(config: RunConfig, callback=None) -> ConvergenceHistory:
    """Full discrete eigensolve on every refined mesh."""
    tol = config.tolerances

    def update(forms, pair, u0):
        fact = factor_shifted(forms.K, forms.M, pair.lam, tol)
        new = shift_invert_eigs(forms, pair.lam, u0, tol, factor=fact)
        return new, fact.n_solves

    return _adaptive(config, update, callback=callback)


def run_algorithm_2(config: RunConfig, callback=None) -> ConvergenceHistory:
    """One inverse-iteration solve per refined mesh.

    Converges to the smallest eigenvalue regardless of ``k`` once rounding
    and mesh changes feed the first eigenvector into the iterate.  A
    degenerate start ends the run with a partial history.
    """

    def update(forms, pair, u0):
        fact = factor_spd(forms.K)
        new = inverse_step(forms, u0, factor=fact)
        return new, fact.n_solves

    return _adaptive(config, update, tolerate=(DegenerateStartError,), callback=callback)


def run_algorithm_3(config: RunConfig, callback=None) -> ConvergenceHistory:
    """One shifted-inverse solve per refined mesh, shifted by the previous eigenvalue."""
    tol = config.tolerances

    def update(forms, pair, u0):
        fact = factor_shifted(forms.K, forms.M, pair.lam, tol)
        new = shifted_inverse_step(forms, pair.lam, u0, tol, factor=fact)
        return new, fact.n_solves

    return _adaptive(config, update, callback=callback)


def run_scheme_1(config: RunConfig, meshes) -> DiscreteEigenpair:
    """Multiscale discretization on a prescribed nested mesh sequence.

    Eigensolve on ``meshes[0]``, then one shifted-inverse step on each finer
    mesh, shifted by the previous Rayleigh quotient.
    """
    meshes = list(meshes)
    if not meshes:
        raise ValueError("need at least one mesh")
    tol = config.tolerances
    forms = assemble(meshes[0])
    pair = solve_coarse(forms, config.k + 1, tol).pair(config.k)
    for coarse, fine in zip(meshes[:-1], meshes[1:]):
        u0 = prolong(coarse, fine, pair.coeffs)
        pair = shifted_inverse_step(assemble(fine), pair.lam, u0, tol)
    return pair


def run(config: RunConfig, callback=None) -> ConvergenceHistory:
    """Dispatch on ``config.algorithm`` (``"scheme1"`` is not an adaptive loop)."""
    runners = {"1": run_algorithm_1, "2": run_algorithm_2, "3": run_algorithm_3}
    if config.algorithm not in runners:
        raise ValueError("use run_scheme_1 with an explicit mesh sequence for scheme1")
    return runners[config.algorithm](config, callback)
