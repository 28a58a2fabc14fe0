"""Eigensolvers for the pencil ``K u = λ M u``.

``M`` is only supported on boundary vertices, so the pencil has infinitely
many infinite eigenvalues.  All Krylov work is therefore done on
``f -> K^{-1} M f`` (or its shifted variant ``f -> (K - σM)^{-1} M f``), both
self-adjoint in the energy inner product ``a(u, v) = u^T K v``; the interior
null space of ``M`` maps to zero and never pollutes the wanted end of the
spectrum.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.linalg as sla

from .assembly import FormPair
from .config import DEFAULT_TOLERANCES, SolverTolerances
from .errors import BoundaryNullError, DegenerateStartError, EigensolverStagnationError, StructuralError
from .linalg import Factorization, factor_shifted, factor_spd
from .mesh import TriangleMesh

logger = logging.getLogger(__name__)

_GOLDEN = 0.6180339887498949


@dataclass(frozen=True)
class DiscreteEigenpair:
    """Approximate eigenpair with ``||u||_a = 1``.

    ``residual`` is ``||K u - λ M u||_2 / ||K u||_2``.
    """

    lam: float
    coeffs: np.ndarray
    residual: float


@dataclass(frozen=True)
class EigenBasis:
    """a-orthonormal eigenpairs in ascending order of ``λ``."""

    pairs: tuple

    def __len__(self):
        return len(self.pairs)

    def __getitem__(self, i):
        return self.pairs[i]

    @property
    def lambdas(self):
        return np.array([p.lam for p in self.pairs])

    @property
    def vectors(self):
        return np.column_stack([p.coeffs for p in self.pairs])

    def pair(self, k):
        """The ``k``-th eigenpair, 1-based."""
        return self.pairs[k - 1]

    def cluster(self, k, gap=DEFAULT_TOLERANCES.cluster_gap):
        """1-based indices of eigenvalues clustered with ``λ_k`` and their mean.

        Neighbouring eigenvalues whose relative gap is below ``gap`` are
        chained into one cluster.
        """
        lam = self.lambdas
        lo = hi = k - 1
        while lo > 0 and abs(lam[lo] - lam[lo - 1]) <= gap * abs(lam[lo]):
            lo -= 1
        while hi + 1 < len(lam) and abs(lam[hi + 1] - lam[hi]) <= gap * abs(lam[hi]):
            hi += 1
        members = list(range(lo + 1, hi + 2))
        return members, float(np.mean(lam[lo : hi + 1]))


# --------------------------------------------------------------------------
# helpers
# --------------------------------------------------------------------------


def start_vector(n):
    """Deterministic start with every component nonzero and no mesh symmetry.

    A quadratic Weyl sequence: a linear one satisfies ``s_a + s_d = s_b + s_c``
    whenever ``a + d = b + c``, which makes it orthogonal to antisymmetric
    eigenvectors of symmetric grids.
    """
    i = np.arange(1, n + 1, dtype=float)
    return 1.0 + (np.mod(i * i * _GOLDEN, 1.0) - 0.5)


def _fix_sign(forms, u):
    trace = float(np.sum(forms.M @ u))
    if trace < 0 or (trace == 0 and u[np.flatnonzero(u)[0]] < 0):
        return -u
    return u


def _residual(forms, lam, u):
    Ku = forms.K @ u
    return float(np.linalg.norm(Ku - lam * (forms.M @ u)) / np.linalg.norm(Ku))


def rayleigh_quotient(forms: FormPair, u) -> float:
    """``a(u, u) / b(u, u)``."""
    u = np.asarray(u, dtype=float)
    b = forms.b(u)
    if not b > 0:
        raise BoundaryNullError("b(u, u) = 0: vector vanishes on the boundary")
    return forms.a(u) / b


def _finish(forms, u_tilde, what):
    norm = forms.a_norm(u_tilde)
    if not np.isfinite(norm) or norm == 0.0:
        raise DegenerateStartError(f"{what}: solution has zero energy norm")
    u = _fix_sign(forms, u_tilde / norm)
    lam = rayleigh_quotient(forms, u)
    return DiscreteEigenpair(lam, u, _residual(forms, lam, u))


# --------------------------------------------------------------------------
# Krylov engine
# --------------------------------------------------------------------------


class _Subspace:
    """Energy-orthonormal basis ``V`` with cached ``K V`` and ``M V``."""

    def __init__(self, forms, capacity):
        n = forms.n
        self.forms = forms
        self.V = np.empty((n, capacity))
        self.KV = np.empty((n, capacity))
        self.MV = np.empty((n, capacity))
        self.m = 0

    def add(self, w):
        """Orthogonalize ``w`` against ``V`` and append; False if dependent.

        Gram-Schmidt passes repeat until the norm stops dropping sharply
        ("twice is enough", at most three).  ``K w`` is recomputed after each
        pass instead of updated, since the update loses all relative
        accuracy once ``w`` has shrunk by many orders of magnitude.
        """
        K = self.forms.K
        V, KV = self.V[:, : self.m], self.KV[:, : self.m]
        Kw = K @ w
        norm0 = norm = np.sqrt(max(w @ Kw, 0.0))
        if norm0 == 0.0:
            return False
        for _ in range(3):
            w = w - V @ (KV.T @ w)
            Kw = K @ w
            prev, norm = norm, np.sqrt(max(w @ Kw, 0.0))
            if norm > 0.5 * prev:
                break
        if norm <= 1e-10 * norm0:
            return False
        self.V[:, self.m] = w / norm
        self.KV[:, self.m] = Kw / norm
        self.MV[:, self.m] = self.forms.M @ self.V[:, self.m]
        self.m += 1
        return True

    def ritz(self):
        V, MV = self.V[:, : self.m], self.MV[:, : self.m]
        H = V.T @ MV
        mu, Y = np.linalg.eigh(0.5 * (H + H.T))
        return mu, Y

    def compress(self, Y):
        m = Y.shape[1]
        self.V[:, :m] = self.V[:, : self.m] @ Y
        self.KV[:, :m] = self.KV[:, : self.m] @ Y
        self.MV[:, :m] = self.MV[:, : self.m] @ Y
        self.m = m


def _krylov_eigs(
    forms: FormPair,
    apply_op: Callable,
    start,
    select: Callable,
    want: int,
    max_dim: int,
    max_restarts: int,
    tol: float,
):
    """Thick-restart Lanczos on an energy-self-adjoint operator.

    ``select(mu)`` returns indices into the Ritz values ``mu`` (eigenvalues of
    ``V^T M V``, i.e. ``1/λ``) ordered by preference; the first ``want`` are
    the target.  Returns ``(lams, X, residuals)`` for the targets.
    """
    n = forms.n
    max_dim = min(max_dim, n)
    if want > max_dim:
        raise ValueError("requested more eigenpairs than the subspace can hold")
    S = _Subspace(forms, max_dim)
    if not S.add(np.asarray(start, dtype=float)):
        S.add(start_vector(n))
    nxt = S.V[:, 0]
    injections = 0
    restarts = 0
    while True:
        grew = False
        while S.m < max_dim:
            w = apply_op(nxt)
            if not S.add(w):
                # invariant subspace: continue from a fresh direction
                injections += 1
                probe = np.roll(start_vector(n), injections) * (1 + 0.1 * np.cos(np.arange(n) * injections))
                if not S.add(probe):
                    break
            nxt = S.V[:, S.m - 1]
            grew = True
            if S.m >= want + 1 and (S.m % 4 == 0 or S.m == max_dim):
                done, out = _check(S, select, want, tol)
                if done:
                    return out
        done, out = _check(S, select, want, tol)
        if done:
            return out
        if S.m == n or not grew and S.m < max_dim:
            lams, _, res = out
            raise EigensolverStagnationError(f"full space exhausted without convergence (residuals {res})")
        if restarts >= max_restarts:
            lams, _, res = out
            raise EigensolverStagnationError(
                f"no convergence after {restarts} restarts: λ={lams}, residuals={res}"
            )
        restarts += 1
        mu, Y = S.ritz()
        order = select(mu)
        keep = order[: min(max_dim - 1, max(want + 2, max_dim // 2))]
        S.compress(Y[:, keep])
        nxt = S.V[:, int(np.argmax(out[2]))]
        logger.debug("thick restart %d with %d vectors", restarts, len(keep))


def _check(S, select, want, tol):
    mu, Y = S.ritz()
    idx = select(mu)[:want]
    if len(idx) < want:
        return False, (np.array([]), None, np.array([np.inf]))
    Yw = Y[:, idx]
    lams = 1.0 / mu[idx]
    KX = S.KV[:, : S.m] @ Yw
    MX = S.MV[:, : S.m] @ Yw
    res = np.linalg.norm(KX - MX * lams, axis=0) / np.linalg.norm(KX, axis=0)
    X = S.V[:, : S.m] @ Yw
    return bool(np.all(res <= tol)), (lams, X, res)


def _positive(mu):
    return mu > 1e-14 * max(1.0, float(np.max(np.abs(mu))))


# --------------------------------------------------------------------------
# public solvers
# --------------------------------------------------------------------------


def solve_coarse(
    forms: FormPair,
    count: int,
    tol: SolverTolerances = DEFAULT_TOLERANCES,
    factor: Factorization | None = None,
) -> EigenBasis:
    """The ``count`` smallest eigenpairs of ``K u = λ M u``.

    Lanczos with full reorthogonalization on ``K^{-1} M`` in the energy inner
    product; Krylov dimension capped at ``5*count + 50`` per restart.
    """
    n = forms.n
    if count < 1:
        raise ValueError("count must be >= 1")
    if n < count + 2:
        raise ValueError(f"problem of size {n} too small for {count} eigenpairs")
    fact = factor or factor_spd(forms.K)

    def select(mu):
        pos = np.flatnonzero(_positive(mu))
        return pos[np.argsort(-mu[pos], kind="stable")]

    lams, X, res = _krylov_eigs(
        forms,
        lambda f: fact.solve(forms.M @ f),
        start_vector(n),
        select,
        count,
        5 * count + 50,
        tol.eig_max_restarts,
        tol.eig_residual,
    )
    pairs = []
    for j in np.argsort(lams, kind="stable"):
        u = X[:, j] / forms.a_norm(X[:, j])
        u = _fix_sign(forms, u)
        lam = rayleigh_quotient(forms, u)
        pairs.append(DiscreteEigenpair(lam, u, _residual(forms, lam, u)))
    return EigenBasis(tuple(pairs))


def shift_invert_eigs(
    forms: FormPair,
    sigma: float,
    start=None,
    tol: SolverTolerances = DEFAULT_TOLERANCES,
    factor: Factorization | None = None,
) -> DiscreteEigenpair:
    """The eigenpair whose eigenvalue is closest to ``sigma``.

    Shift-invert Lanczos on ``(K - σM)^{-1} M``; a good ``start`` (e.g. the
    prolonged eigenvector of the previous mesh) makes it converge in a
    handful of solves.
    """
    fact = factor or factor_shifted(forms.K, forms.M, sigma, tol)
    s = fact.shift

    def select(mu):
        pos = np.flatnonzero(_positive(mu))
        return pos[np.argsort(np.abs(1.0 / mu[pos] - s), kind="stable")]

    if start is None:
        start = start_vector(forms.n)
    lams, X, res = _krylov_eigs(
        forms,
        lambda f: fact.solve(forms.M @ f),
        start,
        select,
        1,
        min(forms.n, 20),
        tol.shift_invert_max_restarts,
        tol.eig_residual,
    )
    u = _fix_sign(forms, X[:, 0] / forms.a_norm(X[:, 0]))
    lam = rayleigh_quotient(forms, u)
    return DiscreteEigenpair(lam, u, _residual(forms, lam, u))


def shifted_inverse_step(
    forms: FormPair,
    shift: float,
    start,
    tol: SolverTolerances = DEFAULT_TOLERANCES,
    factor: Factorization | None = None,
) -> DiscreteEigenpair:
    """One shifted inverse iteration: solve ``(K - shift*M) ũ = M start`` once.

    Returns ``ũ / ||ũ||_a`` with its Rayleigh quotient.
    """
    start = np.asarray(start, dtype=float)
    rhs = forms.M @ start
    if not np.any(rhs):
        raise DegenerateStartError("start vector vanishes on the boundary")
    fact = factor or factor_shifted(forms.K, forms.M, shift, tol)
    return _finish(forms, fact.solve(rhs), "shifted inverse step")


def inverse_step(
    forms: FormPair,
    start,
    factor: Factorization | None = None,
) -> DiscreteEigenpair:
    """One inverse iteration: solve ``K ũ = M start``; return ``ũ/||ũ||_a``."""
    start = np.asarray(start, dtype=float)
    rhs = forms.M @ start
    if not np.any(rhs):
        raise DegenerateStartError("start vector vanishes on the boundary")
    fact = factor or factor_spd(forms.K)
    return _finish(forms, fact.solve(rhs), "inverse step")


def prolong(coarse: TriangleMesh, fine: TriangleMesh, coeffs) -> np.ndarray:
    """Interpolate a P1 function from ``coarse`` onto its refinement ``fine``."""
    coeffs = np.asarray(coeffs, dtype=float)
    if len(coeffs) != coarse.n_vertices:
        raise ValueError("coefficient vector does not match the coarse mesh")
    if fine is coarse:
        return coeffs.copy()
    if fine.parent_edges is None or not fine.is_refinement_of(coarse):
        raise StructuralError("fine mesh is not a bisection refinement of the coarse mesh")
    nc = coarse.n_vertices
    pe = fine.parent_edges
    out = np.concatenate([coeffs, np.empty(len(pe))])
    # parents may themselves be new vertices (composed refinements); resolve
    # in sweeps, each handling every midpoint whose endpoints are known
    todo = np.arange(len(pe))
    known = np.zeros(fine.n_vertices, dtype=bool)
    known[:nc] = True
    while todo.size:
        ready = known[pe[todo, 0]] & known[pe[todo, 1]]
        if not ready.any():
            raise StructuralError("cyclic vertex ancestry")
        idx = todo[ready]
        out[nc + idx] = 0.5 * (out[pe[idx, 0]] + out[pe[idx, 1]])
        known[nc + idx] = True
        todo = todo[~ready]
    return out


def dense_eigenpairs(forms: FormPair):
    """Brute-force reference: all finite eigenpairs via dense ``M u = μ K u``."""
    K = forms.K.toarray()
    M = forms.M.toarray()
    mu, U = sla.eigh(M, K)
    keep = mu > 1e-12 * mu.max()
    lam = 1.0 / mu[keep]
    U = U[:, keep]
    order = np.argsort(lam)
    return lam[order], U[:, order]
