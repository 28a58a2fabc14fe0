"""Sparse symmetric matrices, SPD and shifted factorizations.

Matrices are ``scipy.sparse.csr_matrix`` with both triangles stored.  Direct
solves go through SuperLU with a symmetric minimum-degree ordering
(``MMD_AT_PLUS_A``) and symmetric-mode pivoting, which keeps the diagonal
pivots of the ``LDL^T``-equivalent factorization observable.  The matrix is
first renumbered by reverse Cuthill-McKee: minimum degree breaks ties by
input order, and the append-midpoints numbering of refined meshes otherwise
costs several times the fill on corner-graded meshes.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.sparse.csgraph import reverse_cuthill_mckee

from .config import DEFAULT_TOLERANCES, SolverTolerances
from .errors import NotSPDError, ShiftSingularError

logger = logging.getLogger(__name__)

SPD = "spd"
INDEFINITE = "symmetric-indefinite"
ITERATIVE = "spd-cg"


def as_sparse_sym(A) -> sp.csr_matrix:
    """Canonical CSR form: summed duplicates, sorted indices, no stored zeros."""
    A = sp.csr_matrix(A, dtype=float, copy=True)
    A.sum_duplicates()
    A.eliminate_zeros()
    A.sort_indices()
    if A.shape[0] != A.shape[1]:
        raise ValueError("matrix must be square")
    pattern = A.copy()
    pattern.data[:] = 1.0
    if (pattern != pattern.T).nnz:
        raise ValueError("matrix is not structurally symmetric")
    return A


def matvec(A, x):
    x = np.asarray(x, dtype=float)
    if x.shape[0] != A.shape[1]:
        raise ValueError(f"dimension mismatch: matrix is {A.shape}, vector has {x.shape[0]} rows")
    return A @ x


@dataclass
class Factorization:
    """Reusable solver for ``A x = b``.

    ``kind`` is one of ``"spd"``, ``"symmetric-indefinite"`` or ``"spd-cg"``.
    ``shift`` records the shift actually used by :func:`factor_shifted`
    (after any perturbation retries).
    """

    matrix: sp.csr_matrix
    kind: str
    _solver: object = field(repr=False)
    shift: float | None = None
    shifts_tried: tuple = ()
    n_solves: int = 0
    _lu: object = field(default=None, repr=False)

    def solve(self, b):
        b = np.asarray(b, dtype=float)
        if b.shape[0] != self.matrix.shape[0]:
            raise ValueError("right-hand side has the wrong length")
        self.n_solves += 1
        return self._solver(b)

    def pivots(self):
        """Diagonal pivots ``D`` of the symmetric factorization, if direct."""
        if self._lu is None:
            raise TypeError("iterative factorizations have no pivots")
        if not np.all(self._lu.perm_r == self._lu.perm_c):
            raise ValueError("off-diagonal pivoting happened; pivots are not symmetric")
        return self._lu.U.diagonal()

    def inertia(self):
        """``(n_negative, n_positive)`` pivots; by Sylvester, eigenvalue counts of ``A``."""
        d = self.pivots()
        return int(np.sum(d < 0)), int(np.sum(d > 0))


class _PermutedLU:
    """SuperLU factors of ``A[p][:, p]`` presented as a solver for ``A``."""

    def __init__(self, lu, p):
        self._inner = lu
        self._p = p

    @property
    def perm_r(self):
        return self._inner.perm_r

    @property
    def perm_c(self):
        return self._inner.perm_c

    @property
    def U(self):
        return self._inner.U

    def solve(self, b):
        x = np.empty_like(b)
        x[self._p] = self._inner.solve(b[self._p])
        return x


def _splu_symmetric(A, pivot_threshold):
    A = sp.csr_matrix(A)
    p = reverse_cuthill_mckee(A, symmetric_mode=True)
    lu = spla.splu(
        A[p][:, p].tocsc(),
        permc_spec="MMD_AT_PLUS_A",
        diag_pivot_thresh=pivot_threshold,
        options=dict(SymmetricMode=True),
    )
    return _PermutedLU(lu, p)


def factor_spd(A, method="direct", tol: SolverTolerances = DEFAULT_TOLERANCES) -> Factorization:
    """Factor a symmetric positive definite matrix.

    ``method="direct"`` runs SuperLU with diagonal pivoting only and rejects
    any non-positive pivot.  ``method="cg"`` returns a Jacobi-preconditioned
    conjugate-gradient solver instead (low-memory fallback).
    """
    A = sp.csr_matrix(A)
    if method == "cg":
        return _cg_factorization(A, tol)
    if method != "direct":
        raise ValueError(f"unknown method {method!r}")
    try:
        lu = _splu_symmetric(A, 0.0)
    except RuntimeError as exc:
        raise NotSPDError(f"factorization broke down: {exc}") from exc
    d = lu.U.diagonal()
    if not np.all(lu.perm_r == lu.perm_c) or np.any(d <= 0) or not np.all(np.isfinite(d)):
        raise NotSPDError("non-positive pivot encountered; matrix is not SPD")
    return Factorization(A, SPD, lu.solve, shift=0.0, _lu=lu)


def _cg_factorization(A, tol):
    diag = A.diagonal()
    if np.any(diag <= 0):
        raise NotSPDError("non-positive diagonal entry")
    n = A.shape[0]
    precond = spla.LinearOperator((n, n), matvec=lambda x: x / diag)
    maxiter = tol.cg_maxiter_factor * n

    def solve(b):
        x, info = spla.cg(A, b, rtol=tol.cg_rtol, atol=0.0, maxiter=maxiter, M=precond)
        if info != 0:
            raise NotSPDError(f"conjugate gradient did not converge (info={info})")
        return x

    return Factorization(A, ITERATIVE, solve, shift=0.0)


def factor_shifted(K, M, sigma: float, tol: SolverTolerances = DEFAULT_TOLERANCES) -> Factorization:
    """Factor ``K - sigma*M`` (symmetric, possibly indefinite).

    On a singular pivot the shift is retried as ``sigma*(1 + 1e-8*j)`` for
    ``j = 1..3``; a :class:`ShiftSingularError` carrying all tried shifts is
    raised if every attempt fails.
    """
    if K.shape != M.shape:
        raise ValueError("K and M must have the same shape")
    if sigma == 0.0:
        fact = factor_spd(K, tol=tol)
        fact.shifts_tried = (0.0,)
        return fact
    tried = []
    for j in range(tol.shift_retries + 1):
        s = sigma * (1.0 + tol.shift_retry_step * j)
        tried.append(s)
        A = sp.csr_matrix(K - s * M)
        try:
            lu = _splu_symmetric(A, 0.01)
        except RuntimeError as exc:
            logger.info("shifted factorization singular at sigma=%.17g (%s)", s, exc)
            continue
        d = lu.U.diagonal()
        if np.all(np.isfinite(d)) and np.all(d != 0):
            return Factorization(A, INDEFINITE, lu.solve, shift=s, shifts_tried=tuple(tried), _lu=lu)
    raise ShiftSingularError(f"K - sigma*M singular for every shift tried: {tried}", tried)
