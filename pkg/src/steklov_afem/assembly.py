"""P1 assembly of ``a(u,v) = ∫ ∇u·∇v + uv`` and ``b(u,v) = ∫_∂Ω uv``."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import GeometryError, StructuralError
from .mesh import TriangleMesh

_P1_MASS_PATTERN = np.array([[2.0, 1.0, 1.0], [1.0, 2.0, 1.0], [1.0, 1.0, 2.0]])
_EDGE_MASS_PATTERN = np.array([[2.0, 1.0], [1.0, 2.0]])


@dataclass(frozen=True)
class DofMap:
    """One degree of freedom per mesh vertex."""

    mesh: TriangleMesh
    total_dofs: int
    boundary_dofs: np.ndarray

    @classmethod
    def from_mesh(cls, mesh):
        return cls(mesh, mesh.n_vertices, mesh.boundary_vertices)


@dataclass(frozen=True)
class FormPair:
    """Stiffness ``K`` (form a) and boundary mass ``M`` (form b) as CSR matrices."""

    K: sp.csr_matrix
    M: sp.csr_matrix

    @property
    def n(self):
        return self.K.shape[0]

    def a(self, u, v=None):
        v = u if v is None else v
        return float(u @ (self.K @ v))

    def b(self, u, v=None):
        v = u if v is None else v
        return float(u @ (self.M @ v))

    def a_norm(self, u):
        return float(np.sqrt(max(self.a(u), 0.0)))

    def b_norm(self, u):
        return float(np.sqrt(max(self.b(u), 0.0)))


def element_stiffness(coords) -> np.ndarray:
    """``∫_T ∇φ_i·∇φ_j + φ_i φ_j`` for the P1 basis on one triangle.

    >>> element_stiffness([[0, 0], [1, 0], [0, 1]]).round(6)[0]
    array([1.083333, -0.458333, -0.458333])
    """
    grad, mass = element_matrices(np.asarray(coords, dtype=float)[None])
    return grad[0] + mass[0]


def element_matrices(xy):
    """Gradient and mass parts of the element matrix for a stack of triangles.

    Parameters
    ----------
    xy : (T, 3, 2) array
        Vertex coordinates, counterclockwise.

    Returns
    -------
    grad, mass : (T, 3, 3) arrays
    """
    area, g = p1_gradients(xy)
    grad = area[:, None, None] * np.einsum("tik,tjk->tij", g, g)
    mass = (area / 12.0)[:, None, None] * _P1_MASS_PATTERN
    return grad, mass


def p1_gradients(xy):
    """Signed areas and constant barycentric gradients, shape ``(T, 3, 2)``."""
    e0 = xy[:, 2] - xy[:, 1]
    e1 = xy[:, 0] - xy[:, 2]
    e2 = xy[:, 1] - xy[:, 0]
    area = 0.5 * (e2[:, 0] * (-e1[:, 1]) - e2[:, 1] * (-e1[:, 0]))
    if np.any(area <= 0):
        raise GeometryError("degenerate or clockwise triangle")
    # ∇φ_i is the inward normal of the opposite edge scaled by 1/(2|T|)
    edges = np.stack([e0, e1, e2], axis=1)
    g = np.stack([-edges[..., 1], edges[..., 0]], axis=-1) / (2.0 * area)[:, None, None]
    return area, g


def edge_boundary_mass(coords) -> np.ndarray:
    """``(|ℓ|/6) [[2, 1], [1, 2]]`` for the linear basis on one edge."""
    p = np.asarray(coords, dtype=float)
    length = float(np.linalg.norm(p[1] - p[0]))
    if length == 0.0:
        raise GeometryError("zero-length edge")
    return length / 6.0 * _EDGE_MASS_PATTERN


def _triangle_block(mesh, rows):
    tri = mesh.triangles[rows]
    grad, mass = element_matrices(mesh.vertices[tri])
    local = (grad + mass).reshape(-1)
    i = np.repeat(tri, 3, axis=1).reshape(-1)
    j = np.tile(tri, (1, 3)).reshape(-1)
    return i, j, local


def assemble(mesh: TriangleMesh, dofs: DofMap | None = None, workers: int = 1) -> FormPair:
    """Assemble the stiffness and boundary-mass matrices on ``mesh``.

    With ``workers > 1`` element blocks are integrated on a thread pool; the
    COO-to-CSR conversion sums contributions per entry, so the result agrees
    with serial assembly up to floating-point reassociation.
    """
    if dofs is None:
        dofs = DofMap.from_mesh(mesh)
    if dofs.mesh is not mesh and dofs.total_dofs != mesh.n_vertices:
        raise StructuralError("DofMap does not belong to this mesh")
    n = mesh.n_vertices
    nt = mesh.n_triangles
    if workers <= 1:
        parts = [_triangle_block(mesh, slice(0, nt))]
    else:
        bounds = np.linspace(0, nt, workers + 1).astype(int)
        with ThreadPoolExecutor(workers) as pool:
            parts = list(pool.map(lambda k: _triangle_block(mesh, slice(bounds[k], bounds[k + 1])), range(workers)))
    i = np.concatenate([p[0] for p in parts])
    j = np.concatenate([p[1] for p in parts])
    vals = np.concatenate([p[2] for p in parts])
    K = sp.csr_matrix((vals, (i, j)), shape=(n, n))
    K.sum_duplicates()
    K.sort_indices()

    bedges = mesh.edges[mesh.boundary_edge_mask]
    lengths = mesh.edge_lengths[mesh.boundary_edge_mask]
    if np.any(lengths == 0):
        raise GeometryError("zero-length boundary edge")
    bi = np.repeat(bedges, 2, axis=1).reshape(-1)
    bj = np.tile(bedges, (1, 2)).reshape(-1)
    bvals = ((lengths / 6.0)[:, None, None] * _EDGE_MASS_PATTERN).reshape(-1)
    M = sp.csr_matrix((bvals, (bi, bj)), shape=(n, n))
    M.sum_duplicates()
    M.sort_indices()
    return FormPair(K, M)


def dump_coo(A, path):
    """Write ``A`` as ``i j value`` lines (debugging aid)."""
    C = A.tocoo()
    with open(path, "w") as fh:
        for i, j, v in zip(C.row, C.col, C.data):
            fh.write(f"{i} {j} {v:.17g}\n")
