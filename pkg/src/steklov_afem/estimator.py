"""Residual a posteriori error indicators.

For a P1 iterate ``(λ, u)`` the indicator of a triangle ``T`` is

    η_T² = h_T² ||u||²_{0,T} + Σ_{ℓ ⊂ ∂T} |ℓ| ||J_ℓ||²_{0,ℓ}

with ``J_ℓ = ½ [[∂u/∂n]]`` on interior edges and ``J_ℓ = λu - ∂u/∂n`` on
boundary edges.  ``Δu = 0`` elementwise for P1, so no volume residual beyond
``h_T ||u||`` appears.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .assembly import p1_gradients
from .mesh import EdgeTable, TriangleMesh, edge_tables

# 2-point Gauss rule on [0, 1]; exact for the quadratic (λu - ∂u/∂n)²
_GAUSS_X = np.array([0.5 - 0.5 / np.sqrt(3.0), 0.5 + 0.5 / np.sqrt(3.0)])
_GAUSS_W = np.array([0.5, 0.5])


@dataclass(frozen=True)
class IndicatorField:
    eta: np.ndarray
    eta_global: float

    def __len__(self):
        return len(self.eta)


def global_indicator(values) -> IndicatorField:
    """Root-sum-square of the local indicators."""
    eta = np.asarray(values, dtype=float)
    if np.any(eta < 0):
        raise ValueError("indicators must be nonnegative")
    return IndicatorField(eta, float(np.sqrt(np.sum(eta**2))))


def gradients(mesh: TriangleMesh, u):
    """Constant gradient of the P1 function ``u`` on each triangle, ``(T, 2)``."""
    _, g = p1_gradients(mesh.vertices[mesh.triangles])
    return np.einsum("tik,ti->tk", g, np.asarray(u, dtype=float)[mesh.triangles])


def _edge_sq_norm(length, ja, jb):
    vals = np.outer(ja, 1 - _GAUSS_X) + np.outer(jb, _GAUSS_X)
    return length * (vals**2 @ _GAUSS_W)


def compute_indicators(mesh: TriangleMesh, u, lam: float, tables: EdgeTable | None = None) -> IndicatorField:
    """All ``η_T`` for the iterate ``(lam, u)`` plus the global ``η_Ω``."""
    u = np.asarray(u, dtype=float)
    tables = tables or edge_tables(mesh)
    grad = gradients(mesh, u)
    ut = u[mesh.triangles]
    l2_sq = mesh.areas / 12.0 * (np.sum(ut**2, axis=1) + np.sum(ut, axis=1) ** 2)
    eta2 = mesh.diameters**2 * l2_sq

    bnd = tables.boundary
    n, L = tables.normals, tables.lengths
    t_in, t_out = tables.t_in, tables.t_out

    inner = ~bnd
    jump = 0.5 * np.einsum("ij,ij->i", grad[t_out[inner]] - grad[t_in[inner]], n[inner])
    c_inner = L[inner] ** 2 * jump**2
    eta2 += np.bincount(t_in[inner], c_inner, minlength=mesh.n_triangles)
    eta2 += np.bincount(t_out[inner], c_inner, minlength=mesh.n_triangles)

    e = tables.edges[bnd]
    dn = np.einsum("ij,ij->i", grad[t_in[bnd]], n[bnd])
    ja = lam * u[e[:, 0]] - dn
    jb = lam * u[e[:, 1]] - dn
    c_bnd = L[bnd] * _edge_sq_norm(L[bnd], ja, jb)
    eta2 += np.bincount(t_in[bnd], c_bnd, minlength=mesh.n_triangles)
    return global_indicator(np.sqrt(eta2))


# --------------------------------------------------------------------------
# single-edge / single-triangle evaluation
# --------------------------------------------------------------------------


def jump_residual(mesh: TriangleMesh, tables: EdgeTable, u, lam: float, edge: int):
    """Values of ``J_ℓ`` at the two endpoints of ``edge`` (equal on interior edges)."""
    if not 0 <= edge < len(tables):
        raise IndexError(f"unknown edge id {edge}")
    u = np.asarray(u, dtype=float)
    o = tables[edge]
    g_in = _triangle_gradient(mesh, u, o.in_triangle)
    if o.out_triangle >= 0:
        g_out = _triangle_gradient(mesh, u, o.out_triangle)
        j = 0.5 * float(np.dot(g_out - g_in, o.normal))
        return j, j
    dn = float(np.dot(g_in, o.normal))
    a, b = tables.edges[edge]
    return lam * u[a] - dn, lam * u[b] - dn


def local_indicator(mesh: TriangleMesh, u, lam: float, triangle: int, tables: EdgeTable | None = None) -> float:
    """``η_T`` for one triangle, evaluated edge by edge."""
    tables = tables or edge_tables(mesh)
    u = np.asarray(u, dtype=float)
    tri = mesh.triangles[triangle]
    area = mesh.areas[triangle]
    mass = area / 12.0 * (np.eye(3) + np.ones((3, 3)))
    vol = mesh.diameters[triangle] ** 2 * float(u[tri] @ mass @ u[tri])
    edge_part = 0.0
    for e in mesh.elem2edge[triangle]:
        ja, jb = jump_residual(mesh, tables, u, lam, int(e))
        length = tables.lengths[e]
        edge_part += length * float(_edge_sq_norm(length, np.array([ja]), np.array([jb]))[0])
    return float(np.sqrt(vol + edge_part))


def _triangle_gradient(mesh, u, t):
    xy = mesh.vertices[mesh.triangles[t]]
    A = np.array([xy[1] - xy[0], xy[2] - xy[0]])
    du = np.array([u[mesh.triangles[t][1]] - u[mesh.triangles[t][0]], u[mesh.triangles[t][2]] - u[mesh.triangles[t][0]]])
    return np.linalg.solve(A, du)
