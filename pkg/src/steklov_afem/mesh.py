"""Conforming triangle meshes and newest-vertex bisection.

Triangles are stored counterclockwise as ``(p0, p1, p2)`` where ``p0`` is the
newest vertex and ``(p1, p2)`` is the refinement edge.  Local edge ``i`` of a
triangle is the edge opposite local vertex ``i``, so local edge 0 is always
the refinement edge.

Bisecting ``(p0, p1, p2)`` at the midpoint ``m`` of ``(p1, p2)`` produces
``(m, p0, p1)`` and ``(m, p2, p0)``; ``m`` becomes the newest vertex of both
children.
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass
from functools import cached_property
from typing import NamedTuple

import numpy as np

from .errors import GeometryError, StructuralError, UnsupportedDomainError

logger = logging.getLogger(__name__)

_uid_counter = itertools.count(1)


# --------------------------------------------------------------------------
# domains
# --------------------------------------------------------------------------


def _segments_cross(p, q, r, s):
    """Proper or touching intersection test for segments pq and rs."""

    def orient(a, b, c):
        return np.sign((b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]))

    def on_segment(a, b, c):
        return min(a[0], b[0]) <= c[0] <= max(a[0], b[0]) and min(a[1], b[1]) <= c[1] <= max(a[1], b[1])

    o1, o2, o3, o4 = orient(p, q, r), orient(p, q, s), orient(r, s, p), orient(r, s, q)
    if o1 != o2 and o3 != o4:
        return True
    return (
        (o1 == 0 and on_segment(p, q, r))
        or (o2 == 0 and on_segment(p, q, s))
        or (o3 == 0 and on_segment(r, s, p))
        or (o4 == 0 and on_segment(r, s, q))
    )


@dataclass(frozen=True)
class DomainSpec:
    """A simple polygon given by its vertices (the closing edge is implicit)."""

    polygon_vertices: np.ndarray
    name: str | None = None

    def __post_init__(self):
        pts = np.asarray(self.polygon_vertices, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 2 or len(pts) < 3:
            raise GeometryError("polygon needs at least three 2D vertices")
        if np.allclose(pts[0], pts[-1]):
            raise GeometryError("do not repeat the first vertex at the end of the polygon")
        n = len(pts)
        for i in range(n):
            for j in range(i + 1, n):
                if j == i + 1 or (i == 0 and j == n - 1):
                    continue
                if _segments_cross(pts[i], pts[(i + 1) % n], pts[j], pts[(j + 1) % n]):
                    raise GeometryError("polygon is not simple")
        if _signed_polygon_area(pts) < 0:
            pts = pts[::-1].copy()
        pts.setflags(write=False)
        object.__setattr__(self, "polygon_vertices", pts)

    @classmethod
    def unit_square(cls):
        return cls(np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]]), "square")

    @classmethod
    def lshape(cls):
        """``([0,1] x [0,1/2]) U ([0,1/2] x [1/2,1])``, reentrant corner at (1/2, 1/2)."""
        pts = [[0.0, 0.0], [1.0, 0.0], [1.0, 0.5], [0.5, 0.5], [0.5, 1.0], [0.0, 1.0]]
        return cls(np.array(pts), "lshape")

    @property
    def area(self):
        return _signed_polygon_area(self.polygon_vertices)

    @property
    def perimeter(self):
        pts = self.polygon_vertices
        return float(np.linalg.norm(np.roll(pts, -1, axis=0) - pts, axis=1).sum())

    def contains(self, points):
        """Even-odd point-in-polygon test (points on the boundary are unreliable)."""
        points = np.atleast_2d(points)
        x, y = points[:, 0], points[:, 1]
        inside = np.zeros(len(points), dtype=bool)
        pts = self.polygon_vertices
        for (x0, y0), (x1, y1) in zip(pts, np.roll(pts, -1, axis=0)):
            straddle = (y0 > y) != (y1 > y)
            with np.errstate(divide="ignore", invalid="ignore"):
                xcross = x0 + (y - y0) * (x1 - x0) / (y1 - y0)
            inside ^= straddle & (x < xcross)
        return inside


def _signed_polygon_area(pts):
    x, y = pts[:, 0], pts[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


# --------------------------------------------------------------------------
# mesh
# --------------------------------------------------------------------------


class EdgeOrientation(NamedTuple):
    edge: int
    normal: np.ndarray
    in_triangle: int
    out_triangle: int  # -1 on the boundary


@dataclass(frozen=True)
class EdgeTable:
    """Vectorized edge data; ``normals[e]`` points out of ``t_in[e]``.

    Interior edges: ``t_in < t_out``.  Boundary edges: ``t_out == -1`` and the
    normal is the outward domain normal.
    """

    edges: np.ndarray
    normals: np.ndarray
    lengths: np.ndarray
    t_in: np.ndarray
    t_out: np.ndarray

    @property
    def boundary(self):
        return self.t_out < 0

    def __len__(self):
        return len(self.edges)

    def __getitem__(self, e):
        return EdgeOrientation(int(e), self.normals[e], int(self.t_in[e]), int(self.t_out[e]))


class TriangleMesh:
    """Immutable conforming triangulation with bisection metadata.

    Parameters
    ----------
    vertices : (V, 2) array_like
    triangles : (T, 3) array_like of int
        Counterclockwise, refinement edge opposite the first vertex.
    generation : (T,) array_like of int, optional
        Number of bisections separating each triangle from the initial mesh.
    parent_edges : (V_new, 2) array, optional
        For a mesh produced by :func:`bisect`: the coarse edge whose midpoint
        each new vertex is.  New vertices are numbered after the coarse ones.
    parent_uid : int, optional
        ``uid`` of the mesh this one was refined from.
    """

    def __init__(self, vertices, triangles, generation=None, parent_edges=None, parent_uid=None):
        self.vertices = np.ascontiguousarray(vertices, dtype=float)
        self.triangles = np.ascontiguousarray(triangles, dtype=np.int64)
        if self.vertices.ndim != 2 or self.vertices.shape[1] != 2:
            raise StructuralError("vertices must have shape (V, 2)")
        if self.triangles.ndim != 2 or self.triangles.shape[1] != 3:
            raise StructuralError("triangles must have shape (T, 3)")
        if len(self.triangles) and (self.triangles.min() < 0 or self.triangles.max() >= len(self.vertices)):
            raise StructuralError("triangle references a vertex that does not exist")
        if generation is None:
            generation = np.zeros(len(self.triangles), dtype=np.int64)
        self.generation = np.ascontiguousarray(generation, dtype=np.int64)
        self.parent_edges = None if parent_edges is None else np.asarray(parent_edges, dtype=np.int64)
        self.parent_uid = parent_uid
        self.uid = next(_uid_counter)
        for arr in (self.vertices, self.triangles, self.generation):
            arr.setflags(write=False)
        if self.parent_edges is not None:
            self.parent_edges.setflags(write=False)

    @classmethod
    def from_arrays(cls, vertices, triangles):
        """Build a mesh from raw connectivity of unknown orientation.

        Triangles are reoriented counterclockwise and rotated so that the
        longest edge becomes the refinement edge.
        """
        vertices = np.asarray(vertices, dtype=float)
        tri = np.array(triangles, dtype=np.int64)
        xy = vertices[tri]
        area2 = _cross2(xy[:, 1] - xy[:, 0], xy[:, 2] - xy[:, 0])
        if np.any(area2 == 0):
            raise GeometryError("degenerate triangle in input")
        flip = area2 < 0
        tri[flip] = tri[flip][:, [0, 2, 1]]
        xy = vertices[tri]
        opp_len = np.stack(
            [np.linalg.norm(xy[:, (i + 2) % 3] - xy[:, (i + 1) % 3], axis=1) for i in range(3)], axis=1
        )
        start = np.argmax(opp_len, axis=1)
        idx = (start[:, None] + np.arange(3)[None, :]) % 3
        tri = np.take_along_axis(tri, idx, axis=1)
        return cls(vertices, tri)

    def __repr__(self):
        return f"TriangleMesh(V={self.n_vertices}, T={self.n_triangles})"

    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def n_triangles(self):
        return len(self.triangles)

    @property
    def n_edges(self):
        return len(self.edges)

    # -- topology ---------------------------------------------------------

    @cached_property
    def _edge_data(self):
        tri = self.triangles
        local = np.stack([tri[:, [1, 2]], tri[:, [2, 0]], tri[:, [0, 1]]], axis=1).reshape(-1, 2)
        local.sort(axis=1)
        nv = np.int64(self.n_vertices)
        keys, inverse, counts = np.unique(local[:, 0] * nv + local[:, 1], return_inverse=True, return_counts=True)
        edges = np.stack(np.divmod(keys, nv), axis=1)
        inverse = inverse.reshape(-1)
        if np.any(counts > 2):
            raise StructuralError("edge shared by more than two triangles")
        elem2edge = inverse.reshape(-1, 3)
        owner = np.repeat(np.arange(len(tri)), 3)
        # occurrences are already ordered by owner, so a stable sort keeps owners ascending per edge
        order = np.argsort(inverse, kind="stable")
        first = np.ones(len(order), dtype=bool)
        first[1:] = inverse[order][1:] != inverse[order][:-1]
        t_lo = np.full(len(edges), -1, dtype=np.int64)
        t_hi = np.full(len(edges), -1, dtype=np.int64)
        t_lo[inverse[order][first]] = owner[order][first]
        t_hi[inverse[order][~first]] = owner[order][~first]
        for arr in (edges, elem2edge, t_lo, t_hi):
            arr.setflags(write=False)
        return edges, elem2edge, t_lo, t_hi

    @property
    def edges(self):
        """``(E, 2)`` vertex pairs, sorted within each row and lexicographically."""
        return self._edge_data[0]

    @property
    def elem2edge(self):
        """``(T, 3)`` edge ids; column ``i`` is the edge opposite local vertex ``i``."""
        return self._edge_data[1]

    @property
    def edge2elem(self):
        """``(E, 2)`` adjacent triangles, lower id first, ``-1`` for a missing neighbor."""
        return np.stack(self._edge_data[2:], axis=1)

    @cached_property
    def boundary_edge_mask(self):
        return self._edge_data[3] < 0

    @cached_property
    def boundary_vertices(self):
        return np.unique(self.edges[self.boundary_edge_mask])

    # -- geometry ---------------------------------------------------------

    @cached_property
    def areas(self):
        xy = self.vertices[self.triangles]
        return 0.5 * _cross2(xy[:, 1] - xy[:, 0], xy[:, 2] - xy[:, 0])

    @cached_property
    def edge_lengths(self):
        v = self.vertices
        return np.linalg.norm(v[self.edges[:, 1]] - v[self.edges[:, 0]], axis=1)

    @cached_property
    def diameters(self):
        """``h_T``: longest edge of each triangle."""
        return self.edge_lengths[self.elem2edge].max(axis=1)

    @cached_property
    def angles(self):
        """``(T, 3)`` interior angle at each local vertex, in radians."""
        xy = self.vertices[self.triangles]
        out = np.empty((self.n_triangles, 3))
        for i in range(3):
            a = xy[:, (i + 1) % 3] - xy[:, i]
            b = xy[:, (i + 2) % 3] - xy[:, i]
            out[:, i] = np.arctan2(np.abs(_cross2(a, b)), np.einsum("ij,ij->i", a, b))
        return out

    @property
    def min_angle(self):
        return float(self.angles.min())

    @property
    def centroids(self):
        return self.vertices[self.triangles].mean(axis=1)

    # -- checks -----------------------------------------------------------

    def validate(self):
        """Raise if any mesh invariant is violated.

        Checks positive orientation, edge multiplicity and hanging vertices on
        edges that the topology classifies as boundary.
        """
        if np.any(self.areas <= 0):
            raise GeometryError("triangle with non-positive signed area")
        _ = self._edge_data
        bedges = self.edges[self.boundary_edge_mask]
        nbr: dict[int, set[int]] = {}
        for a, b in bedges:
            nbr.setdefault(int(a), set()).add(int(b))
            nbr.setdefault(int(b), set()).add(int(a))
        v = self.vertices
        for a, b in bedges:
            for c in nbr[int(a)] & nbr[int(b)]:
                pa, pb, pc = v[a], v[b], v[c]
                ab = pb - pa
                t = np.dot(pc - pa, ab) / np.dot(ab, ab)
                off = abs(_cross2(ab, pc - pa)) / np.linalg.norm(ab)
                if 0 < t < 1 and off <= 1e-12 * np.linalg.norm(ab):
                    raise StructuralError(f"hanging vertex {c} on edge ({a}, {b})")
        return self

    def is_refinement_of(self, coarse):
        return self.parent_uid == coarse.uid and self.n_vertices == coarse.n_vertices + len(self.parent_edges)


def _cross2(a, b):
    return a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0]


# --------------------------------------------------------------------------
# operations
# --------------------------------------------------------------------------


def generate_uniform(domain: DomainSpec, target_diameter: float) -> TriangleMesh:
    """Uniform right-triangle mesh of an axis-aligned rectilinear polygon.

    Each grid cell ``[x, x+s] x [y, y+s]`` is cut along its ``(1, 1)``
    diagonal; the diagonal (hypotenuse) is the refinement edge.  The cell
    size ``s`` is the largest value with ``s*sqrt(2) <= target_diameter`` that
    puts every polygon vertex on a grid node.
    """
    if target_diameter <= 0:
        raise ValueError("target_diameter must be positive")
    pts = domain.polygon_vertices
    seg = np.roll(pts, -1, axis=0) - pts
    if not np.all((np.abs(seg[:, 0]) == 0) | (np.abs(seg[:, 1]) == 0)):
        raise UnsupportedDomainError("built-in mesher only handles axis-aligned rectilinear polygons; supply a mesh file")
    lo = pts.min(axis=0)
    extent = pts.max(axis=0) - lo
    offsets = (pts - lo).ravel()
    width = float(extent.max())
    n0 = max(1, int(np.ceil(width * np.sqrt(2.0) / target_diameter - 1e-9)))
    for n in range(n0, 1000 * n0 + 1):
        s = width / n
        k = offsets / s
        if np.allclose(k, np.round(k), atol=1e-9):
            break
    else:
        raise UnsupportedDomainError("polygon vertices do not fit a uniform grid")
    nx, ny = (int(round(e / s)) for e in extent)
    i, j = np.meshgrid(np.arange(nx), np.arange(ny))
    i, j = i.ravel(), j.ravel()
    centers = lo + s * np.stack([i + 0.5, j + 0.5], axis=1)
    keep = domain.contains(centers)
    i, j = i[keep], j[keep]

    def node(ii, jj):
        return jj * (nx + 1) + ii

    a, b, c, d = node(i, j), node(i + 1, j), node(i + 1, j + 1), node(i, j + 1)
    tri = np.empty((2 * len(i), 3), dtype=np.int64)
    tri[0::2] = np.stack([b, c, a], axis=1)
    tri[1::2] = np.stack([d, a, c], axis=1)
    used, tri = np.unique(tri, return_inverse=True)
    tri = tri.reshape(-1, 3)
    jj, ii = np.divmod(used, nx + 1)
    vertices = lo + s * np.stack([ii, jj], axis=1).astype(float)
    return TriangleMesh(vertices, tri)


def bisect(mesh: TriangleMesh, marked) -> TriangleMesh:
    """Newest-vertex bisection of ``marked`` triangles with conforming closure.

    Every marked triangle is bisected once at its refinement edge; neighbors
    are bisected as often as needed (at most twice) to remove hanging
    vertices.  An empty ``marked`` set returns ``mesh`` itself, so
    ``bisect(m, []) is m`` signals the no-op.
    """
    marked = np.unique(np.asarray(marked, dtype=np.int64).ravel())
    if marked.size == 0:
        logger.debug("bisect called with an empty marked set; mesh unchanged")
        return mesh
    if marked[0] < 0 or marked[-1] >= mesh.n_triangles:
        raise IndexError("marked triangle id out of range")

    elem, e2e, edges = mesh.triangles, mesh.elem2edge, mesh.edges
    cut = np.zeros(mesh.n_edges, dtype=bool)
    cut[e2e[marked, 0]] = True
    while True:
        need = cut[e2e].any(axis=1) & ~cut[e2e[:, 0]]
        if not need.any():
            break
        cut[e2e[need, 0]] = True

    nv = mesh.n_vertices
    cut_ids = np.flatnonzero(cut)
    midpoint = np.full(mesh.n_edges, -1, dtype=np.int64)
    midpoint[cut_ids] = nv + np.arange(len(cut_ids))
    parent_edges = edges[cut_ids]
    new_xy = 0.5 * (mesh.vertices[parent_edges[:, 0]] + mesh.vertices[parent_edges[:, 1]])
    vertices = np.vstack([mesh.vertices, new_xy])

    # first pass: every triangle with a cut edge has its refinement edge cut
    t1 = np.flatnonzero(cut[e2e[:, 0]])
    p0, p1, p2 = elem[t1].T
    m = midpoint[e2e[t1, 0]]
    tri = np.vstack([elem, np.stack([m, p2, p0], axis=1)])
    tri[t1] = np.stack([m, p0, p1], axis=1)
    gen = np.concatenate([mesh.generation, mesh.generation[t1] + 1])
    gen[t1] += 1
    # refinement edges of the children are the parent's other two edges
    ref_edge = np.concatenate([e2e[:, 0], e2e[t1, 1]])
    ref_edge[t1] = e2e[t1, 2]
    ref_cut = np.zeros(len(tri), dtype=bool)
    ref_cut[t1] = cut[e2e[t1, 2]]
    ref_cut[len(elem) :] = cut[e2e[t1, 1]]

    # second pass: children whose refinement edge is also cut
    t2 = np.flatnonzero(ref_cut)
    q0, q1, q2 = tri[t2].T
    r = midpoint[ref_edge[t2]]
    tail = np.stack([r, q2, q0], axis=1)
    tri[t2] = np.stack([r, q0, q1], axis=1)
    tri = np.vstack([tri, tail])
    gen[t2] += 1
    gen = np.concatenate([gen, gen[t2]])

    return TriangleMesh(vertices, tri, gen, parent_edges=parent_edges, parent_uid=mesh.uid)


def uniform_refine(mesh: TriangleMesh, times: int = 1) -> TriangleMesh:
    """Bisect every triangle ``times`` times (two bisections halve ``h``).

    The result records the composed vertex ancestry, so it counts as a
    refinement of ``mesh`` itself: each new vertex is the midpoint of two
    vertices with smaller numbers.
    """
    fine = mesh
    parents = []
    for _ in range(times):
        fine = bisect(fine, np.arange(fine.n_triangles))
        parents.append(fine.parent_edges)
    if times < 2:
        return fine
    return TriangleMesh(
        fine.vertices, fine.triangles, fine.generation, parent_edges=np.vstack(parents), parent_uid=mesh.uid
    )


def edge_tables(mesh: TriangleMesh) -> EdgeTable:
    """Unit normals and adjacent triangles for every edge of ``mesh``."""
    mesh.validate()
    edges = mesh.edges
    e2t = mesh.edge2elem
    t_in, t_out = e2t[:, 0], e2t[:, 1]
    if np.any(t_in < 0):
        raise StructuralError("edge without any adjacent triangle")
    v = mesh.vertices
    d = v[edges[:, 1]] - v[edges[:, 0]]
    lengths = np.linalg.norm(d, axis=1)
    if np.any(lengths == 0):
        raise GeometryError("zero-length edge")
    normals = np.stack([d[:, 1], -d[:, 0]], axis=1) / lengths[:, None]
    mid = 0.5 * (v[edges[:, 1]] + v[edges[:, 0]])
    away = np.einsum("ij,ij->i", mid - mesh.centroids[t_in], normals)
    normals[away < 0] *= -1.0
    normals.setflags(write=False)
    return EdgeTable(edges, normals, lengths, t_in, t_out)
