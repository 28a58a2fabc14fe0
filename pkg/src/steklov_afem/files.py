"""Plain-text file formats: meshes, convergence histories, indicator fields.

Mesh format::

    V T
    x y          (V lines, 17 significant digits)
    i j k        (T lines, 0-based, refinement edge opposite the first vertex)
"""

from __future__ import annotations

import csv
from decimal import ROUND_HALF_EVEN, Decimal
from pathlib import Path

import numpy as np

from .errors import StructuralError
from .mesh import TriangleMesh

HISTORY_HEADER = ["algorithm", "k", "iter", "dofs", "lambda", "eta_global", "abs_error", "marked_count", "wall_time_s"]


def format_lambda(value: float) -> str:
    """Eight decimals, rounding the shortest decimal repr half-to-even."""
    return str(Decimal(repr(float(value))).quantize(Decimal("1e-8"), rounding=ROUND_HALF_EVEN))


def write_history(history, path):
    if not history.records:
        raise ValueError("refusing to write an empty history")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(HISTORY_HEADER)
        for r in history.records:
            err = "" if history.lambda_ref is None else f"{abs(r.lam - history.lambda_ref):.6e}"
            w.writerow(
                [
                    history.algorithm,
                    history.k,
                    r.iter,
                    r.dofs,
                    format_lambda(r.lam),
                    f"{r.eta_global:.10e}",
                    err,
                    r.marked_count,
                    f"{r.wall_time_s:.3f}",
                ]
            )


def read_history(path):
    """Rows of a history CSV as dicts of strings."""
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def write_mesh(mesh: TriangleMesh, path):
    with open(path, "w") as fh:
        fh.write(f"{mesh.n_vertices} {mesh.n_triangles}\n")
        np.savetxt(fh, mesh.vertices, fmt="%.17g")
        np.savetxt(fh, mesh.triangles, fmt="%d")


def read_mesh(path, relabel: bool = False) -> TriangleMesh:
    """Read the text mesh format.

    With ``relabel=False`` the stored vertex order is kept (so a written mesh
    round-trips exactly); clockwise triangles are still an error.  With
    ``relabel=True`` triangles are reoriented and the longest edge becomes
    the refinement edge, which is what an externally generated mesh needs.
    """
    lines = Path(path).read_text().split("\n")
    try:
        nv, nt = (int(t) for t in lines[0].split())
    except ValueError as exc:
        raise StructuralError(f"{path}: first line must be 'V T'") from exc
    body = [ln for ln in lines[1:] if ln.strip()]
    if len(body) != nv + nt:
        raise StructuralError(f"{path}: expected {nv + nt} data lines, found {len(body)}")
    vertices = np.array([[float(t) for t in ln.split()] for ln in body[:nv]]).reshape(nv, 2)
    triangles = np.array([[int(t) for t in ln.split()] for ln in body[nv:]], dtype=np.int64).reshape(nt, 3)
    if relabel:
        return TriangleMesh.from_arrays(vertices, triangles).validate()
    return TriangleMesh(vertices, triangles).validate()


def write_indicators(field, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["triangle_id", "eta"])
        for i, eta in enumerate(field.eta):
            w.writerow([i, f"{eta:.10e}"])
