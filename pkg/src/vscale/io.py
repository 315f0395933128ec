"""JSON formats for meshes, polygons and layouts.

Mesh files::

    {"vertices": [[x, y], ...], "triangles": [[i, j, k], ...],
     "edge_lengths": {"i-j": l, ...}, "marks": [p, q, r]}

Only ``triangles`` is required.  Output is canonical: fixed key order, edge
keys with ``i < j`` in increasing order, shortest round-trip floats.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import GeometryError, MeshError
from .mesh import EquilateralComplex, MarkedDisk, build_triangulation


@dataclass
class MeshFile:
    triangles: np.ndarray
    vertices: Optional[np.ndarray] = None
    edge_lengths: Optional[dict] = None  # {(i, j): length} with i < j
    marks: Optional[tuple] = None


def _read(src):
    if isinstance(src, dict):
        return src
    return json.loads(Path(src).read_text())


def parse_mesh(obj: dict) -> MeshFile:
    if "triangles" not in obj:
        raise MeshError("mesh JSON needs a 'triangles' field")
    tris = np.asarray(obj["triangles"], dtype=np.int64).reshape(-1, 3)
    verts = obj.get("vertices")
    verts = None if verts is None else np.asarray(verts, dtype=float).reshape(-1, 2)
    lengths = None
    if obj.get("edge_lengths") is not None:
        lengths = {}
        for key, val in obj["edge_lengths"].items():
            i, j = (int(x) for x in key.split("-"))
            lengths[(min(i, j), max(i, j))] = float(val)
    marks = obj.get("marks")
    marks = None if marks is None else tuple(int(m) for m in marks)
    return MeshFile(tris, verts, lengths, marks)


def load_mesh(src) -> MeshFile:
    return parse_mesh(_read(src))


def mesh_to_obj(mf: MeshFile) -> dict:
    out = {}
    if mf.vertices is not None:
        out["vertices"] = [[float(x), float(y)] for x, y in mf.vertices]
    out["triangles"] = [[int(v) for v in t] for t in mf.triangles]
    if mf.edge_lengths is not None:
        out["edge_lengths"] = {f"{i}-{j}": float(mf.edge_lengths[(i, j)]) for i, j in sorted(mf.edge_lengths)}
    if mf.marks is not None:
        out["marks"] = [int(m) for m in mf.marks]
    return out


def dumps_mesh(mf: MeshFile) -> str:
    return json.dumps(mesh_to_obj(mf)) + "\n"


def save_mesh(mf: MeshFile, path) -> None:
    Path(path).write_text(dumps_mesh(mf))


def mesh_from_disk(d: MarkedDisk) -> MeshFile:
    c = d.complex
    return MeshFile(c.triangulation.triangles, c.positions, None, d.marks)


def disk_from_mesh(mf: MeshFile, tol: float = 1e-9) -> MarkedDisk:
    """Marked equilateral disk; the common edge length comes from the lengths or positions."""
    tri = build_triangulation(mf.triangles, None if mf.vertices is None else len(mf.vertices))
    if mf.edge_lengths is not None:
        vals = np.array([mf.edge_lengths.get((int(i), int(j)), np.nan) for i, j in tri.edges])
        if np.any(np.isnan(vals)):
            raise MeshError("edge_lengths does not cover every edge")
    elif mf.vertices is not None:
        e = tri.edges
        vals = np.linalg.norm(mf.vertices[e[:, 0]] - mf.vertices[e[:, 1]], axis=1)
    else:
        vals = np.ones(tri.edge_count)
    length = float(np.mean(vals))
    if np.max(np.abs(vals - length)) > tol * length:
        raise GeometryError("mesh is not equilateral")
    return MarkedDisk(EquilateralComplex(tri, length, mf.vertices), mf.marks)


def load_polygon(src):
    """Polygon points and optional marks from ``{"polygon": [...], "marks": [...]}``."""
    obj = _read(src)
    if "polygon" not in obj:
        raise GeometryError("polygon JSON needs a 'polygon' field")
    poly = np.asarray(obj["polygon"], dtype=float)
    marks = obj.get("marks")
    return poly, (None if marks is None else np.asarray(marks, dtype=float))


def dumps_positions(positions) -> str:
    return json.dumps({"positions": [[float(x), float(y)] for x, y in np.asarray(positions)]}) + "\n"
