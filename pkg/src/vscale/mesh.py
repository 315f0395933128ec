"""Combinatorial triangulations, standard subdivision and lattice disks.

A :class:`Triangulation` is an immutable oriented triangle mesh.  Edges are
stored once, as sorted vertex pairs, and every triangle knows the edge
opposite each of its corners::

    triangle_edges[f, k]  ==  edge joining triangles[f, k+1], triangles[f, k+2]

This is the only incidence table the metric kernels need.
"""

from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass
from functools import cached_property
from typing import Optional, Sequence

import numpy as np
from scipy import sparse
from scipy.sparse import csgraph

from .errors import (
    DisconnectedSurface,
    EmptyIntersection,
    GeometryError,
    MeshError,
    MultipleBoundaryCycles,
    NoConvexCorner,
    NonManifold,
    NonOrientable,
    NotADisk,
)

logger = logging.getLogger(__name__)

SQRT3 = np.sqrt(3.0)


@dataclass(frozen=True, eq=False)
class Triangulation:
    vertex_count: int
    triangles: np.ndarray
    edges: np.ndarray
    edge_triangles: np.ndarray
    triangle_edges: np.ndarray
    boundary_cycles: tuple

    @property
    def triangle_count(self) -> int:
        return len(self.triangles)

    @property
    def edge_count(self) -> int:
        return len(self.edges)

    @property
    def boundary_cycle(self) -> tuple:
        """The boundary cycle of a disk (empty tuple for closed surfaces)."""
        return self.boundary_cycles[0] if self.boundary_cycles else ()

    @property
    def euler_characteristic(self) -> int:
        return self.vertex_count - self.edge_count + self.triangle_count

    @cached_property
    def is_boundary_edge(self) -> np.ndarray:
        return self.edge_triangles[:, 1] < 0

    @cached_property
    def is_boundary_vertex(self) -> np.ndarray:
        mask = np.zeros(self.vertex_count, dtype=bool)
        mask[self.edges[self.is_boundary_edge].ravel()] = True
        return mask

    @cached_property
    def interior_edges(self) -> np.ndarray:
        return np.flatnonzero(~self.is_boundary_edge)

    @cached_property
    def vertex_triangle_count(self) -> np.ndarray:
        return np.bincount(self.triangles.ravel(), minlength=self.vertex_count)

    @cached_property
    def edge_index(self) -> dict:
        return {(int(i), int(j)): e for e, (i, j) in enumerate(self.edges)}

    def edge_id(self, i: int, j: int) -> int:
        return self.edge_index[(i, j) if i < j else (j, i)]

    @cached_property
    def adjacency(self) -> sparse.csr_matrix:
        """Symmetric 0/1 adjacency of the 1-skeleton."""
        n = self.vertex_count
        i, j = self.edges[:, 0], self.edges[:, 1]
        data = np.ones(2 * len(i))
        return sparse.csr_matrix(
            (data, (np.concatenate([i, j]), np.concatenate([j, i]))), shape=(n, n)
        )

    def neighbors(self, v: int) -> np.ndarray:
        a = self.adjacency
        return a.indices[a.indptr[v]:a.indptr[v + 1]]

    @cached_property
    def triangle_neighbors(self) -> np.ndarray:
        """(F, 3) index of the triangle across the edge opposite each corner, -1 on the boundary."""
        et = self.edge_triangles[self.triangle_edges]  # (F, 3, 2)
        own = np.arange(self.triangle_count)[:, None]
        return np.where(et[..., 0] == own, et[..., 1], et[..., 0])


def build_triangulation(
    triangles: Sequence[Sequence[int]],
    vertex_count: Optional[int] = None,
    mode: str = "disk",
) -> Triangulation:
    """Validate oriented triangles and derive edges, adjacency and boundary.

    ``mode`` is ``"disk"`` (one boundary cycle, Euler characteristic 1),
    ``"closed"`` (no boundary) or ``"any"`` (connected orientable manifold).
    """
    if mode not in ("disk", "closed", "any"):
        raise ValueError(f"unknown validation mode {mode!r}")
    tris = np.asarray(triangles, dtype=np.int64).reshape(-1, 3)
    if len(tris) == 0:
        raise MeshError("no triangles")
    if tris.min() < 0:
        raise MeshError("negative vertex index")
    if vertex_count is None:
        vertex_count = int(tris.max()) + 1
    elif tris.max() >= vertex_count:
        raise MeshError("vertex index out of range")
    if np.any(tris[:, 0] == tris[:, 1]) or np.any(tris[:, 1] == tris[:, 2]) or np.any(
        tris[:, 0] == tris[:, 2]
    ):
        raise MeshError("triangle with repeated vertex")

    # directed edge opposite corner k: tris[:, k+1] -> tris[:, k+2]
    tails = np.stack([tris[:, 1], tris[:, 2], tris[:, 0]], axis=1)
    heads = np.stack([tris[:, 2], tris[:, 0], tris[:, 1]], axis=1)
    lo = np.minimum(tails, heads).ravel()
    hi = np.maximum(tails, heads).ravel()
    keys = lo * vertex_count + hi
    ukeys, inverse, counts = np.unique(keys, return_inverse=True, return_counts=True)
    if np.any(counts > 2):
        raise NonManifold("edge with more than two incident triangles")
    face_keys = np.sort(tris, axis=1)
    if len(np.unique(face_keys, axis=0)) != len(tris):
        raise NonManifold("two triangles share all three vertices")
    directed = tails.ravel() * vertex_count + heads.ravel()
    if len(np.unique(directed)) != len(directed):
        raise NonOrientable("a directed edge is used twice (inconsistent orientation)")

    edges = np.stack([ukeys // vertex_count, ukeys % vertex_count], axis=1)
    triangle_edges = inverse.reshape(-1, 3)
    edge_triangles = np.full((len(edges), 2), -1, dtype=np.int64)
    order = np.argsort(inverse, kind="stable")
    face_of = order // 3
    starts = np.searchsorted(inverse[order], np.arange(len(edges)))
    edge_triangles[:, 0] = face_of[starts]
    second = counts == 2
    edge_triangles[second, 1] = face_of[starts[second] + 1]

    used = np.zeros(vertex_count, dtype=bool)
    used[tris.ravel()] = True
    if not used.all():
        raise DisconnectedSurface("isolated vertices")
    adj = sparse.coo_matrix(
        (np.ones(len(edges)), (edges[:, 0], edges[:, 1])), shape=(vertex_count, vertex_count)
    )
    ncomp, _ = csgraph.connected_components(adj, directed=False)
    if ncomp != 1:
        raise DisconnectedSurface(f"{ncomp} connected components")

    _check_vertex_fans(tris, triangle_edges, edge_triangles, edges, vertex_count)

    # boundary: directed edges whose undirected edge has a single triangle
    bmask = (counts == 1)[inverse]
    btail, bhead = tails.ravel()[bmask], heads.ravel()[bmask]
    nxt = {}
    for a, b in zip(btail.tolist(), bhead.tolist()):
        if a in nxt:
            raise NonManifold(f"pinched boundary vertex {a}")
        nxt[a] = b
    cycles = []
    seen = set()
    for start in sorted(nxt):
        if start in seen:
            continue
        cyc = [start]
        seen.add(start)
        v = nxt[start]
        while v != start:
            cyc.append(v)
            seen.add(v)
            v = nxt[v]
        cycles.append(tuple(cyc))

    tri = Triangulation(
        vertex_count=vertex_count,
        triangles=tris,
        edges=edges,
        edge_triangles=edge_triangles,
        triangle_edges=triangle_edges,
        boundary_cycles=tuple(cycles),
    )
    if mode == "disk":
        if len(cycles) != 1:
            raise MultipleBoundaryCycles(f"expected one boundary cycle, found {len(cycles)}")
        if tri.euler_characteristic != 1:
            raise NotADisk(f"Euler characteristic {tri.euler_characteristic} != 1")
    elif mode == "closed" and cycles:
        raise MeshError("closed surface expected but boundary found")
    return tri


def _check_vertex_fans(tris, triangle_edges, edge_triangles, edges, vertex_count):
    """Every vertex star must be a single fan of triangles."""
    F = len(tris)
    corner_id = np.arange(3 * F).reshape(F, 3)
    rows, cols = [], []
    inner = np.flatnonzero(edge_triangles[:, 1] >= 0)
    if len(inner):
        f, g = edge_triangles[inner, 0], edge_triangles[inner, 1]
        for end in (0, 1):
            v = edges[inner, end]
            kf = np.argmax(tris[f] == v[:, None], axis=1)
            kg = np.argmax(tris[g] == v[:, None], axis=1)
            rows.append(corner_id[f, kf])
            cols.append(corner_id[g, kg])
    if rows:
        r = np.concatenate(rows)
        c = np.concatenate(cols)
    else:
        r = c = np.zeros(0, dtype=np.int64)
    graph = sparse.coo_matrix((np.ones(len(r)), (r, c)), shape=(3 * F, 3 * F))
    nfans, _ = csgraph.connected_components(graph, directed=False)
    if nfans != vertex_count:
        raise NonManifold("a vertex star is not a single fan")


# -----------------------------------------------------------------------------
# equilateral complexes
# -----------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class MacroStructure:
    """Link from an n-th standard subdivision back to its parent complex.

    ``lattice[f, i1, i2]`` is the vertex of the subdivision at barycentric
    weights ``(n - i1 - i2, i1, i2)`` with respect to the corners of parent
    triangle ``f`` (``-1`` where ``i1 + i2 > n``).
    """

    parent: "EquilateralComplex"
    n: int
    lattice: np.ndarray


@dataclass(frozen=True, eq=False)
class EquilateralComplex:
    triangulation: Triangulation
    edge_length: float = 1.0
    positions: Optional[np.ndarray] = None
    macro: Optional[MacroStructure] = None

    def __post_init__(self):
        if not self.edge_length > 0:
            raise ValueError("edge_length must be positive")
        if self.positions is not None:
            pos = np.asarray(self.positions, dtype=float)
            if pos.shape != (self.triangulation.vertex_count, 2):
                raise ValueError("positions must be (vertex_count, 2)")
            object.__setattr__(self, "positions", pos)

    @property
    def tri(self) -> Triangulation:
        return self.triangulation

    def lengths(self) -> np.ndarray:
        return np.full(self.triangulation.edge_count, float(self.edge_length))

    def max_length_error(self) -> float:
        """Largest deviation of a realized edge from ``edge_length`` (0 without positions)."""
        if self.positions is None:
            return 0.0
        e = self.triangulation.edges
        d = np.linalg.norm(self.positions[e[:, 0]] - self.positions[e[:, 1]], axis=1)
        return float(np.max(np.abs(d - self.edge_length)))


@dataclass(frozen=True, eq=False)
class MarkedDisk:
    complex: EquilateralComplex
    marks: Optional[tuple] = None
    boundary_hausdorff: Optional[float] = None

    def __post_init__(self):
        if self.marks is None:
            return
        marks = tuple(int(m) for m in self.marks)
        if len(marks) != 3 or len(set(marks)) != 3:
            raise GeometryError("marks must be three distinct vertices")
        cycle = self.complex.triangulation.boundary_cycle
        pos = {v: i for i, v in enumerate(cycle)}
        if any(m not in pos for m in marks):
            raise GeometryError("marks must be boundary vertices")
        a, b, c = (pos[m] for m in marks)
        # cyclic order: rotate so the first mark is at 0
        L = len(cycle)
        if not ((b - a) % L < (c - a) % L):
            raise GeometryError("marks are not in boundary-cycle order")
        object.__setattr__(self, "marks", marks)

    @property
    def tri(self) -> Triangulation:
        return self.complex.triangulation


def equilateral_triangle(side: float = 1.0) -> EquilateralComplex:
    """Single triangle (0,0), (side,0), (side/2, side*sqrt(3)/2)."""
    tri = build_triangulation([[0, 1, 2]])
    pos = side * np.array([[0.0, 0.0], [1.0, 0.0], [0.5, SQRT3 / 2]])
    return EquilateralComplex(tri, side, pos)


def complex_from_lattice(keys: Sequence[tuple], triangles, delta: float = 1.0,
                         origin=(0.0, 0.0), mode: str = "disk") -> EquilateralComplex:
    """Equilateral complex from integer lattice coordinates ``(i, j)`` ↦ ``origin + i*e1 + j*e2``.

    ``e1 = (delta, 0)``, ``e2 = delta * (1/2, sqrt(3)/2)``; ``triangles`` index ``keys``.
    """
    ij = np.asarray(keys, dtype=float).reshape(-1, 2)
    pos = np.column_stack([
        origin[0] + delta * (ij[:, 0] + 0.5 * ij[:, 1]),
        origin[1] + delta * (SQRT3 / 2) * ij[:, 1],
    ])
    tri = build_triangulation(triangles, vertex_count=len(ij), mode=mode)
    return EquilateralComplex(tri, delta, pos)


def standard_subdivision(c: EquilateralComplex, n: int) -> EquilateralComplex:
    """Replace every triangle by its n-th standard subdivision (n**2 triangles).

    Parent vertices keep their indices; vertices on a parent edge and inside a
    parent face are numbered after them.  Identification along shared parent
    edges is by integer keys, so there are no duplicates.
    """
    n = int(n)
    if n < 1:
        raise ValueError("subdivision level must be >= 1")
    t = c.triangulation
    tris = t.triangles
    V, E, F = t.vertex_count, t.edge_count, t.triangle_count

    edge_base = V
    face_base = V + E * (n - 1)
    interior = [(i1, i2) for i1 in range(1, n) for i2 in range(1, n) if i1 + i2 <= n - 1]
    local = {p: k for k, p in enumerate(interior)}
    nv = face_base + F * len(interior)

    lattice = np.full((F, n + 1, n + 1), -1, dtype=np.int64)
    fidx = np.arange(F)
    for i1 in range(n + 1):
        for i2 in range(n + 1 - i1):
            i0 = n - i1 - i2
            w = (i0, i1, i2)
            if n in w:
                lattice[:, i1, i2] = tris[:, w.index(n)]
            elif 0 in w:
                z = w.index(0)
                a_k, b_k = (z + 1) % 3, (z + 2) % 3
                a, b = tris[:, a_k], tris[:, b_k]
                e = t.triangle_edges[:, z]
                # position counted from the smaller endpoint: weight of the larger one
                k = np.where(a < b, w[b_k], w[a_k])
                lattice[:, i1, i2] = edge_base + e * (n - 1) + (k - 1)
            else:
                lattice[:, i1, i2] = face_base + fidx * len(interior) + local[(i1, i2)]

    sub = []
    for i1 in range(n):
        for i2 in range(n - i1):
            sub.append(np.stack([lattice[:, i1, i2], lattice[:, i1 + 1, i2], lattice[:, i1, i2 + 1]], 1))
            if i1 + i2 <= n - 2:
                sub.append(np.stack(
                    [lattice[:, i1 + 1, i2], lattice[:, i1 + 1, i2 + 1], lattice[:, i1, i2 + 1]], 1))
    new_tris = np.concatenate(sub, axis=0)

    positions = None
    if c.positions is not None:
        positions = np.empty((nv, 2))
        P = c.positions[tris]  # (F, 3, 2)
        for i1 in range(n + 1):
            for i2 in range(n + 1 - i1):
                pts = ((n - i1 - i2) * P[:, 0] + i1 * P[:, 1] + i2 * P[:, 2]) / n
                positions[lattice[:, i1, i2]] = pts
        positions[:V] = c.positions

    mode = "any" if not t.boundary_cycles or len(t.boundary_cycles) != 1 else "disk"
    if not t.boundary_cycles:
        mode = "closed"
    new_t = build_triangulation(new_tris, vertex_count=nv, mode=mode)
    return EquilateralComplex(new_t, c.edge_length / n, positions, MacroStructure(c, n, lattice))


def combinatorial_ball(t: Triangulation, v: int, r: int) -> set:
    """Vertices at combinatorial distance <= r from ``v``."""
    if r < 0:
        raise ValueError("radius must be >= 0")
    a = t.adjacency
    dist = {int(v): 0}
    queue = deque([int(v)])
    while queue:
        u = queue.popleft()
        d = dist[u]
        if d == r:
            continue
        for x in a.indices[a.indptr[u]:a.indptr[u + 1]]:
            x = int(x)
            if x not in dist:
                dist[x] = d + 1
                queue.append(x)
    return set(dist)


def combinatorial_distance(t: Triangulation, sources) -> np.ndarray:
    """Hop distance from the nearest of ``sources`` to every vertex (inf if unreachable)."""
    d = csgraph.shortest_path(t.adjacency, unweighted=True, indices=np.atleast_1d(sources))
    return np.min(np.atleast_2d(d), axis=0)


# -----------------------------------------------------------------------------
# hexagonal-lattice approximation of polygons
# -----------------------------------------------------------------------------


def _inside(poly, x, y, tol):
    import shapely

    pts = shapely.points(x, y)
    inside = shapely.contains(poly, pts)
    if tol > 0:
        inside |= shapely.distance(poly.exterior, pts) <= tol
    return inside


def _triangle_fans(tris_of_v, tri_edges_of):
    """Split triangles around a vertex into edge-connected fans."""
    tris_of_v = list(tris_of_v)
    parent = {f: f for f in tris_of_v}

    def find(f):
        while parent[f] != f:
            parent[f] = parent[parent[f]]
            f = parent[f]
        return f

    by_edge = {}
    for f in tris_of_v:
        for e in tri_edges_of[f]:
            by_edge.setdefault(e, []).append(f)
    for fs in by_edge.values():
        for g in fs[1:]:
            parent[find(g)] = find(fs[0])
    fans = {}
    for f in tris_of_v:
        fans.setdefault(find(f), []).append(f)
    return list(fans.values())


class _LatticeRegion:
    """Mutable set of lattice triangles keyed by integer vertex coordinates."""

    def __init__(self, triangles):
        self.tris = set(triangles)

    def vertex_map(self):
        vt = {}
        for t in self.tris:
            for v in t:
                vt.setdefault(v, []).append(t)
        return vt

    @staticmethod
    def _edges_of(t):
        a, b, c = t
        return (frozenset((b, c)), frozenset((c, a)), frozenset((a, b)))

    def edge_map(self):
        em = {}
        for t in self.tris:
            for e in self._edges_of(t):
                em.setdefault(e, []).append(t)
        return em

    def keep_largest_component(self):
        em = self.edge_map()
        seen, best = set(), []
        for t0 in sorted(self.tris):
            if t0 in seen:
                continue
            comp, stack = [], [t0]
            seen.add(t0)
            while stack:
                t = stack.pop()
                comp.append(t)
                for e in self._edges_of(t):
                    for s in em[e]:
                        if s not in seen:
                            seen.add(s)
                            stack.append(s)
            if len(comp) > len(best):
                best = comp
        changed = len(best) != len(self.tris)
        self.tris = set(best)
        return changed

    def fix_pinches(self):
        """Drop all but the largest fan at pinched vertices."""
        vt = self.vertex_map()
        changed = False
        for v in sorted(vt):
            ts = [t for t in vt[v] if t in self.tris]
            if len(ts) < 2:
                continue
            edges_of = {t: [e for e in self._edges_of(t) if v in e] for t in ts}
            fans = _triangle_fans(ts, edges_of)
            if len(fans) > 1:
                fans.sort(key=lambda f: (-len(f), min(f)))
                for fan in fans[1:]:
                    self.tris.difference_update(fan)
                changed = True
        return changed

    def boundary_cycles(self):
        em = self.edge_map()
        nxt = {}
        for t in self.tris:
            a, b, c = t
            for u, w in ((a, b), (b, c), (c, a)):
                if len(em[frozenset((u, w))]) == 1:
                    nxt.setdefault(u, []).append(w)
        cycles, seen = [], set()
        for s in sorted(nxt):
            if s in seen or len(nxt[s]) != 1:
                continue
            cyc, v = [s], nxt[s][0]
            seen.add(s)
            while v != s and v not in seen and len(nxt.get(v, ())) == 1:
                cyc.append(v)
                seen.add(v)
                v = nxt[v][0]
            cycles.append(cyc)
        return cycles

    def fill_holes(self, area_of):
        cycles = self.boundary_cycles()
        if len(cycles) <= 1:
            return False
        outer = max(cycles, key=area_of)
        inner_vertices = {v for cyc in cycles if cyc is not outer for v in cyc}
        self.tris = {t for t in self.tris if not inner_vertices.intersection(t)}
        return True

    def prune_spikes(self, protected):
        vt = self.vertex_map()
        doomed = {ts[0] for v, ts in vt.items() if len(ts) == 1 and v not in protected}
        self.tris.difference_update(doomed)
        return bool(doomed)


def _signed_area(points) -> float:
    p = np.asarray(points, dtype=float)
    x, y = p[:, 0], p[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


def hex_approximate(polygon, marks=None, delta: float = 1.0, anchor=None,
                    search_radius: float = 6.0) -> MarkedDisk:
    """Approximate a simple polygon by a simply connected union of lattice triangles.

    The lattice is ``anchor + Z*(delta, 0) + Z*delta*e^{i pi/3}``.  By default
    the anchor is the lowest (then leftmost) polygon vertex.  A triangle is kept
    when its centroid is strictly inside the polygon and its vertices are inside
    or on the boundary (within ``1e-9 * delta``).

    With ``marks`` (three points on the polygon in counter-clockwise order) the
    result is a :class:`MarkedDisk` whose marks are boundary vertices with
    exactly one incident triangle, and no other boundary vertex has a single
    incident triangle.
    """
    import shapely

    poly_pts = np.asarray(polygon, dtype=float)
    if poly_pts.ndim != 2 or poly_pts.shape[1] != 2 or len(poly_pts) < 3:
        raise GeometryError("polygon must be a list of at least three points")
    if np.allclose(poly_pts[0], poly_pts[-1]):
        poly_pts = poly_pts[:-1]
    if _signed_area(poly_pts) < 0:
        poly_pts = poly_pts[::-1]
    poly = shapely.Polygon(poly_pts)
    if not poly.is_valid:
        raise GeometryError("polygon is not simple")
    if not delta > 0:
        raise ValueError("delta must be positive")

    if anchor is None:
        k = np.lexsort((poly_pts[:, 0], poly_pts[:, 1]))[0]
        anchor = poly_pts[k]
    ox, oy = float(anchor[0]), float(anchor[1])
    h = delta * SQRT3 / 2
    xmin, ymin, xmax, ymax = poly.bounds
    j_lo = int(np.floor((ymin - oy) / h)) - 1
    j_hi = int(np.ceil((ymax - oy) / h)) + 1
    js = np.arange(j_lo, j_hi + 1)
    i_lo = int(np.floor((xmin - ox) / delta - 0.5 * j_hi)) - 2
    i_hi = int(np.ceil((xmax - ox) / delta - 0.5 * j_lo)) + 2
    I, J = np.meshgrid(np.arange(i_lo, i_hi + 1), js, indexing="ij")
    I, J = I.ravel(), J.ravel()
    X = ox + delta * (I + 0.5 * J)
    Y = oy + h * J
    tol = 1e-9 * delta
    inside = _inside(poly, X, Y, tol)
    ok = {(int(i), int(j)) for i, j, f in zip(I, J, inside) if f}

    def pos(v):
        return (ox + delta * (v[0] + 0.5 * v[1]), oy + h * v[1])

    cand = []
    bases = ok | {(i - 1, j) for (i, j) in ok}
    for (i, j) in sorted(bases):
        up = ((i, j), (i + 1, j), (i, j + 1))
        down = ((i + 1, j), (i + 1, j + 1), (i, j + 1))
        for t in (up, down):
            if all(v in ok for v in t):
                cand.append(t)
    if cand:
        cx = np.array([sum(pos(v)[0] for v in t) / 3 for t in cand])
        cy = np.array([sum(pos(v)[1] for v in t) / 3 for t in cand])
        keep = _inside(poly, cx, cy, 0.0)
        cand = [t for t, f in zip(cand, keep) if f]
    if not cand:
        raise EmptyIntersection(f"no lattice triangle of size {delta} fits inside the polygon")

    region = _LatticeRegion(cand)

    def area_of(cyc):
        return _signed_area([pos(v) for v in cyc])

    def cleanup(protected=None):
        for _ in range(10000):
            changed = region.keep_largest_component()
            changed |= region.fix_pinches()
            changed |= region.fill_holes(area_of)
            if protected is not None:
                changed |= region.prune_spikes(protected)
            if not region.tris:
                raise EmptyIntersection("lattice region vanished during cleanup")
            if not changed:
                return
        raise GeometryError("lattice cleanup did not stabilize")

    cleanup()
    mark_keys = None
    if marks is not None:
        mark_pts = np.asarray(marks, dtype=float).reshape(3, 2)
        mark_keys = _select_marks(region, mark_pts, pos, delta * search_radius, cleanup)

    keys = sorted({v for t in region.tris for v in t})
    index = {v: k for k, v in enumerate(keys)}
    tri_idx = [[index[v] for v in t] for t in sorted(region.tris)]
    cplx = complex_from_lattice(keys, tri_idx, delta, (ox, oy))
    boundary = [cplx.positions[v] for v in cplx.triangulation.boundary_cycle]
    ring = shapely.LinearRing(boundary)
    haus = float(shapely.hausdorff_distance(ring, poly.exterior))

    mark_ids = None
    if mark_keys is not None:
        mark_ids = tuple(index[k] for k in mark_keys)
        cycle = cplx.triangulation.boundary_cycle
        where = {v: i for i, v in enumerate(cycle)}
        a, b, c = (where[m] for m in mark_ids)
        L = len(cycle)
        if not ((b - a) % L < (c - a) % L):
            raise NoConvexCorner("selected corners are not in the cyclic order of the marks")
    return MarkedDisk(cplx, mark_ids, haus)


def _select_marks(region, mark_pts, pos, radius, cleanup):
    chosen = []
    for m in mark_pts:
        found = None
        for _ in range(8):
            vt = region.vertex_map()
            bverts = {v for cyc in region.boundary_cycles() for v in cyc}
            near = sorted(
                (np.hypot(pos(v)[0] - m[0], pos(v)[1] - m[1]), v)
                for v in bverts if v not in chosen
            )
            near = [v for dv, v in near if dv <= radius]
            spikes = [v for v in near if len(vt[v]) == 1]
            if spikes:
                found = spikes[0]
                break
            elbows = [v for v in near if len(vt[v]) == 2]
            if elbows:
                # drop one triangle so the corner keeps a single triangle
                v = elbows[0]
                region.tris.discard(max(sorted(vt[v]), key=lambda t: _carve_score(region, t, v)))
                cleanup(protected=set(chosen) | {v})
                continue
            if not near:
                break
            v = near[0]
            t = min(sorted(vt[v]), key=lambda t: np.hypot(*np.subtract(np.mean([pos(x) for x in t], 0), m)))
            region.tris.discard(t)
            cleanup(protected=set(chosen))
        if found is None:
            raise NoConvexCorner(f"no single-triangle boundary vertex near mark {tuple(m)}")
        chosen.append(found)
    cleanup(protected=set(chosen))
    vt = region.vertex_map()
    for v in chosen:
        if len(vt.get(v, ())) != 1:
            raise NoConvexCorner("a selected corner was consumed by cleanup")
    return tuple(chosen)


def _carve_score(region, t, v):
    """Prefer removals that leave fewer new single-triangle vertices."""
    vt = region.vertex_map()
    return sum(len(vt[x]) > 2 for x in t if x != v)
