"""Planar layout of flat metrics and piecewise-linear maps between layouts."""

from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np

from .conformal import INVALID, PLMetric
from .errors import (
    DegenerateSeed,
    DegenerateSourceTriangle,
    InconsistentDevelopment,
    NotATriangleBoundary,
)
from .mesh import Triangulation

logger = logging.getLogger(__name__)

UNIT_TRIANGLE = np.array([[0.0, 0.0], [1.0, 0.0], [0.5, np.sqrt(3) / 2]])


@dataclass(frozen=True, eq=False)
class LayoutChart:
    tri: Triangulation
    mode: str  # "embedded" or "immersed"
    corners: np.ndarray  # (F, 3, 2) position of each triangle corner
    positions: Optional[np.ndarray]  # (V, 2) in embedded mode
    mismatch: float  # largest disagreement between charts at a shared vertex
    order: np.ndarray  # triangles in placement order

    def transformed(self, a: complex, b: complex) -> "LayoutChart":
        """Image under z -> a*z + b."""

        def apply(p):
            z = a * (p[..., 0] + 1j * p[..., 1]) + b
            return np.stack([z.real, z.imag], axis=-1)

        pos = None if self.positions is None else apply(self.positions)
        return LayoutChart(self.tri, self.mode, apply(self.corners), pos, self.mismatch, self.order)


def _rotate(v, angle):
    c, s = np.cos(angle), np.sin(angle)
    return np.array([c * v[0] - s * v[1], s * v[0] + c * v[1]])


def develop(m: PLMetric, seed: Optional[int] = None, mark: Optional[int] = None,
            mode: str = "embedded", tol: float = 1e-6) -> LayoutChart:
    """Lay triangles out breadth first, each apex on the far side of its shared edge.

    The seed triangle (``seed``, else the lowest-index triangle at ``mark``,
    else triangle 0) gets its first vertex at the origin and its first edge
    on the positive x-axis.  In embedded mode a revisited vertex keeps its
    first position and disagreements above ``tol * diameter`` raise.
    """
    if mode not in ("embedded", "immersed"):
        raise ValueError("mode must be 'embedded' or 'immersed'")
    t = m.tri
    if m.classification == INVALID:
        raise DegenerateSeed("metric violates the triangle inequality")
    ang = m.angles
    L = m.triangle_lengths
    tris = t.triangles
    nbr = t.triangle_neighbors
    first = 0
    if seed is None:
        seed = 0
        if mark is not None:
            hits = np.flatnonzero((tris == mark).any(axis=1))
            if len(hits):
                seed = int(hits[0])
                first = int(np.flatnonzero(tris[seed] == mark)[0])
    if not 0 <= seed < t.triangle_count:
        raise DegenerateSeed(f"seed triangle {seed} out of range")
    if not np.all(L[seed] > 0):
        raise DegenerateSeed("seed triangle has a zero-length side")

    F = t.triangle_count
    corners = np.full((F, 3, 2), np.nan)
    k0, k1, k2 = first, (first + 1) % 3, (first + 2) % 3
    corners[seed, k0] = (0.0, 0.0)
    corners[seed, k1] = (L[seed, k2], 0.0)
    corners[seed, k2] = L[seed, k1] * np.array([np.cos(ang[seed, k0]), np.sin(ang[seed, k0])])

    embedded = mode == "embedded"
    pos = np.full((t.vertex_count, 2), np.nan) if embedded else None
    if embedded:
        pos[tris[seed]] = corners[seed]
    placed = np.zeros(F, dtype=bool)
    placed[seed] = True
    order = [seed]
    mismatch = 0.0
    queue = deque([seed])
    while queue:
        f = queue.popleft()
        for k in range(3):
            g = nbr[f, k]
            if g < 0 or placed[g]:
                continue
            # shared edge is opposite corner k of f; find the new apex of g
            a, b = tris[f, (k + 1) % 3], tris[f, (k + 2) % 3]
            kg = int(np.flatnonzero((tris[g] != a) & (tris[g] != b))[0])
            ks, ke = (kg + 1) % 3, (kg + 2) % 3  # g runs s -> e -> apex counter-clockwise
            s, e = tris[g, ks], tris[g, ke]
            if embedded:
                ps, pe = pos[s], pos[e]
            else:
                ps = corners[f, int(np.flatnonzero(tris[f] == s)[0])]
                pe = corners[f, int(np.flatnonzero(tris[f] == e)[0])]
            d = pe - ps
            norm = np.hypot(d[0], d[1])
            if norm == 0:
                raise InconsistentDevelopment("shared edge collapsed to a point")
            apex = ps + L[g, ke] * _rotate(d / norm, ang[g, ks])
            corners[g, ks], corners[g, ke], corners[g, kg] = ps, pe, apex
            if embedded:
                x = tris[g, kg]
                if np.isnan(pos[x, 0]):
                    pos[x] = apex
                else:
                    mismatch = max(mismatch, float(np.hypot(*(pos[x] - apex))))
                    corners[g, kg] = pos[x]
            placed[g] = True
            order.append(g)
            queue.append(g)
    if not placed.all():
        raise InconsistentDevelopment("triangulation is not edge-connected")

    if embedded:
        # account for revisits through edges that closed a cycle in the tree
        mismatch = max(mismatch, _edge_mismatch(t, pos, m))
        span = np.ptp(pos, axis=0)
        diam = float(np.hypot(*span)) or 1.0
        if mismatch > tol * diam:
            raise InconsistentDevelopment(f"layout mismatch {mismatch:.3e} exceeds {tol:g} x diameter")
    return LayoutChart(t, mode, corners, pos, mismatch, np.array(order))


def _edge_mismatch(t: Triangulation, pos: np.ndarray, m: PLMetric) -> float:
    e = t.edges
    d = np.linalg.norm(pos[e[:, 0]] - pos[e[:, 1]], axis=1)
    return float(np.max(np.abs(d - m.lengths)))


class Normalization(NamedTuple):
    chart: LayoutChart
    scale: complex
    shift: complex
    r_deviation: float
    boundary_deviation: float


def _segment_distance(p, a, b):
    ab = b - a
    s = np.clip(((p - a) @ ab) / (ab @ ab), 0.0, 1.0)
    return np.linalg.norm(p - (a + s[:, None] * ab), axis=1)


def normalize_to_triangle(chart: LayoutChart, marks, tol: float = 1e-6) -> Normalization:
    """Similarity sending the marks to (0,0), (1,0), (1/2, sqrt(3)/2)."""
    if chart.positions is None:
        raise NotATriangleBoundary("normalization needs an embedded chart")
    p, q, r = (int(v) for v in marks)
    z = chart.positions[:, 0] + 1j * chart.positions[:, 1]
    if z[q] == z[p]:
        raise NotATriangleBoundary("marks p and q coincide in the layout")
    a = 1.0 / (z[q] - z[p])
    b = -z[p] * a
    out = chart.transformed(a, b)
    pos = out.positions
    r_dev = float(np.hypot(*(pos[r] - UNIT_TRIANGLE[2])))

    cycle = list(chart.tri.boundary_cycle)
    idx = {v: i for i, v in enumerate(cycle)}
    start = idx[p]
    cycle = cycle[start:] + cycle[:start]
    iq, ir = cycle.index(q), cycle.index(r)
    sides = [(cycle[: iq + 1], 0, 1), (cycle[iq: ir + 1], 1, 2), (cycle[ir:] + [p], 2, 0)]
    dev = 0.0
    for verts, i, j in sides:
        dist = _segment_distance(pos[verts], UNIT_TRIANGLE[i], UNIT_TRIANGLE[j])
        dev = max(dev, float(dist.max()))
    dev = max(dev, r_dev)
    if dev > tol:
        raise NotATriangleBoundary(f"boundary deviates {dev:.3e} from the triangle sides")
    return Normalization(out, a, b, r_dev, dev)


@dataclass(frozen=True, eq=False)
class PLMap:
    linear: np.ndarray  # (F, 2, 2)
    translation: np.ndarray  # (F, 2)
    dilatation: np.ndarray  # (F,)
    determinant: np.ndarray  # (F,)
    edge_residual: float


def pl_map(source, target, t: Triangulation) -> PLMap:
    """Affine map on every triangle carrying source corners to target corners."""
    S = np.asarray(source, dtype=float)[t.triangles]
    T = np.asarray(target, dtype=float)[t.triangles]
    Sm = np.stack([S[:, 1] - S[:, 0], S[:, 2] - S[:, 0]], axis=-1)  # columns are edge vectors
    Tm = np.stack([T[:, 1] - T[:, 0], T[:, 2] - T[:, 0]], axis=-1)
    det_s = np.linalg.det(Sm)
    scale = np.max(np.abs(Sm), axis=(1, 2)) ** 2
    if np.any(np.abs(det_s) <= 1e-14 * scale):
        raise DegenerateSourceTriangle("a source triangle has zero area")
    A = Tm @ np.linalg.inv(Sm)
    b = T[:, 0] - np.einsum("fij,fj->fi", A, S[:, 0])
    sv = np.linalg.svd(A, compute_uv=False)
    with np.errstate(divide="ignore"):
        dil = np.where(sv[:, 1] > 0, sv[:, 0] / sv[:, 1], np.inf)

    # both triangles at an interior edge must send the edge to the same segment
    ef = t.edge_triangles
    inner = t.interior_edges
    res = 0.0
    if len(inner):
        e = t.edges[inner]
        src = np.asarray(source, dtype=float)
        vec = src[e[:, 1]] - src[e[:, 0]]
        f, g = ef[inner, 0], ef[inner, 1]
        img_f = np.einsum("fij,fj->fi", A[f], vec)
        img_g = np.einsum("fij,fj->fi", A[g], vec)
        res = float(np.max(np.linalg.norm(img_f - img_g, axis=1)))
    return PLMap(A, b, dil, np.linalg.det(A), res)


def dilatation_stats(mp: PLMap, region=None) -> dict:
    vals = mp.dilatation if region is None else mp.dilatation[np.asarray(region)]
    if len(vals) == 0:
        return {"max": float("nan"), "median": float("nan"), "values": vals}
    return {"max": float(np.max(vals)), "median": float(np.median(vals)), "values": vals}


# -----------------------------------------------------------------------------
# affine holonomy of immersed charts
# -----------------------------------------------------------------------------


class HolonomyFit(NamedTuple):
    factor: complex  # z -> factor * (z - center) + center
    shift: complex
    residual: float  # relative least-squares residual


def fit_similarity(src: np.ndarray, dst: np.ndarray) -> HolonomyFit:
    """Least-squares complex-affine map z -> a z + c with dst ~ a src + c."""
    zs = src[..., 0].ravel() + 1j * src[..., 1].ravel()
    zd = dst[..., 0].ravel() + 1j * dst[..., 1].ravel()
    M = np.column_stack([zs, np.ones_like(zs)])
    (a, c), *_ = np.linalg.lstsq(M, zd, rcond=None)
    scale = max(np.max(np.abs(zd - zd.mean())), np.max(np.abs(zs - zs.mean())), 1e-300)
    res = float(np.max(np.abs(a * zs + c - zd)) / scale)
    return HolonomyFit(complex(a), complex(c), res)


def spiral_holonomy(chart: LayoutChart, patch) -> dict:
    """Fit the similarities relating charts of lattice-translated triangles.

    Returns the two fits (translation by u1 and by u2) and the distance
    between their fixed points relative to the chart size.
    """
    keys = patch.keys
    tris = patch.tri.triangles
    tk = keys[tris]  # (F, 3, 2)
    anchor = {}
    for f in range(len(tris)):
        base = tk[f].min(axis=0)
        shape = tuple(map(tuple, tk[f] - base))
        anchor[(tuple(base), shape)] = f
    fits = {}
    for name, shift in (("u1", (1, 0)), ("u2", (0, 1))):
        src, dst = [], []
        for (base, shape), f in anchor.items():
            g = anchor.get(((base[0] + shift[0], base[1] + shift[1]), shape))
            if g is None:
                continue
            # corresponding corners: same lattice offset within the triangle
            perm = [int(np.flatnonzero((tk[g] == tk[f][i] + np.array(shift)).all(axis=1))[0]) for i in range(3)]
            src.append(chart.corners[f])
            dst.append(chart.corners[g][perm])
        fits[name] = fit_similarity(np.array(src), np.array(dst))
    a, b = fits["u1"], fits["u2"]
    z_a = a.shift / (1 - a.factor)
    z_b = b.shift / (1 - b.factor)
    c = chart.corners
    size = float(np.max(np.hypot(c[..., 0] - c[..., 0].mean(), c[..., 1] - c[..., 1].mean())))
    return {"u1": a, "u2": b, "center_gap": float(abs(z_a - z_b) / size),
            "residual": max(a.residual, b.residual, float(abs(z_a - z_b) / size))}


# -----------------------------------------------------------------------------
# SVG
# -----------------------------------------------------------------------------


def svg_triangles(polys, width: int = 600, stroke: str = "#333", fill: str = "none",
                  overlay=None, overlay_stroke: str = "#c33") -> str:
    """Render (F, 3, 2) triangle corner arrays; ``overlay`` drawn on top in a second colour."""
    groups = [(np.asarray(polys, dtype=float), stroke)]
    if overlay is not None:
        groups.append((np.asarray(overlay, dtype=float), overlay_stroke))
    pts = np.concatenate([g.reshape(-1, 2) for g, _ in groups])
    pts = pts[np.isfinite(pts).all(axis=1)]
    lo, hi = pts.min(axis=0), pts.max(axis=0)
    span = float(max(hi - lo)) or 1.0
    pad = 0.02 * span
    s = width / (span + 2 * pad)
    height = int(np.ceil((hi[1] - lo[1] + 2 * pad) * s))
    lw = max(0.2, min(1.0, 200.0 / np.sqrt(len(groups[0][0]) + 1)))

    def xy(p):
        return f"{(p[0] - lo[0] + pad) * s:.3f},{(hi[1] - p[1] + pad) * s:.3f}"

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
           f'viewBox="0 0 {width} {height}">']
    for tri_pts, colour in groups:
        out.append(f'<g fill="{fill}" stroke="{colour}" stroke-width="{lw:.2f}" stroke-linejoin="round">')
        for t in tri_pts:
            if np.isfinite(t).all():
                out.append(f'<polygon points="{" ".join(xy(p) for p in t)}"/>')
        out.append("</g>")
    out.append("</svg>")
    return "\n".join(out) + "\n"
