"""Kernels on piecewise-linear metrics: angles, curvature, conductances, spirals.

A metric assigns a positive length to every edge of a :class:`Triangulation`.
Angles come from the half-angle form of the law of cosines::

    angle opposite a = atan2(4*area, b**2 + c**2 - a**2)

which is well conditioned near 0 and pi and gives exact 0/pi on triangles
that satisfy the triangle inequality with equality.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from functools import cached_property
from typing import Callable, NamedTuple

import numpy as np

from .errors import (
    DegenerateAngle,
    DegenerateTriangle,
    InvalidMetric,
    InvalidTriangle,
    NotGeometricBasis,
)
from .mesh import Triangulation, build_triangulation

logger = logging.getLogger(__name__)

INVALID_TOL = 1e-9  # relative slack tolerated before a triangle is rejected
SNAP_TOL = 1e-13  # relative slack below which a triangle counts as degenerate
MIN_SIN = 1e-12

STRICT, GENERALIZED, INVALID = "strict", "generalized", "invalid"


def _triangle_angles(L: np.ndarray):
    """Angles opposite each column of ``L`` (shape (..., 3)) and a status code.

    Status is 0 for strict, 1 for degenerate, 2 for invalid.  Invalid rows get
    NaN angles.
    """
    L = np.asarray(L, dtype=float)
    a, b, c = L[..., 0], L[..., 1], L[..., 2]
    scale = np.max(L, axis=-1)
    slack = np.stack([b + c - a, c + a - b, a + b - c], axis=-1)
    smin = np.min(slack, axis=-1)
    invalid = (smin < -INVALID_TOL * scale) | ~(np.min(L, axis=-1) > 0)
    slack = np.where(slack <= SNAP_TOL * scale[..., None], 0.0, slack)
    degenerate = ~invalid & (np.min(slack, axis=-1) == 0.0)
    area4 = np.sqrt((a + b + c) * slack[..., 0] * slack[..., 1] * slack[..., 2])
    sq = L * L
    ang = np.stack([
        np.arctan2(area4, sq[..., 1] + sq[..., 2] - sq[..., 0]),
        np.arctan2(area4, sq[..., 2] + sq[..., 0] - sq[..., 1]),
        np.arctan2(area4, sq[..., 0] + sq[..., 1] - sq[..., 2]),
    ], axis=-1)
    ang = np.where(invalid[..., None], np.nan, ang)
    status = np.where(invalid, 2, np.where(degenerate, 1, 0))
    return ang, status


def corner_angle(l_i: float, l_j: float, l_k: float) -> float:
    """Angle opposite ``l_i`` in the triangle with side lengths ``l_i, l_j, l_k``."""
    ang, status = _triangle_angles(np.array([l_i, l_j, l_k], dtype=float))
    if status == 2:
        raise InvalidTriangle(f"lengths {(l_i, l_j, l_k)} violate the triangle inequality")
    return float(ang[0])


@dataclass(frozen=True, eq=False)
class PLMetric:
    """Edge lengths on a triangulation (indexed like ``tri.edges``)."""

    tri: Triangulation
    lengths: np.ndarray

    def __post_init__(self):
        lengths = np.asarray(self.lengths, dtype=float).copy()
        if lengths.shape != (self.tri.edge_count,):
            raise ValueError(f"expected {self.tri.edge_count} lengths, got {lengths.shape}")
        lengths.setflags(write=False)
        object.__setattr__(self, "lengths", lengths)

    @cached_property
    def triangle_lengths(self) -> np.ndarray:
        """(F, 3) lengths; column k is the side opposite corner k."""
        return self.lengths[self.tri.triangle_edges]

    @cached_property
    def _kernel(self):
        return _triangle_angles(self.triangle_lengths)

    @property
    def triangle_status(self) -> np.ndarray:
        return self._kernel[1]

    @cached_property
    def classification(self) -> str:
        s = self.triangle_status
        if np.any(s == 2) or not np.all(np.isfinite(self.lengths)):
            return INVALID
        return GENERALIZED if np.any(s == 1) else STRICT

    @property
    def angles(self) -> np.ndarray:
        """(F, 3) corner angles; raises InvalidMetric on an invalid metric."""
        if self.classification == INVALID:
            bad = np.flatnonzero(self.triangle_status == 2)
            raise InvalidMetric(f"{len(bad)} triangles violate the triangle inequality (first: {bad[:5]})")
        return self._kernel[0]

    @cached_property
    def edge_opposite_angles(self) -> np.ndarray:
        """(E, 2) angles facing each edge, NaN in the missing slot of boundary edges."""
        t = self.tri
        out = np.full((t.edge_count, 2), np.nan)
        ang = self.angles
        te = t.triangle_edges
        f = np.arange(t.triangle_count)[:, None].repeat(3, 1)
        slot = (t.edge_triangles[te, 1] == f).astype(int)
        out[te.ravel(), slot.ravel()] = ang.ravel()
        return out

    def length(self, i: int, j: int) -> float:
        return float(self.lengths[self.tri.edge_id(i, j)])


def equilateral_metric(tri: Triangulation, length: float = 1.0) -> PLMetric:
    return PLMetric(tri, np.full(tri.edge_count, float(length)))


def metric_from_positions(tri: Triangulation, positions) -> PLMetric:
    p = np.asarray(positions, dtype=float)
    e = tri.edges
    return PLMetric(tri, np.linalg.norm(p[e[:, 0]] - p[e[:, 1]], axis=1))


def vertex_scale(m: PLMetric, w) -> PLMetric:
    """Length of edge vv' becomes exp(w(v) + w(v')) * l(vv')."""
    w = np.asarray(w, dtype=float)
    if w.shape != (m.tri.vertex_count,):
        raise ValueError(f"conformal factor has shape {w.shape}, expected ({m.tri.vertex_count},)")
    e = m.tri.edges
    return PLMetric(m.tri, np.exp(w[e[:, 0]] + w[e[:, 1]]) * m.lengths)


# observers of every curvature evaluation (used by the test-suite invariant checks)
_curvature_hooks: list = []


def add_curvature_hook(fn: Callable) -> None:
    _curvature_hooks.append(fn)


def remove_curvature_hook(fn: Callable) -> None:
    if fn in _curvature_hooks:
        _curvature_hooks.remove(fn)


def angle_sums(m: PLMetric) -> np.ndarray:
    return np.bincount(m.tri.triangles.ravel(), weights=m.angles.ravel(), minlength=m.tri.vertex_count)


def curvature(m: PLMetric) -> np.ndarray:
    """2*pi minus the angle sum at interior vertices, pi minus it on the boundary."""
    total = np.where(m.tri.is_boundary_vertex, np.pi, 2 * np.pi)
    K = total - angle_sums(m)
    for hook in list(_curvature_hooks):
        hook(m, K)
    return K


class DelaunayReport(NamedTuple):
    ok: bool
    violations: np.ndarray  # interior edges whose opposite angles sum above pi + tol
    obtuse_boundary: np.ndarray  # boundary edges facing an angle above pi/2 + tol


def is_delaunay(m: PLMetric, tol: float = 1e-9) -> DelaunayReport:
    opp = m.edge_opposite_angles
    inner = m.tri.interior_edges
    sums = opp[inner, 0] + opp[inner, 1]
    viol = inner[sums > np.pi + tol]
    bnd = np.flatnonzero(m.tri.is_boundary_edge)
    obtuse = bnd[opp[bnd, 0] > np.pi / 2 + tol]
    return DelaunayReport(len(viol) == 0, viol, obtuse)


def _cot(angle: np.ndarray) -> np.ndarray:
    s = np.sin(angle)
    if np.any(s < MIN_SIN):
        raise DegenerateAngle("an angle of 0 or pi makes the cotangent unbounded")
    return np.cos(angle) / s


def conductance(m: PLMetric) -> np.ndarray:
    """Per-edge sum of cotangents of the opposite angles (one term on boundary edges)."""
    ang = m.angles
    cot = _cot(ang)
    return np.bincount(m.tri.triangle_edges.ravel(), weights=cot.ravel(), minlength=m.tri.edge_count)


def angle_jacobian(l1: float, l2: float, l3: float) -> np.ndarray:
    """J[i, j] = d a_i / d w_j at w = 0, where a_i is the angle opposite l_i
    and w_j scales the vertex opposite l_j."""
    ang, status = _triangle_angles(np.array([l1, l2, l3], dtype=float))
    if status != 0:
        raise DegenerateTriangle(f"lengths {(l1, l2, l3)} do not form a strict triangle")
    s = np.sin(ang)
    cot = np.cos(ang) / s
    J = np.empty((3, 3))
    for i in range(3):
        j, k = (i + 1) % 3, (i + 2) % 3
        J[i, i] = -s[i] / (s[j] * s[k])
        J[i, j] = cot[k]
        J[i, k] = cot[j]
    return J


# -----------------------------------------------------------------------------
# spiral hexagonal metrics
# -----------------------------------------------------------------------------


def spiral_factors(b1: float, b2: float, b3: float) -> tuple[float, float]:
    """Positive factors (lam, mu) that make every lattice triangle degenerate.

    lam is the positive root of b2*b3*x**2 + (b3**2 - b1**2 - b2**2)*x - b2*b3,
    and mu = (lam*b2 + b3) / b1.
    """
    A = b2 * b3
    B = b3 * b3 - b1 * b1 - b2 * b2
    root = np.hypot(B, 2 * A)
    lam = 2 * A / (B + root) if B >= 0 else (root - B) / (2 * A)
    mu = (lam * b2 + b3) / b1
    return float(lam), float(mu)


@dataclass(frozen=True)
class SpiralParams:
    u1: np.ndarray
    u2: np.ndarray
    b: tuple
    lam: float
    mu: float


@dataclass(frozen=True, eq=False)
class SpiralPatch:
    tri: Triangulation
    metric: PLMetric  # flat lattice metric
    w: np.ndarray
    scaled: PLMetric  # vertex-scaled, every triangle degenerate
    params: SpiralParams
    keys: np.ndarray  # (V, 2) lattice coordinates (n, m)
    positions: np.ndarray

    def __iter__(self):
        return iter((self.tri, self.scaled, self.w))

    def vertex(self, n: int, m: int) -> int:
        e = int(self.keys[:, 0].max())
        return (n + e) * (2 * e + 1) + (m + e)


def build_spiral_patch(u1, u2, extent: int) -> SpiralPatch:
    """Lattice patch {n*u1 + m*u2 : |n|, |m| <= extent} with its spiral factor."""
    u1 = np.asarray(u1, dtype=float)
    u2 = np.asarray(u2, dtype=float)
    cross = u1[0] * u2[1] - u1[1] * u2[0]
    b = (float(np.linalg.norm(u1)), float(np.linalg.norm(u2)), float(np.linalg.norm(u2 - u1)))
    if abs(cross) <= 1e-12 * b[0] * b[1]:
        raise NotGeometricBasis("basis vectors are parallel")
    ang, _ = _triangle_angles(np.array([b[2], b[1], b[0]]))
    if np.max(ang) > np.pi / 2 + 1e-12:
        raise NotGeometricBasis("the basis triangle is obtuse, so the lattice is not Delaunay")
    extent = int(extent)
    if extent < 1:
        raise ValueError("extent must be >= 1")
    lam, mu = spiral_factors(*b)

    side = 2 * extent + 1
    nn, mm = np.meshgrid(np.arange(-extent, extent + 1), np.arange(-extent, extent + 1), indexing="ij")
    keys = np.column_stack([nn.ravel(), mm.ravel()])
    vid = lambda n, m: (n + extent) * side + (m + extent)  # noqa: E731
    tris = []
    for n in range(-extent, extent):
        for m in range(-extent, extent):
            tris.append((vid(n, m), vid(n + 1, m), vid(n, m + 1)))
            tris.append((vid(n + 1, m), vid(n + 1, m + 1), vid(n, m + 1)))
    tris = np.array(tris)
    if cross < 0:
        tris = tris[:, ::-1]
    tri = build_triangulation(tris, vertex_count=side * side)
    positions = keys[:, :1] * u1 + keys[:, 1:] * u2
    base = metric_from_positions(tri, positions)
    w = keys[:, 0] * np.log(lam) + keys[:, 1] * np.log(mu)
    scaled = vertex_scale(base, w)
    return SpiralPatch(tri, base, w, scaled, SpiralParams(u1, u2, b, lam, mu), keys, positions)
