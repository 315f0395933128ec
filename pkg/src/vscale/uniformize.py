"""Flatten a marked equilateral disk onto an equilateral triangle.

Two stages on the n-th standard subdivision:

1. every boundary corner (non-marked vertex of nonzero curvature, shared by
   k macro triangles) is smoothed by gluing k copies of the corner flow that
   bends the apex to pi/k, which removes its curvature;
2. the global flow drives the remaining curvature to 0 away from the marks
   and to 2*pi/3 at the marks.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .conformal import PLMetric, curvature, equilateral_metric, is_delaunay, vertex_scale
from .errors import (
    BallsOverlap,
    FlowError,
    GeometryError,
    NonConvergence,
    SingularSystem,
)
from .flow import FlowOptions, FlowProblem, FlowTrace, corner_flow, curvature_flow
from .mesh import EquilateralComplex, MarkedDisk, standard_subdivision

logger = logging.getLogger(__name__)

CURVATURE_TOL = 1e-9
MARK_CURVATURE = 2 * np.pi / 3


@dataclass(frozen=True)
class Corner:
    vertex: int
    degree: int  # neighbour count m
    triangles: int  # incident triangles, m - 1
    curvature: float

    @property
    def alpha(self) -> float:
        """Apex angle that removes the curvature when shared by every incident triangle."""
        return np.pi / self.triangles


def detect_corners(d: MarkedDisk) -> list:
    tri = d.tri
    K = curvature(equilateral_metric(tri, d.complex.edge_length))
    marks = set(d.marks or ())
    out = []
    for v in tri.boundary_cycle:
        if v in marks or abs(K[v]) <= CURVATURE_TOL:
            continue
        k = int(tri.vertex_triangle_count[v])
        out.append(Corner(int(v), k + 1, k, float(K[v])))
    return out


def _corner_patch(sub: EquilateralComplex, corner: Corner, r: int, cf):
    """(vertex ids, values) of the corner-flow factor placed on every triangle at the corner."""
    tri = sub.macro.parent.triangulation
    lattice = sub.macro.lattice
    n = sub.macro.n
    cl = cf.complex.macro.lattice[0]
    ids, vals = [], []
    for f in np.flatnonzero((tri.triangles == corner.vertex).any(axis=1)):
        c = int(np.flatnonzero(tri.triangles[f] == corner.vertex)[0])
        for j1 in range(r + 1):
            for j2 in range(r + 1 - j1):
                W = [0, 0, 0]
                W[c], W[(c + 1) % 3], W[(c + 2) % 3] = n - j1 - j2, j1, j2
                ids.append(lattice[f, W[1], W[2]])
                vals.append(cf.w[cl[j1, j2]])
    return np.array(ids), np.array(vals)


def diffuse_corners(d: MarkedDisk, n: int, sub: Optional[EquilateralComplex] = None,
                    corners: Optional[list] = None, flow_options: FlowOptions = FlowOptions()) -> np.ndarray:
    """First-stage factor on the n-th subdivision; zero outside the corner balls.

    Corners shared by a single triangle cannot be bent to an angle of pi and
    are left for the global flow.
    """
    if sub is None:
        sub = standard_subdivision(d.complex, n)
    if corners is None:
        corners = detect_corners(d)
    w = np.zeros(sub.triangulation.vertex_count)
    usable = [c for c in corners if c.triangles >= 2]
    for c in corners:
        if c.triangles < 2:
            logger.warning("vertex %d is an unmarked 60-degree corner; left to the global flow", c.vertex)
    if not usable:
        return w
    r = n // 3
    if r < 1:
        raise BallsOverlap(f"n={n} leaves no room for corner balls (need n >= 3)")
    owner = np.full(len(w), -1)
    total = np.zeros(len(w))
    count = np.zeros(len(w))
    for c in usable:
        cf = corner_flow(r, c.alpha, flow_options)
        ids, vals = _corner_patch(sub, c, r, cf)
        clash = (owner[ids] >= 0) & (owner[ids] != c.vertex)
        if np.any(clash):
            raise BallsOverlap(f"corner balls of radius {r} around {c.vertex} and {owner[ids][clash][0]} meet")
        owner[ids] = c.vertex
        np.add.at(total, ids, vals)
        np.add.at(count, ids, 1)
    hit = count > 0
    w[hit] = total[hit] / count[hit]
    return w


@dataclass(frozen=True)
class UniformizeOptions:
    flow: FlowOptions = field(default_factory=FlowOptions)
    pin_marks: str = "first"  # "first": pin p only; "all": pin p, q, r


@dataclass(frozen=True, eq=False)
class UniformizationResult:
    n: int
    complex: EquilateralComplex
    w: np.ndarray
    w1: np.ndarray
    w2: np.ndarray
    metric: PLMetric
    residual: np.ndarray
    marks: tuple
    corners: list
    trace: FlowTrace

    @property
    def residual_max(self) -> float:
        return float(np.max(np.abs(self.residual)))

    @property
    def angle_min(self) -> float:
        return float(self.metric.angles.min())

    @property
    def angle_max(self) -> float:
        return float(self.metric.angles.max())

    @property
    def boundary_angle_max(self) -> float:
        """Largest angle facing a boundary edge."""
        opp = self.metric.edge_opposite_angles
        return float(np.nanmax(opp[self.metric.tri.is_boundary_edge, 0]))

    def delaunay(self, tol: float = 1e-9):
        return is_delaunay(self.metric, tol)

    def to_json(self) -> dict:
        return {
            "n": self.n,
            "w": [float(x) for x in self.w],
            "residual_max": self.residual_max,
            "angle_min": self.angle_min,
            "angle_max": self.angle_max,
            "marks": [int(m) for m in self.marks],
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json())


def target_curvature(vertex_count: int, marks) -> np.ndarray:
    K = np.zeros(vertex_count)
    K[list(marks)] = MARK_CURVATURE
    return K


def uniformize(d: MarkedDisk, n: int, opts: UniformizeOptions = UniformizeOptions()) -> UniformizationResult:
    if d.marks is None:
        raise GeometryError("uniformization needs three marks")
    counts = d.tri.vertex_triangle_count[list(d.marks)]
    if np.any(counts != 1):
        raise GeometryError("every mark must have exactly one incident triangle")
    if opts.pin_marks not in ("first", "all"):
        raise ValueError("pin_marks must be 'first' or 'all'")
    if n < 1:
        raise ValueError("n must be >= 1")

    sub = standard_subdivision(d.complex, n)
    base = equilateral_metric(sub.triangulation, sub.edge_length)
    corners = detect_corners(d)
    w1 = diffuse_corners(d, n, sub, corners, opts.flow)
    lhat = vertex_scale(base, w1)
    target = target_curvature(sub.triangulation.vertex_count, d.marks)
    pinned = list(d.marks) if opts.pin_marks == "all" else [d.marks[0]]
    w2, trace = curvature_flow(FlowProblem(lhat, target, pinned, opts.flow))
    w = w1 + w2
    final = vertex_scale(base, w)
    residual = curvature(final) - target
    return UniformizationResult(n, sub, w, w1, w2, final, residual, tuple(d.marks), corners, trace)


RETRYABLE = (BallsOverlap, FlowError, NonConvergence, SingularSystem)


def uniformize_with_retries(d: MarkedDisk, n: int, opts: UniformizeOptions = UniformizeOptions(),
                            retries: int = 4, report: Optional[Callable[[str], None]] = None):
    """Double n after a retryable failure, at most ``retries`` times."""
    for attempt in range(retries + 1):
        try:
            return uniformize(d, n, opts)
        except RETRYABLE as exc:
            msg = f"n={n}: {type(exc).__name__}: {exc}"
            if report is not None:
                report(msg)
            else:
                logger.warning(msg)
            if attempt == retries:
                raise
            n *= 2
