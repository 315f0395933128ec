"""Curvature-prescription flow.

Starting from a strict metric ``l`` with curvature ``K0``, the factor ``w(t)``
is integrated so that on free vertices the curvature of ``w(t) * l`` follows
``(1 - t) K0 + t K*`` while ``w`` stays 0 on the pinned set.  Differentiating
gives the pinned linear system::

    sum_j eta_ij(w) (w'_i - w'_j) = K*_i - K0_i      (i free)
    w'_i = 0                                          (i pinned)

solved once per explicit Euler step.  A damped Newton correction on the same
linearization removes the integration error at t = 1.
"""

from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass, field
from functools import lru_cache
from typing import NamedTuple, Optional

import numpy as np

from .conformal import (
    GENERALIZED,
    INVALID,
    STRICT,
    PLMetric,
    conductance,
    curvature,
    equilateral_metric,
    vertex_scale,
)
from .errors import LeftAdmissibleDomain, NonConvergence, StepUnderflow
from .laplace import ConductanceGraph, DirichletProblem, solve_dirichlet
from .mesh import EquilateralComplex, equilateral_triangle, standard_subdivision

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class FlowOptions:
    h0: float = 1.0 / 16
    max_halvings: int = 12
    tol: float = 1e-10
    min_angle: float = 0.01
    min_eta: float = 1e-6
    damping: float = 0.5
    damping_floor: float = 1.0 / 1024
    max_corrections: int = 50
    linear_tol: float = 1e-12
    max_steps: int = 4096


@dataclass(frozen=True, eq=False)
class FlowProblem:
    metric: PLMetric
    target: np.ndarray  # per-vertex target curvature; pinned entries are ignored
    pinned: np.ndarray
    options: FlowOptions = field(default_factory=FlowOptions)

    def __post_init__(self):
        n = self.metric.tri.vertex_count
        target = np.asarray(self.target, dtype=float)
        if target.shape != (n,):
            raise ValueError(f"target must have shape ({n},)")
        pinned = np.unique(np.asarray(self.pinned, dtype=np.int64))
        if len(pinned) == 0:
            raise ValueError("at least one vertex must be pinned")
        object.__setattr__(self, "target", target)
        object.__setattr__(self, "pinned", pinned)

    @property
    def free(self) -> np.ndarray:
        mask = np.ones(self.metric.tri.vertex_count, dtype=bool)
        mask[self.pinned] = False
        return np.flatnonzero(mask)


class DomainReport(NamedTuple):
    classification: str
    min_angle: float
    min_eta: float
    degenerate: bool


def domain_check(m: PLMetric, w=None, edges=None) -> DomainReport:
    """Smallest angle and conductance of ``w * m`` (restricted to ``edges`` if given).

    Generalized metrics report a minimum conductance of 0 (the cotangent of a
    flat or zero angle is unbounded, so the open domain has been left).
    """
    s = m if w is None else vertex_scale(m, w)
    cls = s.classification
    if cls == INVALID:
        return DomainReport(cls, float("nan"), float("nan"), False)
    ang = s.angles
    if cls == GENERALIZED:
        return DomainReport(cls, float(ang.min()), 0.0, True)
    eta = conductance(s)
    if edges is not None:
        eta = eta[edges]
    return DomainReport(cls, float(ang.min()), float(eta.min()) if len(eta) else float("inf"), False)


class TraceRow(NamedTuple):
    t: float
    w: np.ndarray
    residual: float
    min_angle: float
    min_eta: float
    step: float


@dataclass
class FlowTrace:
    rows: list = field(default_factory=list)
    corrections: list = field(default_factory=list)
    status: str = "running"

    @property
    def t(self) -> np.ndarray:
        return np.array([r.t for r in self.rows])

    def w_at(self, v: int) -> np.ndarray:
        return np.array([r.w[v] for r in self.rows])

    def to_csv(self, fh=None) -> Optional[str]:
        out = fh if fh is not None else io.StringIO()
        wr = csv.writer(out)
        wr.writerow(["phase", "t", "residual", "min_angle", "min_eta", "step"])
        for phase, rows in (("flow", self.rows), ("correction", self.corrections)):
            for r in rows:
                wr.writerow([phase] + [f"{x:.12g}" for x in (r.t, r.residual, r.min_angle, r.min_eta, r.step)])
        return out.getvalue() if fh is None else None


class _State(NamedTuple):
    w: np.ndarray
    metric: PLMetric
    K: np.ndarray
    eta: np.ndarray
    min_angle: float
    min_eta: float


def _evaluate(m0: PLMetric, w: np.ndarray, guard_edges: np.ndarray, opts: FlowOptions) -> Optional[_State]:
    """State at ``w`` or None when it lies outside the guarded domain."""
    m = vertex_scale(m0, w)
    if m.classification != STRICT:
        return None
    ang = m.angles
    amin = float(ang.min())
    if amin < opts.min_angle:
        return None
    eta = conductance(m)
    emin = float(eta[guard_edges].min()) if len(guard_edges) else float("inf")
    if emin < opts.min_eta:
        return None
    return _State(w, m, curvature(m), eta, amin, emin)


def _solve(state: _State, pinned: np.ndarray, rhs: np.ndarray, opts: FlowOptions) -> np.ndarray:
    t = state.metric.tri
    g = ConductanceGraph(t.vertex_count, t.edges, state.eta)
    return solve_dirichlet(DirichletProblem(g, pinned, 0.0, rhs), tol=opts.linear_tol)


def curvature_flow(p: FlowProblem):
    """Integrate the flow to t = 1 and polish; returns ``(w, trace)``."""
    opts = p.options
    m0 = p.metric
    tri = m0.tri
    free = p.free
    is_free = np.zeros(tri.vertex_count, dtype=bool)
    is_free[free] = True
    guard_edges = np.flatnonzero(is_free[tri.edges[:, 0]] | is_free[tri.edges[:, 1]])

    trace = FlowTrace()
    w = np.zeros(tri.vertex_count)
    state = _evaluate(m0, w, guard_edges, opts)
    if state is None:
        trace.status = "inadmissible start"
        raise LeftAdmissibleDomain("the start metric is not in the admissible domain")
    K0 = state.K
    target = p.target
    rhs = np.zeros(tri.vertex_count)
    rhs[free] = target[free] - K0[free]

    def residual(st, t):
        Kt = (1 - t) * K0 + t * target
        return float(np.max(np.abs(st.K[free] - Kt[free]))) if len(free) else 0.0

    trace.rows.append(TraceRow(0.0, w.copy(), 0.0, state.min_angle, state.min_eta, 0.0))
    if np.max(np.abs(rhs)) <= opts.tol:
        trace.rows.append(TraceRow(1.0, w.copy(), residual(state, 1.0), state.min_angle, state.min_eta, 1.0))
        trace.status = "converged"
        return w, trace

    t = 0.0
    h = opts.h0
    h_min = opts.h0 * 0.5 ** opts.max_halvings
    while t < 1.0:
        if len(trace.rows) > opts.max_steps:
            trace.status = "step underflow"
            raise StepUnderflow(f"{opts.max_steps} time steps used and only t={t:.6g} reached")
        wdot = _solve(state, p.pinned, rhs, opts)
        halvings = 0
        while True:
            step = min(h, 1.0 - t)
            cand = _evaluate(m0, state.w + step * wdot, guard_edges, opts)
            if cand is not None:
                break
            halvings += 1
            if h * 0.5 < h_min:
                trace.status = "left admissible domain"
                raise LeftAdmissibleDomain(
                    f"angle or conductance guard violated at t={t:.6g} with step {h:.3g}"
                )
            h *= 0.5
        t = 1.0 if step >= 1.0 - t else t + step
        state = cand
        trace.rows.append(TraceRow(t, state.w.copy(), residual(state, t), state.min_angle, state.min_eta, step))
        if halvings == 0:
            h = min(opts.h0, 2 * h)

    # damped Newton polish on the free-vertex curvature residual
    res = residual(state, 1.0)
    for _ in range(opts.max_corrections):
        if res < opts.tol:
            break
        r = np.zeros(tri.vertex_count)
        r[free] = target[free] - state.K[free]
        delta = _solve(state, p.pinned, r, opts)
        s = 1.0
        while True:
            cand = _evaluate(m0, state.w + s * delta, guard_edges, opts)
            if cand is not None:
                cres = residual(cand, 1.0)
                if cres < res:
                    break
            s *= opts.damping
            if s < opts.damping_floor:
                trace.status = "step underflow"
                raise StepUnderflow(f"correction damping fell below {opts.damping_floor} at residual {res:.3e}")
        state, res = cand, cres
        trace.corrections.append(TraceRow(1.0, state.w.copy(), res, state.min_angle, state.min_eta, s))
    else:
        if res >= opts.tol:
            trace.status = "not converged"
            raise NonConvergence(f"residual {res:.3e} after {opts.max_corrections} corrections")
    trace.status = "converged"
    return state.w.copy(), trace


# -----------------------------------------------------------------------------
# corner flow on the subdivided unit triangle
# -----------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class CornerFlowResult:
    n: int
    alpha: float
    complex: EquilateralComplex
    w: np.ndarray
    metric: PLMetric
    trace: FlowTrace
    apex: int
    pinned: np.ndarray
    reflection: np.ndarray  # vertex permutation swapping the two sides at the apex
    checks: dict

    @property
    def ok(self) -> bool:
        return all(self.checks.values())


def subdivided_unit_triangle(n: int):
    """n-subdivided unit triangle, apex index, base-side vertices and reflection."""
    c = standard_subdivision(equilateral_triangle(1.0), n)
    lat = c.macro.lattice[0]
    base = np.array([lat[i, n - i] for i in range(n + 1)])
    tau = np.arange(c.triangulation.vertex_count)
    for i1 in range(n + 1):
        for i2 in range(n + 1 - i1):
            tau[lat[i1, i2]] = lat[i2, i1]
    return c, int(lat[0, 0]), base, tau


@lru_cache(maxsize=64)
def corner_flow(n: int, alpha: float, options: FlowOptions = FlowOptions(), tol: float = 1e-9) -> CornerFlowResult:
    """Flow on the n-subdivided unit triangle bending the apex angle to ``alpha``.

    The base side is pinned, the apex targets curvature ``pi - alpha`` and
    every other free vertex targets 0.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if not (np.pi / 6 - 1e-12 <= alpha <= np.pi / 2 + 1e-12):
        raise ValueError("alpha must lie in [pi/6, pi/2]")
    c, apex, base, tau = subdivided_unit_triangle(n)
    m0 = equilateral_metric(c.triangulation, 1.0 / n)
    target = np.zeros(c.triangulation.vertex_count)
    target[apex] = np.pi - alpha
    w, trace = curvature_flow(FlowProblem(m0, target, base, options))
    m1 = vertex_scale(m0, w)

    ang = m1.angles
    d = abs(alpha - np.pi / 3)
    at_apex = m1.tri.triangles == apex
    dK = np.abs(curvature(m1)[base] - curvature(m0)[base])
    wa = trace.w_at(apex)
    steps = np.diff(wa)
    if abs(alpha - np.pi / 3) < 1e-15:
        monotone = bool(np.all(steps == 0))
    else:
        monotone = bool(np.all(np.sign(steps) == np.sign(np.pi / 3 - alpha)) and np.all(steps != 0))
    checks = {
        "angle_band": bool(ang.min() >= np.pi / 3 - d - tol and ang.max() <= np.pi / 3 + d + tol),
        "non_apex_bound": bool(ang[~at_apex].max() <= 59 * np.pi / 120 + tol),
        "base_curvature_change": bool(dK.sum() <= np.pi / 6 + tol),
        "symmetry": bool(np.max(np.abs(w[tau] - w)) <= 1e-10),
        "monotone_apex": monotone,
    }
    for arr in (w,):
        arr.setflags(write=False)
    return CornerFlowResult(n, alpha, c, w, m1, trace, apex, base, tau, checks)
