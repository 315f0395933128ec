import io
import math

import numpy as np
import pytest
from scipy.optimize import brentq

from vscale.conformal import PLMetric, conductance, curvature, equilateral_metric, vertex_scale
from vscale.errors import FlowError
from vscale.flow import (
    FlowOptions,
    FlowProblem,
    corner_flow,
    curvature_flow,
    domain_check,
    subdivided_unit_triangle,
)
from vscale.laplace import ConductanceGraph
from vscale.mesh import build_triangulation, standard_subdivision

from _support import hexagon_complex


def apex_oracle(alpha):
    """w at the apex of one triangle with a unit base so that the apex angle is alpha."""
    def apex_angle(x):  # law of cosines with legs e^x and base 1
        return math.acos(1.0 - 0.5 * math.exp(-2 * x))

    return brentq(lambda x: apex_angle(x) - alpha, -math.log(2) + 1e-12, 3.0, xtol=1e-15)


def test_unchanged_target_returns_zero():
    m = equilateral_metric(hexagon_complex().tri)
    w, trace = curvature_flow(FlowProblem(m, curvature(m), [1]))
    assert np.all(w == 0)
    assert trace.status == "converged"


@pytest.mark.parametrize("alpha", [np.pi / 6, np.pi / 4, np.pi / 2, 0.9])
def test_single_triangle_closed_form(alpha):
    r = corner_flow(1, alpha)
    exact = -np.log(2 * np.sin(alpha / 2))
    assert r.w[r.apex] == pytest.approx(exact, abs=1e-9)
    assert r.w[r.apex] == pytest.approx(apex_oracle(alpha), abs=1e-9)
    assert r.ok


def test_right_angle_example():
    assert corner_flow(1, np.pi / 2).w[0] == pytest.approx(-0.5 * np.log(2), abs=1e-12)


def test_sixty_degrees_is_trivial():
    r = corner_flow(8, np.pi / 3)
    assert np.max(np.abs(r.w)) == 0.0
    assert r.ok


@pytest.mark.parametrize("n", [2, 3, 8])
@pytest.mark.parametrize("alpha", [np.pi / 6, np.pi / 4, np.pi / 2])
def test_corner_flow_checks(n, alpha):
    r = corner_flow(n, alpha)
    assert r.ok, r.checks
    K = curvature(r.metric)
    free = np.setdiff1d(np.arange(len(K)), r.pinned)
    assert K[r.apex] == pytest.approx(np.pi - alpha, abs=1e-9)
    interior = np.setdiff1d(free, [r.apex])
    assert np.max(np.abs(K[interior]), initial=0) < 1e-9
    np.testing.assert_array_equal(r.w[r.pinned], 0)
    np.testing.assert_allclose(r.w[r.reflection], r.w, atol=1e-10)
    # wider apex needs shorter legs
    assert np.sign(r.w[r.apex]) == np.sign(np.pi / 3 - alpha)


def test_reflection_is_an_involution_fixing_the_apex():
    c, apex, base, tau = subdivided_unit_triangle(5)
    np.testing.assert_array_equal(tau[tau], np.arange(len(tau)))
    assert tau[apex] == apex
    assert set(tau[base]) == set(base)
    tris = {tuple(sorted(t)) for t in c.tri.triangles}
    assert {tuple(sorted(tau[t])) for t in c.tri.triangles} == tris


def test_domain_check_examples():
    m = equilateral_metric(hexagon_complex().tri)
    rep = domain_check(m)
    assert rep.classification == "strict"
    assert rep.min_angle == pytest.approx(np.pi / 3)
    assert rep.min_eta == pytest.approx(1 / np.sqrt(3))
    w = np.zeros(7)
    w[[1, 2]] = 5.0
    assert domain_check(m, w).classification == "invalid"
    t = build_triangulation([[0, 1, 2]])
    flat = vertex_scale(equilateral_metric(t), [np.log(2.0), 0.0, 0.0])  # sides 2, 2, 1 then 1, 2, 2
    assert domain_check(flat).classification == "strict"
    deg = PLMetric(t, np.array([1.0, 1.0, 2.0]))
    rep = domain_check(deg)
    assert rep.classification == "generalized" and rep.degenerate and rep.min_eta == 0.0


def test_curvature_derivative_is_the_conductance_laplacian():
    c = standard_subdivision(hexagon_complex(), 2)
    rng = np.random.default_rng(0)
    m = vertex_scale(equilateral_metric(c.tri), rng.normal(0, 0.05, c.tri.vertex_count))
    L = ConductanceGraph(c.tri.vertex_count, c.tri.edges, conductance(m)).matrix.toarray()
    h = 1e-6
    for v in range(c.tri.vertex_count):
        d = np.zeros(c.tri.vertex_count)
        d[v] = h
        fd = (curvature(vertex_scale(m, d)) - curvature(vertex_scale(m, -d))) / (2 * h)
        err = np.abs(fd - L[:, v]) / np.maximum(1.0, np.abs(L[:, v]))
        assert err.max() < 1e-5


def test_closed_surface_scale_gauge():
    tet = build_triangulation([[0, 2, 1], [0, 1, 3], [1, 2, 3], [2, 0, 3]], mode="closed")
    m = equilateral_metric(tet)
    np.testing.assert_allclose(curvature(vertex_scale(m, np.full(4, 0.7))), curvature(m), atol=1e-14)
    # pinning one vertex fixes the gauge, and Gauss-Bonnet fixes the pinned curvature
    target = np.array([np.pi, 1.2 * np.pi, 0.9 * np.pi, 0.9 * np.pi])
    w, _ = curvature_flow(FlowProblem(m, target, [0]))
    K = curvature(vertex_scale(m, w))
    np.testing.assert_allclose(K, target, atol=1e-9)
    assert w[0] == 0


def test_global_flow_reaches_target():
    c = standard_subdivision(hexagon_complex(), 3)
    m = equilateral_metric(c.tri, c.edge_length)
    K0 = curvature(m)
    bnd = np.flatnonzero(c.tri.is_boundary_vertex)
    target = K0.copy()
    target[0] = 0.3  # make the centre a cone
    w, trace = curvature_flow(FlowProblem(m, target, bnd))
    K = curvature(vertex_scale(m, w))
    free = ~c.tri.is_boundary_vertex
    assert np.max(np.abs(K[free] - target[free])) < 1e-10
    assert trace.status == "converged"
    assert trace.rows[-1].t == pytest.approx(1.0)
    # rows carry the guard quantities
    assert all(r.min_angle > 0.01 and r.min_eta > 1e-6 for r in trace.rows)
    assert w[0] > 0  # a positively curved cone pulls its spokes in, so w at the tip grows


def test_unreachable_target_leaves_domain():
    m = equilateral_metric(hexagon_complex().tri)
    target = np.zeros(7)
    target[0] = 1.99 * np.pi
    with pytest.raises(FlowError):
        curvature_flow(FlowProblem(m, target, np.arange(1, 7), FlowOptions(max_halvings=4)))


def test_trace_csv():
    r = corner_flow(4, np.pi / 4)
    text = r.trace.to_csv()
    lines = text.strip().splitlines()
    assert lines[0] == "phase,t,residual,min_angle,min_eta,step"
    assert len(lines) == 1 + len(r.trace.rows) + len(r.trace.corrections)
    assert all(l.startswith(("flow,", "correction,")) for l in lines[1:])
    buf = io.StringIO()
    assert r.trace.to_csv(buf) is None and buf.getvalue() == text
    assert np.all(np.diff(r.trace.t) > 0)


def test_problem_validation():
    m = equilateral_metric(hexagon_complex().tri)
    with pytest.raises(ValueError):
        FlowProblem(m, np.zeros(6), [0])
    with pytest.raises(ValueError):
        FlowProblem(m, np.zeros(7), [])
    with pytest.raises(ValueError):
        corner_flow(4, 2.0)
