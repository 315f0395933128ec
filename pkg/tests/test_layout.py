import numpy as np
import pytest

from vscale.conformal import build_spiral_patch, equilateral_metric, metric_from_positions, vertex_scale
from vscale.errors import DegenerateSourceTriangle, InconsistentDevelopment, NotATriangleBoundary
from vscale.layout import (
    UNIT_TRIANGLE,
    develop,
    dilatation_stats,
    normalize_to_triangle,
    pl_map,
    spiral_holonomy,
    svg_triangles,
)
from vscale.mesh import build_triangulation, equilateral_triangle, standard_subdivision

from _support import corner_disk, hexagon_complex


def edge_lengths(tri, pos):
    return np.linalg.norm(pos[tri.edges[:, 0]] - pos[tri.edges[:, 1]], axis=1)


def test_single_triangle_layout():
    t = build_triangulation([[0, 1, 2]])
    ch = develop(equilateral_metric(t))
    np.testing.assert_allclose(ch.positions, UNIT_TRIANGLE, atol=1e-15)
    assert ch.mismatch < 1e-15


def test_subdivided_triangle_recovers_lattice():
    c = standard_subdivision(equilateral_triangle(), 7)
    ch = develop(equilateral_metric(c.tri, c.edge_length))
    # seed triangle 0 has its first vertex at the origin and first edge on the x-axis
    t0 = c.tri.triangles[0]
    assert np.allclose(ch.positions[t0[0]], 0) and abs(ch.positions[t0[1], 1]) < 1e-15
    assert ch.positions[t0[1], 0] > 0
    # same shape as the input positions up to a rigid motion
    P, Q = c.positions - c.positions[t0[0]], ch.positions
    u = P[t0[1]] / np.linalg.norm(P[t0[1]])
    R = np.array([[u[0], u[1]], [-u[1], u[0]]])
    np.testing.assert_allclose(P @ R.T, Q, atol=1e-12)
    assert ch.mismatch < 1e-12


def test_develop_is_a_left_inverse():
    c = standard_subdivision(hexagon_complex(), 4)
    rng = np.random.default_rng(0)
    pos = c.positions + rng.normal(scale=0.02, size=c.positions.shape)
    m = metric_from_positions(c.tri, pos)
    ch = develop(m)
    rel = np.abs(edge_lengths(c.tri, ch.positions) - m.lengths) / m.lengths
    assert rel.max() < 1e-10


def test_curved_metric_cannot_be_embedded():
    c = standard_subdivision(hexagon_complex(), 3)
    m = equilateral_metric(c.tri, c.edge_length)
    w = np.zeros(c.tri.vertex_count)
    w[0] = 0.3  # cone at the centre
    with pytest.raises(InconsistentDevelopment):
        develop(vertex_scale(m, w))
    ch = develop(vertex_scale(m, w), mode="immersed")
    assert ch.positions is None and ch.corners.shape == (c.tri.triangle_count, 3, 2)


def test_seed_choice_by_mark():
    d = corner_disk()
    m = equilateral_metric(d.tri)
    ch = develop(m, mark=6)
    assert ch.order[0] == 4  # the only triangle at vertex 6


def test_normalize_identity():
    c = equilateral_triangle()
    ch = develop(equilateral_metric(c.tri))
    n = normalize_to_triangle(ch, (0, 1, 2))
    assert n.scale == pytest.approx(1) and n.shift == pytest.approx(0)
    np.testing.assert_allclose(n.chart.positions, UNIT_TRIANGLE, atol=1e-15)


def test_normalize_inverts_a_similarity():
    c = standard_subdivision(equilateral_triangle(), 5)
    ch = develop(equilateral_metric(c.tri, c.edge_length))
    a = 3 * np.exp(0.7j)
    moved = ch.transformed(a, 2 - 1j)
    n = normalize_to_triangle(moved, (0, 1, 2))
    assert n.boundary_deviation < 1e-10
    np.testing.assert_allclose(n.chart.positions, normalize_to_triangle(ch, (0, 1, 2)).chart.positions, atol=1e-12)


def test_normalize_rejects_non_triangle():
    ch = develop(equilateral_metric(hexagon_complex().tri))
    with pytest.raises(NotATriangleBoundary):
        normalize_to_triangle(ch, (1, 3, 5))


def test_pl_map_examples():
    c = standard_subdivision(hexagon_complex(), 2)
    P = c.positions
    ident = pl_map(P, P, c.tri)
    np.testing.assert_allclose(ident.linear, np.broadcast_to(np.eye(2), ident.linear.shape), atol=1e-14)
    np.testing.assert_allclose(ident.dilatation, 1.0)
    double = pl_map(P, 2 * P, c.tri)
    np.testing.assert_allclose(double.linear, np.broadcast_to(2 * np.eye(2), double.linear.shape), atol=1e-14)
    np.testing.assert_allclose(double.dilatation, 1.0)
    stretch = pl_map(P, P * [2.0, 1.0], c.tri)
    np.testing.assert_allclose(stretch.dilatation, 2.0)
    assert np.all(stretch.determinant > 0)
    assert stretch.edge_residual < 1e-14
    s = dilatation_stats(stretch, [0, 1, 2])
    assert s["max"] == pytest.approx(2) and s["median"] == pytest.approx(2) and len(s["values"]) == 3


def test_pl_map_rejects_flat_source():
    t = build_triangulation([[0, 1, 2]])
    with pytest.raises(DegenerateSourceTriangle):
        pl_map([[0, 0], [1, 0], [2, 0]], UNIT_TRIANGLE, t)


def test_dilatation_grows_linearly_with_perturbation():
    t = build_triangulation([[0, 1, 2]])
    rng = np.random.default_rng(1)
    ratios = []
    for eps in (1e-2, 1e-3, 1e-4):
        d = rng.normal(size=(3, 2))
        d *= eps / np.abs(d).max()
        dil = pl_map(UNIT_TRIANGLE, UNIT_TRIANGLE + d, t).dilatation[0]
        ratios.append((dil - 1) / eps)
    assert max(ratios) < 10


def test_spiral_holonomy():
    patch = build_spiral_patch([1.0, 0.0], [0.3, 1.1], 4)
    ch = develop(patch.scaled, mode="immersed")
    hol = spiral_holonomy(ch, patch)
    assert hol["residual"] < 1e-8
    assert abs(hol["u1"].factor) == pytest.approx(patch.params.lam ** 2, rel=1e-9)
    assert abs(hol["u2"].factor) == pytest.approx(patch.params.mu ** 2, rel=1e-9)
    # every realized edge keeps its length, degenerate triangles included
    F = patch.tri.triangles
    for k in range(3):
        i, j = F[:, (k + 1) % 3], F[:, (k + 2) % 3]
        got = np.linalg.norm(ch.corners[:, (k + 1) % 3] - ch.corners[:, (k + 2) % 3], axis=1)
        want = np.array([patch.scaled.length(a, b) for a, b in zip(i, j)])
        np.testing.assert_allclose(got, want, rtol=1e-10)


def test_svg_output():
    text = svg_triangles(UNIT_TRIANGLE[None], overlay=UNIT_TRIANGLE[None])
    assert text.startswith("<svg") and text.rstrip().endswith("</svg>")
    assert text.count("<polygon") == 2
