import numpy as np
import pytest

from vscale.conformal import equilateral_metric
from vscale.errors import SingularSystem
from vscale.laplace import (
    ConductanceGraph,
    DirichletProblem,
    dirichlet_energy,
    laplacian_apply,
    solve_dirichlet,
)
from vscale.mesh import equilateral_triangle, standard_subdivision


def path_graph(eta=(1.0, 1.0)):
    return ConductanceGraph(3, [[0, 1], [1, 2]], list(eta))


def random_graph(rng, n, p=0.3, negative=False):
    """Connected random graph: a spanning path plus random chords."""
    perm = rng.permutation(n)
    edges = {tuple(sorted((int(perm[i]), int(perm[i + 1])))) for i in range(n - 1)}
    for i in range(n):
        for j in range(i + 1, n):
            if rng.random() < p:
                edges.add((i, j))
    edges = np.array(sorted(edges))
    lo = -0.5 if negative else 0.05
    return ConductanceGraph(n, edges, rng.uniform(lo, 2.0, len(edges)))


def test_path_examples():
    g = path_graph()
    np.testing.assert_allclose(laplacian_apply(g, [0, 1, 2]), [-1, 0, 1])
    assert dirichlet_energy(g, [0, 1, 2]) == pytest.approx(1.0)
    f = solve_dirichlet(DirichletProblem(g, [0, 2], [0.0, 2.0]))
    np.testing.assert_allclose(f, [0, 1, 2], atol=1e-14)
    f = solve_dirichlet(DirichletProblem(path_graph((1.0, 3.0)), [0, 2], [0.0, 4.0]))
    assert f[1] == pytest.approx(3.0)


def test_matrix_matches_apply():
    rng = np.random.default_rng(0)
    g = random_graph(rng, 20, negative=True)
    f = rng.normal(size=20)
    np.testing.assert_allclose(g.matrix @ f, laplacian_apply(g, f), atol=1e-12)
    np.testing.assert_allclose(np.asarray(g.matrix.sum(axis=1)).ravel(), 0, atol=1e-12)


def test_solve_matches_dense_oracle():
    rng = np.random.default_rng(1)
    for trial in range(20):
        n = int(rng.integers(5, 30))
        g = random_graph(rng, n, negative=trial % 2 == 1)
        pinned = rng.choice(n, size=int(rng.integers(1, n // 2 + 1)), replace=False)
        vals = rng.normal(size=len(pinned))
        src = rng.normal(size=n)
        # dense oracle built from the edge list
        L = np.zeros((n, n))
        for (i, j), e in zip(g.edges, g.eta):
            L[i, i] += e
            L[j, j] += e
            L[i, j] -= e
            L[j, i] -= e
        free = np.setdiff1d(np.arange(n), pinned)
        A = L[np.ix_(free, free)]
        if abs(np.linalg.det(A)) < 1e-8:
            continue
        x = np.linalg.solve(A, src[free] - L[np.ix_(free, pinned)] @ vals)
        f = solve_dirichlet(DirichletProblem(g, pinned, vals, src))
        np.testing.assert_allclose(f[free], x, atol=1e-9 * max(1, np.abs(x).max()))
        np.testing.assert_allclose(f[pinned], vals)


def test_energy_is_minimised_by_harmonic_extension():
    c = standard_subdivision(equilateral_triangle(), 6)
    g = ConductanceGraph.from_metric(equilateral_metric(c.tri, c.edge_length))
    bnd = np.flatnonzero(c.tri.is_boundary_vertex)
    vals = np.cos(3 * c.positions[bnd, 0]) + c.positions[bnd, 1]
    f = solve_dirichlet(DirichletProblem(g, bnd, vals))
    E = dirichlet_energy(g, f)
    rng = np.random.default_rng(2)
    interior = ~c.tri.is_boundary_vertex
    for _ in range(20):
        d = np.zeros_like(f)
        d[interior] = rng.normal(scale=1e-2, size=interior.sum())
        assert dirichlet_energy(g, f + d) > E
    # the energy is the quadratic form of L
    assert E == pytest.approx(0.5 * f @ (g.matrix @ f), rel=1e-12)


def test_unpinned_component_is_singular():
    g = ConductanceGraph(4, [[0, 1], [2, 3]], [1.0, 1.0])
    with pytest.raises(SingularSystem):
        solve_dirichlet(DirichletProblem(g, [0], [1.0]))
    # a vanishing conductance disconnects as well
    with pytest.raises(SingularSystem):
        solve_dirichlet(DirichletProblem(path_graph((1.0, 0.0)), [0], [1.0]))


def test_green_identities():
    rng = np.random.default_rng(4)
    for _ in range(50):
        n = int(rng.integers(3, 40))
        g = random_graph(rng, n, negative=True)
        f, h = rng.normal(size=(2, n))
        Lf, Lh = laplacian_apply(g, f), laplacian_apply(g, h)
        i, j = g.edges.T
        form = np.sum(g.eta * (f[i] - f[j]) * (h[i] - h[j]))
        assert h @ Lf == pytest.approx(form, abs=1e-10 * max(1, abs(form)))
        assert h @ Lf - f @ Lh == pytest.approx(0, abs=1e-10 * max(1, abs(form)))


def test_maximum_principle():
    rng = np.random.default_rng(5)
    for _ in range(50):
        n = int(rng.integers(4, 40))
        g = random_graph(rng, n)
        pinned = rng.choice(n, size=int(rng.integers(1, n // 2 + 1)), replace=False)
        vals = rng.normal(size=len(pinned))
        f = solve_dirichlet(DirichletProblem(g, pinned, vals))
        assert f.max() <= vals.max() + 1e-10
        assert f.min() >= vals.min() - 1e-10


def test_full_output_reports_negative_conductances():
    g = ConductanceGraph(3, [[0, 1], [1, 2], [0, 2]], [1.0, 1.0, -0.2])
    f, info = solve_dirichlet(DirichletProblem(g, [0, 2], [0.0, 1.0]), full_output=True)
    assert info.negative_eta == 1
    assert info.residual < 1e-12
    assert f[1] == pytest.approx(0.5)


def test_invalid_inputs():
    with pytest.raises(ValueError):
        ConductanceGraph(2, [[0, 0]], [1.0])
    with pytest.raises(ValueError):
        ConductanceGraph(2, [[0, 2]], [1.0])
    with pytest.raises(ValueError):
        laplacian_apply(path_graph(), [1.0, 2.0])
