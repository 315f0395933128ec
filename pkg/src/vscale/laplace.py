"""Weighted graph Laplacians and pinned (Dirichlet) linear problems.

Convention: ``(L f)_i = sum_j eta_ij (f_i - f_j)``, so ``L`` is positive
semi-definite when every conductance is non-negative.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from functools import cached_property
from typing import Any, NamedTuple, Optional

import numpy as np
from scipy import sparse
from scipy.sparse import csgraph
from scipy.sparse import linalg as spla

from .errors import NonConvergence, SingularSystem

logger = logging.getLogger(__name__)

ZERO_ETA = 1e-15  # relative to the largest conductance


@dataclass(frozen=True, eq=False)
class ConductanceGraph:
    n: int
    edges: np.ndarray  # (E, 2)
    eta: np.ndarray  # (E,)
    source: Any = None

    def __post_init__(self):
        edges = np.asarray(self.edges, dtype=np.int64).reshape(-1, 2)
        eta = np.asarray(self.eta, dtype=float).reshape(-1)
        if len(edges) != len(eta):
            raise ValueError("one conductance per edge required")
        if np.any(edges[:, 0] == edges[:, 1]):
            raise ValueError("self-loops are not allowed")
        if len(edges) and (edges.min() < 0 or edges.max() >= self.n):
            raise ValueError("edge endpoint out of range")
        object.__setattr__(self, "edges", edges)
        object.__setattr__(self, "eta", eta)

    @classmethod
    def from_metric(cls, m) -> "ConductanceGraph":
        from .conformal import conductance

        return cls(m.tri.vertex_count, m.tri.edges, conductance(m), source=m)

    @cached_property
    def matrix(self) -> sparse.csr_matrix:
        i, j = self.edges[:, 0], self.edges[:, 1]
        off = sparse.coo_matrix(
            (np.concatenate([self.eta, self.eta]), (np.concatenate([i, j]), np.concatenate([j, i]))),
            shape=(self.n, self.n),
        ).tocsr()
        deg = np.asarray(off.sum(axis=1)).ravel()
        return (sparse.diags(deg) - off).tocsr()

    @property
    def has_negative(self) -> bool:
        return bool(np.any(self.eta < 0))


def laplacian_apply(g: ConductanceGraph, f) -> np.ndarray:
    f = np.asarray(f, dtype=float)
    if f.shape != (g.n,):
        raise ValueError(f"vector has shape {f.shape}, expected ({g.n},)")
    i, j = g.edges[:, 0], g.edges[:, 1]
    flux = g.eta * (f[i] - f[j])
    return np.bincount(i, weights=flux, minlength=g.n) - np.bincount(j, weights=flux, minlength=g.n)


def dirichlet_energy(g: ConductanceGraph, f) -> float:
    """Half the conductance-weighted sum of squared differences over undirected edges."""
    f = np.asarray(f, dtype=float)
    d = f[g.edges[:, 0]] - f[g.edges[:, 1]]
    return 0.5 * float(np.sum(g.eta * d * d))


@dataclass(frozen=True, eq=False)
class DirichletProblem:
    graph: ConductanceGraph
    pinned: np.ndarray
    values: np.ndarray  # prescribed values on ``pinned``
    source: Optional[np.ndarray] = None  # full-length; only free entries are used

    def __post_init__(self):
        pinned = np.asarray(self.pinned, dtype=np.int64).reshape(-1)
        values = np.broadcast_to(np.asarray(self.values, dtype=float), pinned.shape).copy()
        if len(np.unique(pinned)) != len(pinned):
            raise ValueError("pinned vertices must be distinct")
        object.__setattr__(self, "pinned", pinned)
        object.__setattr__(self, "values", values)
        if self.source is not None:
            b = np.asarray(self.source, dtype=float)
            if b.shape != (self.graph.n,):
                raise ValueError("source must have one entry per vertex")
            object.__setattr__(self, "source", b)


class SolveInfo(NamedTuple):
    residual: float
    method: str
    negative_eta: int


def solve_dirichlet(p: DirichletProblem, tol: float = 1e-10, full_output: bool = False):
    """Solve (L f)_i = b_i off the pinned set with f fixed on it."""
    g = p.graph
    n = g.n
    eta = g.eta
    scale = np.max(np.abs(eta)) if len(eta) else 0.0
    keep = np.abs(eta) > ZERO_ETA * scale
    edges = g.edges[keep]
    negative = int(np.sum(eta < 0))
    if negative:
        logger.debug("dirichlet solve with %d negative conductances", negative)

    free_mask = np.ones(n, dtype=bool)
    free_mask[p.pinned] = False
    free = np.flatnonzero(free_mask)
    f = np.zeros(n)
    f[p.pinned] = p.values
    if len(free) == 0:
        return (f, SolveInfo(0.0, "none", negative)) if full_output else f

    adj = sparse.coo_matrix((np.ones(len(edges)), (edges[:, 0], edges[:, 1])), shape=(n, n))
    _, label = csgraph.connected_components(adj, directed=False)
    anchored = np.zeros(label.max() + 1, dtype=bool)
    anchored[label[p.pinned]] = True
    if not anchored[label[free]].all():
        raise SingularSystem("a component of free vertices has no pinned vertex")

    L = ConductanceGraph(n, edges, eta[keep]).matrix
    L_ff = L[free][:, free].tocsc()
    b = np.zeros(n) if p.source is None else p.source
    rhs = b[free] - L[free][:, p.pinned] @ p.values
    rscale = max(1.0, float(np.max(np.abs(rhs))))

    def residual(x):
        return float(np.max(np.abs(L_ff @ x - rhs))) if len(x) else 0.0

    method = "lu"
    try:
        lu = spla.splu(L_ff)
        x = lu.solve(rhs)
        for _ in range(3):
            if not np.all(np.isfinite(x)):
                break
            r = rhs - L_ff @ x
            if np.max(np.abs(r)) <= tol * rscale * 1e-2:
                break
            x = x + lu.solve(r)
    except RuntimeError as exc:  # exactly singular factor
        raise SingularSystem(f"reduced Laplacian is singular: {exc}") from exc

    res = residual(x) if np.all(np.isfinite(x)) else np.inf
    if res > tol * rscale:
        method = "gmres"
        try:
            ilu = spla.spilu(L_ff, drop_tol=1e-6)
            M = spla.LinearOperator(L_ff.shape, ilu.solve)
        except RuntimeError:
            M = None
        x0 = x if np.all(np.isfinite(x)) else None
        x, status = spla.gmres(L_ff, rhs, x0=x0, M=M, rtol=tol * 1e-2, atol=0.0, maxiter=2000)
        res = residual(x)
        if status != 0 or res > tol * rscale:
            raise NonConvergence(f"linear residual {res:.3e} above tolerance")
    f[free] = x
    if full_output:
        return f, SolveInfo(res / rscale, method, negative)
    return f
