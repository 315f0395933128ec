"""Run configuration, end-to-end pipeline runs and the refinement experiment."""

from __future__ import annotations

import ast
import json
import logging
import operator
import time
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Callable, NamedTuple, Optional

import numpy as np
import shapely

from .flow import FlowOptions
from .layout import Normalization, PLMap, develop, dilatation_stats, normalize_to_triangle, pl_map
from .mesh import MarkedDisk, hex_approximate
from .uniformize import UniformizationResult, UniformizeOptions, uniformize_with_retries

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class RunConfig:
    flow: FlowOptions = field(default_factory=FlowOptions)
    pin_marks: str = "first"
    retries: int = 4
    layout_tol: float = 1e-6
    boundary_tol: float = 1e-6
    interior_fraction: float = 0.1
    levels: tuple = ()
    n_rule: str = "6"
    seed: int = 0

    def __post_init__(self):
        for f in fields(self.flow):
            v = getattr(self.flow, f.name)
            if isinstance(v, float) and not v > 0:
                raise ValueError(f"flow option {f.name} must be positive")
        if self.layout_tol <= 0 or self.boundary_tol <= 0:
            raise ValueError("tolerances must be positive")
        if self.retries < 0:
            raise ValueError("retries must be >= 0")
        lv = list(self.levels)
        if any(b >= a for a, b in zip(lv, lv[1:])):
            raise ValueError("refinement levels must be strictly decreasing")

    @property
    def uniformize_options(self) -> UniformizeOptions:
        return UniformizeOptions(self.flow, self.pin_marks)

    @classmethod
    def from_json(cls, src) -> "RunConfig":
        obj = json.loads(Path(src).read_text()) if not isinstance(src, dict) else dict(src)
        flow = FlowOptions(**obj.pop("flow", {}))
        if "levels" in obj:
            obj["levels"] = tuple(float(x) for x in obj["levels"])
        known = {f.name for f in fields(cls)}
        unknown = set(obj) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(flow=flow, **obj)

    def with_overrides(self, **kw) -> "RunConfig":
        return replace(self, **{k: v for k, v in kw.items() if v is not None})


# -- refinement rule -----------------------------------------------------------

_OPS = {
    ast.Add: operator.add, ast.Sub: operator.sub, ast.Mult: operator.mul,
    ast.Div: operator.truediv, ast.FloorDiv: operator.floordiv, ast.Pow: operator.pow,
    ast.Mod: operator.mod, ast.USub: operator.neg, ast.UAdd: operator.pos,
}
_FUNCS = {"ceil": np.ceil, "floor": np.floor, "round": round, "max": max, "min": min, "int": int}


def compile_n_rule(expr: str) -> Callable[[int, float], int]:
    """Arithmetic in ``k`` (level index) and ``delta`` giving the subdivision level."""
    tree = ast.parse(expr, mode="eval")

    def ev(node, env):
        if isinstance(node, ast.Expression):
            return ev(node.body, env)
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
            return node.value
        if isinstance(node, ast.Name) and node.id in env:
            return env[node.id]
        if isinstance(node, ast.BinOp) and type(node.op) in _OPS:
            return _OPS[type(node.op)](ev(node.left, env), ev(node.right, env))
        if isinstance(node, ast.UnaryOp) and type(node.op) in _OPS:
            return _OPS[type(node.op)](ev(node.operand, env))
        if isinstance(node, ast.Call) and isinstance(node.func, ast.Name) and node.func.id in _FUNCS:
            return _FUNCS[node.func.id](*(ev(a, env) for a in node.args))
        raise ValueError(f"unsupported expression in n-rule: {ast.dump(node)}")

    ev(tree, {"k": 0, "delta": 1.0})  # reject bad syntax early

    def rule(k: int, delta: float) -> int:
        n = int(round(float(ev(tree, {"k": k, "delta": delta}))))
        if n < 1:
            raise ValueError(f"n-rule gave {n} at level {k}")
        return n

    return rule


# -- pipeline ------------------------------------------------------------------


class PipelineRun(NamedTuple):
    result: UniformizationResult
    normalization: Normalization
    map: Optional[PLMap]
    seconds: float


def run_pipeline(d: MarkedDisk, n: int, cfg: RunConfig = RunConfig(),
                 report: Optional[Callable[[str], None]] = None) -> PipelineRun:
    """Uniformize, lay out, normalize and (with planar positions) build the PL map."""
    t0 = time.perf_counter()
    res = uniformize_with_retries(d, n, cfg.uniformize_options, cfg.retries, report)
    chart = develop(res.metric, mark=res.marks[0], tol=cfg.layout_tol)
    norm = normalize_to_triangle(chart, res.marks, tol=cfg.boundary_tol)
    mp = None
    if res.complex.positions is not None:
        mp = pl_map(res.complex.positions, norm.chart.positions, res.complex.triangulation)
    return PipelineRun(res, norm, mp, time.perf_counter() - t0)


CONVERGENCE_COLUMNS = [
    "level", "delta", "n", "vertices", "dilatation_max", "dilatation_median",
    "residual_max", "angle_min", "angle_max", "edge_ratio_max", "seconds",
]


@dataclass
class ConvergenceReport:
    rows: list

    def column(self, name: str) -> np.ndarray:
        return np.array([r[name] for r in self.rows], dtype=float)

    def to_csv(self, path=None) -> str:
        lines = [",".join(CONVERGENCE_COLUMNS)]
        for r in self.rows:
            lines.append(",".join(
                str(r[c]) if isinstance(r[c], (int, np.integer)) else f"{r[c]:.12g}" for c in CONVERGENCE_COLUMNS
            ))
        text = "\n".join(lines) + "\n"
        if path is not None:
            Path(path).write_text(text)
        return text


def interior_triangles(positions: np.ndarray, tris: np.ndarray, polygon, fraction: float = 0.1) -> np.ndarray:
    """Triangles whose vertices all lie at least ``fraction * diameter`` from the polygon boundary."""
    poly = shapely.Polygon(polygon)
    pts = np.asarray(polygon, dtype=float)
    diam = float(np.max(np.linalg.norm(pts[:, None] - pts[None], axis=-1)))
    dist = shapely.distance(poly.exterior, shapely.points(positions[:, 0], positions[:, 1]))
    return np.flatnonzero(np.all(dist[tris] >= fraction * diam, axis=1))


def convergence(polygon, marks, levels, n_rule: str = "6", cfg: RunConfig = RunConfig(),
                report: Optional[Callable[[str], None]] = None) -> ConvergenceReport:
    rule = compile_n_rule(n_rule)
    rows = []
    for k, delta in enumerate(levels):
        t0 = time.perf_counter()
        d = hex_approximate(polygon, marks, delta)
        n = rule(k, delta)
        run = run_pipeline(d, n, cfg, report)
        res = run.result
        tris = res.complex.triangulation.triangles
        inner = interior_triangles(res.complex.positions, tris, polygon, cfg.interior_fraction)
        stats = dilatation_stats(run.map, inner)
        L = res.metric.triangle_lengths[inner]
        ratio = float(np.max(L.max(axis=1) / L.min(axis=1))) if len(L) else float("nan")
        rows.append({
            "level": k, "delta": float(delta), "n": res.n, "vertices": int(res.complex.triangulation.vertex_count),
            "dilatation_max": stats["max"], "dilatation_median": stats["median"],
            "residual_max": res.residual_max, "angle_min": res.angle_min, "angle_max": res.angle_max,
            "edge_ratio_max": ratio, "seconds": time.perf_counter() - t0,
        })
        logger.info("level %d: delta=%g n=%d median dilatation %.6f", k, delta, res.n, stats["median"])
    return ConvergenceReport(rows)
