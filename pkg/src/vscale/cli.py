"""Command-line entry point.

Exit codes: 0 success, 1 usage, 2 geometry or validation failure, 3 flow failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import io
from .conformal import build_spiral_patch, corner_angle, curvature
from .errors import (
    BallsOverlap,
    FlowError,
    GeometryError,
    InconsistentDevelopment,
    MeshError,
    NonConvergence,
    NotATriangleBoundary,
    SingularSystem,
    VScaleError,
)
from .harness import RunConfig, convergence, run_pipeline
from .layout import UNIT_TRIANGLE, develop, spiral_holonomy, svg_triangles
from .mesh import hex_approximate

logger = logging.getLogger("vscale")

FLOW_FAILURES = (FlowError, NonConvergence, SingularSystem, BallsOverlap)


def _floats(text: str, count: int = None) -> list:
    vals = [float(x) for x in text.split(",") if x.strip()]
    if count is not None and len(vals) != count:
        raise argparse.ArgumentTypeError(f"expected {count} comma-separated numbers")
    return vals


def cmd_approximate(args, cfg: RunConfig) -> int:
    poly, marks = io.load_polygon(args.polygon)
    d = hex_approximate(poly, marks, args.delta)
    io.save_mesh(io.mesh_from_disk(d), args.out)
    t = d.tri
    print(f"{args.out}: {t.vertex_count} vertices, {t.triangle_count} triangles, "
          f"boundary Hausdorff distance {d.boundary_hausdorff:.6g}")
    return 0


def cmd_uniformize(args, cfg: RunConfig) -> int:
    d = io.disk_from_mesh(io.load_mesh(args.mesh))
    if args.retries is not None:
        cfg = cfg.with_overrides(retries=args.retries)
    run = run_pipeline(d, args.n, cfg, report=lambda msg: print(f"retry: {msg}", file=sys.stderr))
    res, norm = run.result, run.normalization
    prefix = args.out_prefix
    out = res.to_json()
    out["boundary_deviation"] = norm.boundary_deviation
    out["layout_mismatch"] = norm.chart.mismatch
    if run.map is not None:
        out["dilatation_max"] = float(run.map.dilatation.max())
    Path(f"{prefix}.json").write_text(json.dumps(out) + "\n")
    Path(f"{prefix}.positions.json").write_text(io.dumps_positions(norm.chart.positions))
    tris = res.complex.triangulation.triangles
    if res.complex.positions is not None:
        Path(f"{prefix}.source.svg").write_text(svg_triangles(res.complex.positions[tris]))
    Path(f"{prefix}.target.svg").write_text(
        svg_triangles(norm.chart.positions[tris], overlay=UNIT_TRIANGLE[None]))
    print(f"n={res.n} residual {res.residual_max:.3e} angles [{res.angle_min:.4f}, {res.angle_max:.4f}] "
          f"boundary deviation {norm.boundary_deviation:.3e}")
    return 0


def cmd_convergence(args, cfg: RunConfig) -> int:
    poly, marks = io.load_polygon(args.polygon)
    levels = tuple(_floats(args.levels)) if args.levels else cfg.levels
    if not levels:
        raise argparse.ArgumentTypeError("no refinement levels given")
    cfg = cfg.with_overrides(levels=levels)
    rep = convergence(poly, marks, levels, args.n_rule or cfg.n_rule, cfg,
                      report=lambda msg: print(f"retry: {msg}", file=sys.stderr))
    text = rep.to_csv(args.out)
    print(text, end="")
    return 0


def basis_from_lengths(b1: float, b2: float, b3: float):
    """u1 along the x-axis and u2 with |u2| = b2, |u2 - u1| = b3."""
    theta = corner_angle(b3, b1, b2)
    return np.array([b1, 0.0]), b2 * np.array([np.cos(theta), np.sin(theta)])


def cmd_spiral(args, cfg: RunConfig) -> int:
    if args.basis:
        v = _floats(args.basis, 4)
        u1, u2 = np.array(v[:2]), np.array(v[2:])
    else:
        u1, u2 = basis_from_lengths(*_floats(args.b, 3))
    patch = build_spiral_patch(u1, u2, args.extent)
    K = curvature(patch.scaled)
    interior = ~patch.tri.is_boundary_vertex
    chart = develop(patch.scaled, mode="immersed")
    hol = spiral_holonomy(chart, patch)
    prefix = args.out_prefix
    mesh = io.MeshFile(patch.tri.triangles, patch.positions,
                       {(int(i), int(j)): float(l) for (i, j), l in zip(patch.tri.edges, patch.scaled.lengths)})
    io.save_mesh(mesh, f"{prefix}.mesh.json")
    out = {
        "b": list(patch.params.b),
        "u1": [float(x) for x in patch.params.u1],
        "u2": [float(x) for x in patch.params.u2],
        "lambda": patch.params.lam,
        "mu": patch.params.mu,
        "extent": args.extent,
        "flatness": float(np.max(np.abs(K[interior]))),
        "holonomy_residual": hol["residual"],
        "w": [float(x) for x in patch.w],
    }
    Path(f"{prefix}.json").write_text(json.dumps(out) + "\n")
    Path(f"{prefix}.svg").write_text(svg_triangles(chart.corners))
    print(f"lambda={patch.params.lam:.15g} mu={patch.params.mu:.15g} flatness={out['flatness']:.3e}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="vscale", description=__doc__.splitlines()[0])
    p.add_argument("--config", help="JSON run configuration")
    p.add_argument("--seed", type=int, help="random seed recorded in the run configuration")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    a = sub.add_parser("approximate", help="lattice approximation of a polygon")
    a.add_argument("--polygon", required=True)
    a.add_argument("--delta", type=float, required=True)
    a.add_argument("--out", required=True)
    a.set_defaults(func=cmd_approximate)

    u = sub.add_parser("uniformize", help="map a marked mesh onto the unit equilateral triangle")
    u.add_argument("--mesh", required=True)
    u.add_argument("--n", type=int, required=True)
    u.add_argument("--retries", type=int)
    u.add_argument("--out-prefix", required=True)
    u.set_defaults(func=cmd_uniformize)

    c = sub.add_parser("convergence", help="refinement experiment on a polygon")
    c.add_argument("--polygon", required=True)
    c.add_argument("--levels", help="comma-separated mesh sizes, coarse to fine")
    c.add_argument("--n-rule", help="subdivision level as an expression in k and delta")
    c.add_argument("--out", required=True)
    c.set_defaults(func=cmd_convergence)

    s = sub.add_parser("spiral", help="spiral lattice metric and its immersed layout")
    g = s.add_mutually_exclusive_group(required=True)
    g.add_argument("--b", help="basis triangle side lengths b1,b2,b3")
    g.add_argument("--basis", help="basis vectors x1,y1,x2,y2")
    s.add_argument("--extent", type=int, default=5)
    s.add_argument("--out-prefix", required=True)
    s.set_defaults(func=cmd_spiral)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code == 0 else 1
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = RunConfig.from_json(args.config) if args.config else RunConfig()
        cfg = cfg.with_overrides(seed=args.seed)
        return args.func(args, cfg)
    except (argparse.ArgumentTypeError, ValueError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except FLOW_FAILURES as exc:
        print(f"flow failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3
    except (GeometryError, MeshError, InconsistentDevelopment, NotATriangleBoundary, VScaleError) as exc:
        print(f"geometry error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
