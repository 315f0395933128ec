"""Discrete uniformization of equilateral-triangulated disks by vertex scaling."""

from .conformal import (
    PLMetric,
    angle_jacobian,
    build_spiral_patch,
    conductance,
    corner_angle,
    curvature,
    is_delaunay,
    spiral_factors,
    vertex_scale,
)
from .flow import FlowOptions, FlowProblem, corner_flow, curvature_flow, domain_check
from .laplace import ConductanceGraph, DirichletProblem, dirichlet_energy, laplacian_apply, solve_dirichlet
from .layout import develop, dilatation_stats, normalize_to_triangle, pl_map
from .mesh import (
    EquilateralComplex,
    MarkedDisk,
    Triangulation,
    build_triangulation,
    combinatorial_ball,
    hex_approximate,
    standard_subdivision,
)
from .uniformize import detect_corners, diffuse_corners, uniformize

__version__ = "0.1.0"
