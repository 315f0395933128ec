"""Exception hierarchy.

Every error raised on purpose by the package derives from :class:`VScaleError`
so callers (and the CLI) can separate geometry/validation failures from flow
failures without string matching.
"""


class VScaleError(Exception):
    """Base class for all package errors."""


# -- mesh / validation --------------------------------------------------------

class MeshError(VScaleError):
    """Invalid triangulation input."""


class NonManifold(MeshError):
    pass


class NonOrientable(MeshError):
    pass


class DisconnectedSurface(MeshError):
    pass


class MultipleBoundaryCycles(MeshError):
    pass


class NotADisk(MeshError):
    """Single boundary cycle but Euler characteristic is not 1."""


class GeometryError(VScaleError):
    """Planar construction failed (lattice approximation, marks)."""


class EmptyIntersection(GeometryError):
    pass


class NoConvexCorner(GeometryError):
    pass


# -- metric kernels ------------------------------------------------------------

class InvalidTriangle(VScaleError):
    pass


class InvalidMetric(VScaleError):
    pass


class DegenerateAngle(VScaleError):
    pass


class DegenerateTriangle(VScaleError):
    pass


class NotGeometricBasis(VScaleError):
    pass


# -- linear algebra / flow -------------------------------------------------------

class SingularSystem(VScaleError):
    pass


class NonConvergence(VScaleError):
    pass


class FlowError(VScaleError):
    """Base for failures of the curvature flow."""


class LeftAdmissibleDomain(FlowError):
    pass


class StepUnderflow(FlowError):
    pass


class BallsOverlap(VScaleError):
    pass


# -- layout --------------------------------------------------------------------

class InconsistentDevelopment(VScaleError):
    pass


class DegenerateSeed(VScaleError):
    pass


class NotATriangleBoundary(VScaleError):
    pass


class DegenerateSourceTriangle(VScaleError):
    pass
