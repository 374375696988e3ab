"""Exception types raised by the solver stack."""


class VemError(Exception):
    """Base class for all errors raised by this package."""


# mesh
class MeshError(VemError, ValueError):
    pass


class NonSimplePolygon(MeshError):
    pass


class NegativeArea(MeshError):
    pass


class NonManifoldEdge(MeshError):
    pass


class DanglingVertex(MeshError):
    pass


class DuplicateVertex(MeshError):
    pass


class NotStarShapedAtBarycenter(MeshError):
    pass


class UnsupportedCombination(MeshError):
    pass


# discretization
class UnsupportedDegree(VemError, ValueError):
    pass


class DegenerateCell(VemError, ValueError):
    pass


class ZeroEigenvalue(VemError, ValueError):
    pass


class DimensionMismatch(VemError, ValueError):
    pass


# eigensolver
class ConvergenceFailure(VemError, RuntimeError):
    pass


class InsufficientSpectrum(VemError, RuntimeError):
    pass


class SizeExceeded(VemError, ValueError):
    pass


class SolveFailure(VemError, RuntimeError):
    pass


# estimator / adaptivity
class EmptyIndicators(VemError, ValueError):
    pass


class ZeroEstimator(VemError, ValueError):
    pass


class InsufficientData(VemError, ValueError):
    pass
