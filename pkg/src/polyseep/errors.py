"""Exception types raised across the package."""


class PolyseepError(Exception):
    """Base class for all package errors."""


# -- mesh construction ------------------------------------------------------

class MeshError(PolyseepError):
    pass


class SelfIntersectingError(MeshError):
    pass


class DegenerateCellError(MeshError):
    pass


class DanglingVertexError(MeshError):
    pass


class NonConformingError(MeshError):
    pass


class EmptyDomainError(MeshError):
    pass


class ClipFailureError(MeshError):
    pass


# -- shape functions --------------------------------------------------------

class ShapeFunctionError(PolyseepError):
    pass


class NotStrictlyConvexError(ShapeFunctionError):
    pass


class PointOnBoundaryError(ShapeFunctionError):
    pass


class OutsidePolygonError(ShapeFunctionError):
    pass


class SegmentOutsideError(ShapeFunctionError):
    pass


# -- assembly / solve -------------------------------------------------------

class AssemblyError(PolyseepError):
    pass


class NonSPDConductivityError(AssemblyError):
    pass


class MissingMaterialError(AssemblyError):
    pass


class ConflictingDirichletError(AssemblyError):
    pass


class UntaggedNeumannEdgeError(AssemblyError):
    pass


class SolverError(PolyseepError):
    pass


class SingularSystemError(SolverError):
    pass


class NotConvergedError(SolverError):
    pass


class NonSPDDetectedError(SolverError):
    pass


# -- seepage drivers --------------------------------------------------------

class ZeroReferenceError(PolyseepError):
    pass


class ProbeOutsideDomainError(PolyseepError):
    pass


class MissingGamma4Error(PolyseepError):
    pass


class NodeOutsideOldMeshError(PolyseepError):
    pass


# -- configuration / IO -----------------------------------------------------

class DepthExceededWarning(UserWarning):
    """A cell that should be refined further sits at max_depth already."""


class ConfigError(PolyseepError):
    pass


class ParseError(ConfigError):
    pass


class ValidationError(ConfigError):
    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


class IoError(PolyseepError):
    pass
