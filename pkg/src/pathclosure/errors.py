"""Exception hierarchy shared by all modules."""


class PathClosureError(Exception):
    """Base class for every error raised by the package."""


class InvalidParameterError(PathClosureError, ValueError):
    pass


class NonFiniteEvaluationError(PathClosureError, FloatingPointError):
    """A model evaluator produced NaN or inf at the requested state."""


class DegenerateGeometryError(PathClosureError):
    """The Fisher metric is numerically singular.

    ``direction`` holds the unit eigenvector of the smallest eigenvalue.
    """

    def __init__(self, message, direction=None):
        super().__init__(message)
        self.direction = direction


class ProviderInconsistencyError(PathClosureError):
    """Geometry violates a structural inequality (e.g. negative IL_rev)."""


class SingularCollocationError(PathClosureError):
    pass


class BoundaryMinimumError(PathClosureError):
    """Grid argmin sits on the boundary of the endpoint grid."""

    def __init__(self, message, argmin=None):
        super().__init__(message)
        self.argmin = argmin


class OverflowGuardError(PathClosureError, OverflowError):
    pass


class GridMismatchError(PathClosureError, ValueError):
    pass


class FixedPointError(PathClosureError):
    pass


class BranchSelectionError(PathClosureError):
    """No stabilizing (Hurwitz) branch of the quadratic gauge exists."""


class WrongBranchError(PathClosureError):
    pass


class DegenerateCorrectionError(PathClosureError):
    pass


class UnsupportedCurvatureError(PathClosureError, NotImplementedError):
    pass


class StabilityError(PathClosureError, ValueError):
    def __init__(self, message, suggested_dt=None):
        super().__init__(message)
        self.suggested_dt = suggested_dt
