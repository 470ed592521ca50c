"""Exception hierarchy shared by every module."""


class ArtspaceError(Exception):
    """Base class for all library errors."""


class ConfigError(ArtspaceError, ValueError):
    """Invalid construction parameter or option.

    ``param`` names the offending parameter when known.
    """

    def __init__(self, message, param=None):
        super().__init__(message)
        self.param = param


class OutOfDomainError(ArtspaceError, ValueError):
    def __init__(self, message, point=None):
        super().__init__(message)
        self.point = point


class SeamError(ArtspaceError):
    """Gradient requested on a non-differentiable patch seam."""

    def __init__(self, message, point=None):
        super().__init__(message)
        self.point = point


class AmbiguityError(ConfigError):
    pass


class SingularPointError(ArtspaceError, ValueError):
    def __init__(self, message, point=None):
        super().__init__(message)
        self.point = point


class InversionError(ArtspaceError):
    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class PolygonError(ConfigError):
    """Polygon fails validation (angle sum, orientation, simplicity)."""


class ConvergenceError(ArtspaceError):
    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class PreconditionError(ArtspaceError, ValueError):
    pass


class DegenerateRangeError(ArtspaceError, ValueError):
    pass


class ParseError(ArtspaceError, ValueError):
    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (at byte {offset})"
        super().__init__(message)
        self.offset = offset


class NumericalError(ArtspaceError):
    """Integrator failure (step size underflow and similar)."""


class SceneValidationError(ArtspaceError):
    """Scene file failed validation; ``errors`` lists every problem found."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))
