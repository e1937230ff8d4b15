"""Exception types shared across the package."""


class FieldParseError(ValueError):
    """Syntax or arity error in a field expression, with source position."""

    def __init__(self, message: str, position: int):
        super().__init__(f"{message} (at position {position})")
        self.position = position


class DomainError(ValueError):
    """A point, cube, or field was used outside its declared domain."""


class StructuralError(ValueError):
    """Inputs violate a structural precondition: class membership, exponent
    windows, or an inconsistent exponent-pair specification."""


class ThetaTooLargeError(StructuralError):
    """The interpolation parameter pushed an exponent out of (1, inf)."""

    def __init__(self, message: str, point=None):
        super().__init__(message)
        self.point = point


class EnumerationError(ValueError):
    """Cube family parameters underflow the configured minimum side."""


class IntegrabilityError(RuntimeError):
    """Quadrature could not produce a trustworthy value.

    kind is 'non-finite' (a node evaluated to inf/nan), 'divergent' (graded
    shell sums do not contract toward a declared singular point) or
    'unresolved' (the estimated singular tail exceeds the configured share
    of the total).
    """

    def __init__(self, message: str, kind: str, point=None):
        super().__init__(message)
        self.kind = kind
        self.point = point


class NotInSpaceError(RuntimeError):
    """Norm bracket search failed: f is not in L^{p(.)} at this resolution."""


class ConfigError(ValueError):
    """Invalid experiment configuration."""
