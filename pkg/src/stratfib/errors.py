"""Exception hierarchy shared by all modules."""


class StratfibError(Exception):
    """Base class for every error raised by this package."""


class InputError(StratfibError, ValueError):
    """Malformed arguments: dimension mismatches, bad radii, empty maps."""


class DomainError(StratfibError, ValueError):
    """An operation evaluated outside its domain (e.g. sphere tangent at 0)."""


class ProjectionError(StratfibError):
    """Gauss-Newton projection onto a zero set did not converge."""

    def __init__(self, message, residual=float("nan"), point=None):
        super().__init__(f"{message} (last residual {residual:.3e})")
        self.residual = residual
        self.point = point


class StratificationError(StratfibError):
    """A point matched several strata, i.e. disjointness is violated."""


class ConstantRankError(StratfibError):
    """A function restricted to a stratum changed rank across samples."""


class SingularPointError(StratfibError):
    """d(f|stratum) is not surjective at the evaluation point."""


class MilnorPointError(SingularPointError):
    """d(f|stratum) restricted to the sphere tangent is not surjective."""


class IntegrationError(StratfibError):
    """Flow integration failed; carries the last accepted state."""

    def __init__(self, message, t=None, point=None):
        super().__init__(message)
        self.t = t
        self.point = point


class PreconditionError(StratfibError):
    """A documented precondition of an operation does not hold."""


class SafeRadiusNotFound(StratfibError):
    """No scheduled radius certifies that the Milnor set avoids f^-1(B)."""


class ProblemError(StratfibError, ValueError):
    """Problem file could not be parsed or validated."""
