"""Exception types raised by the engine.

Every failure mode the operations document maps to one class here, so
callers (and the CLI's report writer) can tell configuration mistakes,
domain violations and numerical breakdowns apart.
"""


class PathTransportError(Exception):
    """Base class for all engine errors."""


class DomainError(PathTransportError):
    """A parameter or point lies outside the declared domain."""


class EvaluationError(PathTransportError):
    """A user-supplied function or expression produced a non-finite or
    otherwise unusable value."""

    def __init__(self, message, where=None):
        super().__init__(message)
        self.where = where


class ExpressionSyntaxError(PathTransportError):
    """Expression source text failed to parse.

    Attributes:
        position: 1-based character position of the offending token.
        expected: short hint describing what the parser was looking for.
    """

    def __init__(self, message, position, expected=None):
        super().__init__(f"{message} (at position {position})")
        self.position = position
        self.expected = expected


class ExpressionEvaluationError(EvaluationError):
    """Typed arithmetic failure while evaluating an expression.

    ``kind`` is one of: ``division-by-zero``, ``log-domain``,
    ``sqrt-domain``, ``pow-domain``, ``overflow``.
    """

    def __init__(self, kind, detail=""):
        message = kind if not detail else f"{kind}: {detail}"
        super().__init__(message)
        self.kind = kind


class ShapeError(PathTransportError):
    """Array or tuple dimensions do not match the chart."""


class TangentBundleError(ShapeError):
    """An operation requiring fiber dimension == base dimension was
    invoked on a bundle where they differ."""


class InvertibilityError(PathTransportError):
    """A frame or transport matrix is singular or too ill-conditioned."""


class ConvergenceError(PathTransportError):
    """The adaptive integrator could not advance (step underflow or the
    step budget ran out). Carries the parameter value where it stalled."""

    def __init__(self, message, param=None):
        super().__init__(message)
        self.param = param


class NotALoopError(DomainError):
    """Holonomy was requested for a path whose endpoints differ."""


class FlatnessError(PathTransportError):
    """Flat-frame construction was attempted on a region with nonzero
    curvature."""


class ConfigError(PathTransportError):
    """A scenario configuration failed validation."""
