"""Shared exception taxonomy.

Every failure mode raised by this package is a subclass of PolybracketError,
so callers can distinguish "the input violates a precondition" from ordinary
bugs.  The CLI maps these to exit code 2 (usage / input errors) while
verification failures map to exit code 1.
"""


class PolybracketError(Exception):
    """Base class for all package-specific errors."""


class DomainError(PolybracketError):
    """A point or argument lies outside the domain required by the operation."""


class DegenerateInputError(PolybracketError):
    """Input is geometrically degenerate (empty interior, dependent normals, ...)."""


class BoundednessError(PolybracketError):
    """An operation that requires a bounded polytope met an unbounded one."""


class SolverFailureError(PolybracketError):
    """An LP/QP/SDP solver did not converge or returned an unusable status."""


class SamplingError(PolybracketError):
    """A rejection sampler exhausted its retry budget."""


class NoCertificateError(PolybracketError):
    """A required Lipschitz certificate is unavailable: either a boundary
    cell admits no finite slope bound (fall back to the trivial bracket),
    or a function's slopes exceed the Gamma bound it was claimed to obey."""


class ConstructionBugError(PolybracketError):
    """An internal invariant of the construction failed (e.g. a produced
    bracket does not cover a class member).  Never expected on valid input."""


class InsufficientDataError(PolybracketError):
    """Not enough data points for a statistical estimate."""


class AssumptionError(PolybracketError):
    """A standing assumption of the construction (e.g. simplicity of the
    polytope) is violated by the input."""
