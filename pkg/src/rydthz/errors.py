"""Exception hierarchy shared by every module of the package."""


class RydThzError(Exception):
    """Base class for all errors raised by rydthz."""

    exit_code = 3


class ConfigurationError(RydThzError, ValueError):
    """Inconsistent or out-of-range physical configuration."""

    exit_code = 2


class PhysicsError(RydThzError):
    """A physics or numerics failure inside a computation."""

    exit_code = 3


class DegenerateSteadyStateError(PhysicsError):
    """The Liouvillian kernel is not one-dimensional."""


class SolverError(PhysicsError):
    """A numerical solver failed to converge or to meet its tolerance."""


class PropagationError(PhysicsError):
    """A velocity-class evaluation returned a non-finite value."""


class NonPassiveMediumError(PhysicsError):
    """Coupling coefficients imply net gain of photon flux."""


class SpectrumError(PhysicsError):
    """A spectrum cannot be analysed (no peak, peak on the boundary, ...)."""


class InsufficientDataError(RydThzError):
    """Too few events or bins for a statistical estimate."""

    exit_code = 4


class EmptyStreamError(InsufficientDataError):
    """A photon stream contains no events."""
