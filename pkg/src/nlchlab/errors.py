"""Exception types raised by the laboratory."""


class LabError(Exception):
    """Base class for all package errors."""


class DomainMismatch(LabError):
    """Two objects live on different grids."""


class NonZeroMean(LabError):
    """An operation restricted to mean-free fields received one with mass."""


class SolverDivergence(LabError):
    """An iterative linear solve failed to reach its tolerance."""


class UnsupportedDimension(LabError):
    """Requested spatial dimension is not 2 or 3."""


class DivergentMoment(LabError):
    """A radial mollifier moment did not converge under quadrature refinement."""


class AlphaOutOfRange(LabError):
    """Singularity exponent outside the integrable window (0, d-1)."""


class KernelUnresolved(LabError):
    """Interaction range too small for the grid spacing."""


class NoConvergence(LabError):
    """A scalar root solve (resolvent) exhausted its iteration budget."""


class BlowUp(LabError):
    """A time step produced non-finite values."""


class MeanOutOfDomain(LabError):
    """Initial mean does not lie in the interior of the potential's domain."""


class PreconditionViolated(LabError):
    """An operation's stated precondition does not hold for the given input."""


class ConfigError(LabError):
    """A run configuration file could not be parsed or validated."""
