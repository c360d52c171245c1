"""Exception and warning types shared across the package."""


class SSAError(Exception):
    """Base class for all errors raised by ssavc."""


class DomainError(SSAError, ValueError):
    """An argument lies outside the domain of the operation."""


class NumericalFailure(SSAError, ArithmeticError):
    """A numerical routine failed to converge or produced non-finite output."""


class NotPositiveSemiDefinite(NumericalFailure):
    """A matrix expected to be PSD has a clearly negative eigenvalue."""


class BoundaryError(DomainError):
    """A rescaled time lies too close to 0 or 1 for the kernel support."""


class ModelError(SSAError, ValueError):
    """A model specification is invalid (e.g. A^2(u) not PSD)."""


class EmptyPool(SSAError):
    """No local stationary subspace could be formed at any grid point."""


class DegenerateEstimate(UserWarning):
    """An estimator hit a degenerate case and fell back to a default."""
