"""Exception hierarchy shared by all modules."""


class QRestrictError(Exception):
    """Base class for library errors."""


class DomainError(QRestrictError, ValueError):
    """Input outside the domain of an operation."""


class CapabilityError(QRestrictError):
    """Request exceeds what the dense/iterative back ends support."""


class NumericalFailure(QRestrictError, ArithmeticError):
    """A numerical check (positivity, reality, convergence) failed."""


class SingularConditioningError(DomainError):
    """Conditioning on an event whose normalizing trace vanishes."""


class SingularEventError(DomainError):
    """Conditioning on a zero-probability event."""
