"""Exception hierarchy shared by all fracdyn modules."""


class FracdynError(Exception):
    """Base class for all toolkit errors."""


class DimensionError(FracdynError, ValueError):
    """Inconsistent array dimensions between model, data, or config objects."""


class DomainError(FracdynError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class PoleError(FracdynError, ArithmeticError):
    """Gamma-function evaluation requested at a pole (non-positive integer)."""


class SingularError(FracdynError, ArithmeticError):
    """A matrix that must be inverted is singular to working tolerance."""


class NonFiniteError(FracdynError, ArithmeticError):
    """A simulated state became NaN or infinite."""


class EigenFailure(FracdynError, ArithmeticError):
    """The eigensolver failed to converge."""


class NotControllable(FracdynError):
    """Controllability rank condition fails at the requested horizon."""


class NotObservable(FracdynError):
    """Observability rank condition fails at the requested horizon."""


class NotSPD(FracdynError, ValueError):
    """A weighting matrix is not symmetric positive definite."""


class InnovationSingular(FracdynError, ArithmeticError):
    """The filter innovation covariance is numerically singular."""


class InfeasibleStateConstraints(FracdynError):
    """Hard linear state constraints admit no input inside the box."""


class DegenerateData(FracdynError, ValueError):
    """Identification data carries no usable temporal structure."""


class BranchWarning(UserWarning):
    """A fractional power was evaluated on the principal branch at a branch cut."""
