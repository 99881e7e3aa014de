"""Exception hierarchy.

Every error raised by the library derives from :class:`MdaError` and carries the
process exit code the command-line front end reports for it.
"""


class MdaError(Exception):
    """Base class for all engine errors."""

    exit_code = 1


class ConfigError(MdaError):
    """Invalid run configuration or violated call precondition."""

    exit_code = 2


class PreconditionViolated(ConfigError):
    """An operation was called outside its documented domain."""


class DataError(MdaError):
    """Input data cannot be used as given."""

    exit_code = 3


class MissingHistory(DataError):
    """A lagged outcome needed for a design row is unavailable."""


class UnknownArm(DataError):
    """A treatment arm label is not present in the dataset."""


class ImproperPosteriorError(MdaError):
    """The posterior at some visit is improper."""

    exit_code = 4

    def __init__(self, message: str, visit: int | None = None) -> None:
        """Initialize with the offending visit (1-based) when known."""
        super().__init__(message)
        self.visit = visit


class NonpositiveDf(ImproperPosteriorError):
    """Degrees of freedom of a normal-gamma law are not positive."""


class NumericalError(MdaError):
    """A numerical kernel failed."""

    exit_code = 5


class NotPositiveDefinite(NumericalError):
    """A covariance matrix has a pivot below tolerance."""


class SingularCholesky(NumericalError):
    """A normal-gamma scale matrix has a vanishing Cholesky pivot."""


class EmptyBox(NumericalError):
    """A truncation box has a dimension with lower >= upper."""


class EmptyInterval(NumericalError):
    """A univariate truncation interval is empty."""


class InfeasibleStart(NumericalError):
    """A Gibbs warm start lies outside its truncation box."""


class NonfiniteLogPhi(NumericalError):
    """The iMH acceptance function evaluated to a non-finite value."""
