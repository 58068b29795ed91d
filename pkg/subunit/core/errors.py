# subunit/core/errors.py
"""Exception hierarchy shared by services and the CLI.

Each error carries the process exit code the CLI reports for it.
"""


class SubunitError(Exception):
    """Base class for all library errors."""

    exit_code: int = 2


class InvalidDimensionError(SubunitError):
    """A Hilbert-space dimension is out of range."""


class InvalidChannelError(SubunitError):
    """A map fails complete positivity or trace preservation."""


class InvalidInputError(SubunitError):
    """Malformed user input: weights, grids, files."""


class UnsupportedError(SubunitError):
    """The operation is not defined for the given shapes or dimensions."""


class NumericalDomainError(SubunitError):
    """A quantity left its mathematical domain beyond tolerance."""


class FitError(SubunitError):
    """A decay fit did not converge or cannot support the requested estimate."""

    exit_code = 3
