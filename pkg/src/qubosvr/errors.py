"""Exception hierarchy shared across the package.

The command line maps these onto exit codes: invalid input and parse
failures exit 2, capacity overruns exit 3, and non-convergence under
--strict exits 4.
"""


class QuboSvrError(Exception):
    """Base class for all errors raised by this package."""


class InvalidInputError(QuboSvrError):
    """Caller-supplied value violates a documented precondition."""


class DegenerateDataError(InvalidInputError):
    """Data is structurally unusable (zero variance, constant targets, ...)."""


class ParseError(InvalidInputError):
    """A file could not be parsed; message names the file and position."""


class ModelFormatError(InvalidInputError):
    """A serialized model has an unknown or incompatible format version."""


class CapacityError(QuboSvrError):
    """Problem size exceeds what the requested method can handle exactly."""


class ConvergenceError(QuboSvrError):
    """Iterative solver failed to converge and strict mode was requested."""
