"""Exception hierarchy shared by all modules."""


class MHMError(Exception):
    """Base class for every error raised by this package."""


class DomainError(MHMError, ValueError):
    """An argument lies outside the domain of a function or parameter type."""


class ConvergenceError(MHMError, RuntimeError):
    """A numerical routine (quadrature, root finding, optimizer) failed to converge."""


class MomentNotFiniteError(DomainError):
    """The requested moment does not exist for the given parameters."""


class DegenerateModelError(DomainError):
    """A model limit was requested through a map that does not support it."""


class InsufficientDataError(MHMError, ValueError):
    """Not enough observations for the requested estimator."""


class DegenerateDataError(MHMError, ValueError):
    """The data produce a meaningless estimate (e.g. negative variance of variance)."""


class SimulationOverflowError(MHMError, FloatingPointError):
    """A simulated variance path exceeded its configured cap."""


class DataFormatError(MHMError, ValueError):
    """An input file could not be parsed or failed validation.

    ``row`` is the 1-based line number in the file (header is line 1) when known.
    """

    def __init__(self, message: str, row: int | None = None, column: str | None = None):
        self.row = row
        self.column = column
        where = []
        if row is not None:
            where.append(f"row {row}")
        if column is not None:
            where.append(f"column {column!r}")
        if where:
            message = f"{', '.join(where)}: {message}"
        super().__init__(message)
