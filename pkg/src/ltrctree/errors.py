"""Exception hierarchy shared by the library and the command line."""


class LTRCError(Exception):
    """Base class for all package errors."""


class DataError(LTRCError, ValueError):
    """Input data could not be accepted."""


class ParseError(DataError):
    """A CSV cell could not be converted."""

    def __init__(self, message, row=None, column=None):
        where = []
        if row is not None:
            where.append(f"row {row}")
        if column is not None:
            where.append(f"column {column!r}")
        prefix = f"{', '.join(where)}: " if where else ""
        super().__init__(prefix + message)
        self.row = row
        self.column = column


class ValidationError(DataError):
    """Values parsed but violate an invariant (e.g. left >= right)."""


class SchemaError(DataError):
    """Schema is malformed or a value does not conform to it."""


class RoutingError(LTRCError, LookupError):
    """A covariate row cannot be sent down a fitted tree."""


class UndefinedScoreError(LTRCError, ArithmeticError):
    """A log-rank score is not defined for some record."""


class NumericalError(LTRCError, ArithmeticError):
    """A numerical routine failed (non-convergence, empty folds, ...)."""
