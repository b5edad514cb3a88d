"""Exception hierarchy.

Data problems (bad input files, degenerate instances) derive from
:class:`DataError`; broken caller preconditions raise :class:`ContractError`;
an internal consistency check failing raises :class:`InvariantError`.
"""


class FuseTreeError(Exception):
    """Base class for all errors raised by this package."""


class DataError(FuseTreeError, ValueError):
    pass


class SchemaError(DataError):
    """A required column or document field is missing or malformed."""


class ParseError(DataError):
    def __init__(self, message, line=None):
        super().__init__(message if line is None else f"line {line}: {message}")
        self.line = line


class EmptyDataError(DataError):
    pass


class VersionError(SchemaError):
    pass


class MissingGroupError(DataError):
    pass


class DegenerateGridError(DataError):
    pass


class InfiniteWeightError(DataError):
    """Cas-ANOVA weight requested for two groups with identical means."""


class ContractError(FuseTreeError, ValueError):
    """A documented precondition of an operation was violated."""


class InvariantError(FuseTreeError, RuntimeError):
    """An internal invariant (order preservation, event count...) failed."""
