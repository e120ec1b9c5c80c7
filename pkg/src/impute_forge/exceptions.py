"""Error types raised across the package.

Every error carries an ``exit_code`` so the CLI can map failures onto its
documented process exit status without a lookup table.
"""


class ImputeForgeError(Exception):
    exit_code = 1


class UsageError(ImputeForgeError):
    """Bad flags or configuration."""


# -- data / schema (exit 2) ---------------------------------------------------

class DataError(ImputeForgeError):
    exit_code = 2


class SchemaMismatch(DataError):
    pass


class UnparsableNumeric(DataError):
    def __init__(self, row, column, value):
        self.row = row
        self.column = column
        self.value = value
        super().__init__(f"row {row}, column {column!r}: cannot parse {value!r} as a finite number")


class MissingTarget(DataError):
    def __init__(self, row, column):
        self.row = row
        self.column = column
        super().__init__(f"row {row}: target column {column!r} is missing")


class EmptyDataset(DataError):
    pass


class NonBinaryTarget(DataError):
    pass


class InfeasibleCount(DataError):
    pass


class InsufficientCompleteRows(DataError):
    pass


class IoFailure(DataError):
    pass


class UnknownFeature(DataError, KeyError):
    def __str__(self):
        return Exception.__str__(self)


class ProfileTooShort(DataError):
    pass


class ColumnCollision(DataError):
    pass


class IncompleteExample(DataError):
    pass


class LengthMismatch(DataError):
    pass


class DimensionMismatch(DataError):
    pass


class SingleClassTraining(DataError):
    pass


# -- response parsing ----------------------------------------------------------

class ParseError(ImputeForgeError):
    """Base for completion responses that cannot be mapped back onto rows."""

    exit_code = 4

    def __init__(self, message, positions=()):
        self.positions = list(positions)
        super().__init__(message)


class CountMismatch(ParseError):
    pass


class DomainViolation(ParseError):
    pass


class NumericParseFailure(ParseError):
    pass


# -- backend (exit 3) ----------------------------------------------------------

class BackendError(ImputeForgeError):
    exit_code = 3


class AuthMissing(BackendError):
    pass


class Timeout(BackendError):
    pass


class RateLimited(BackendError):
    pass


class MalformedProviderResponse(BackendError):
    pass


class NoExamplesForClass(ImputeForgeError):
    exit_code = 4
