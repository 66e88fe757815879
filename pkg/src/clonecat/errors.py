"""Exception types shared across the package.

Data-shaped failures (bad files, bad rows, unknown ids) are distinct from
numeric failures (NaN during optimization) so the CLI can map them to
different exit codes.
"""


class CloneCatError(Exception):
    """Base class for all package errors."""


class DataError(CloneCatError):
    """Malformed or unusable input data."""


class LexError(DataError):
    """Source text cannot be lexed.

    Carries the first offending position (1-based line/column).
    """

    def __init__(self, line: int, column: int, reason: str):
        self.line = line
        self.column = column
        self.reason = reason
        super().__init__(f"{line}:{column}: {reason}")


class EmptyCorpus(DataError):
    """An embedding corpus with no tokens."""


class FormatError(DataError):
    """A serialized model file has a bad magic, shape, or is truncated."""


class MissingFunction(DataError):
    """A pair row names a method id with no source file."""


class BadRow(DataError):
    """A pairs CSV row that cannot be parsed; carries its line number."""

    def __init__(self, line_number: int, reason: str):
        self.line_number = line_number
        super().__init__(f"row {line_number}: {reason}")


class UnknownId(DataError):
    """A detection pair references a method id not in the corpus."""


class TooFewPairs(DataError):
    """Fewer pairs than folds requested."""


class DegenerateBatch(CloneCatError):
    """A contrastive batch in which no anchor has a positive."""


class ShapeMismatch(CloneCatError):
    """Parameter and gradient shapes disagree."""


class NumericFailure(CloneCatError):
    """NaN or infinity encountered where finite values are required."""
