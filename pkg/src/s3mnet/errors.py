"""Exception taxonomy shared across the package.

Each class maps to one failure category surfaced through the CLI: anything
raised here exits with code 1 and a `category: message` line on stderr.
"""


class S3MError(Exception):
    """Base class for all package errors."""


class DimensionError(S3MError, ValueError):
    """Array shapes disagree with each other or with a contract."""


class RangeError(S3MError, ValueError):
    """A value falls outside its representable or allowed range."""


class ConsistencyError(S3MError, ValueError):
    """Files or fields of one sample disagree with each other."""


class LabelError(S3MError, ValueError):
    """A class ID is neither < class_count nor the IGNORE sentinel."""


class ConfigError(S3MError, ValueError):
    """A configuration value violates its invariants."""


class DataError(S3MError, RuntimeError):
    """A dataset is missing, empty, or unreadable."""


class UndefinedLossError(S3MError, ValueError):
    """A loss was requested over an empty pixel set."""


class UndefinedMetricError(S3MError, ValueError):
    """A metric was requested over an empty pixel set."""


class TrainingDivergedError(S3MError, RuntimeError):
    """The training loss became non-finite."""
