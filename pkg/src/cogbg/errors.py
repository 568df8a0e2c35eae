"""Exception hierarchy for the cogbg package.

Exit-code mapping used by the CLI:
  usage / bad configuration  -> 1  (ConfigError, UsageError)
  unreadable or invalid data -> 2  (DataError and subclasses)
  internal invariant failure -> 3  (InternalError and subclasses)
"""


class CogbgError(Exception):
    """Base class for all package errors."""


class ConfigError(CogbgError):
    """Invalid configuration value or unparseable config file."""


class UsageError(CogbgError):
    """Invalid command-line usage."""


class DataError(CogbgError):
    """Input data is missing, unreadable, or malformed."""


class SequenceError(DataError):
    """Frame sequence is missing frames or has inconsistent geometry."""


class FormatError(DataError):
    """A serialized artifact (model file, spec file, manifest) is malformed."""


class InternalError(CogbgError):
    """An internal invariant was violated; indicates a bug."""


class TrainingError(InternalError):
    """Training produced an invalid model state."""


class ClusteringError(InternalError):
    """Clustering failed to produce a usable partition."""
