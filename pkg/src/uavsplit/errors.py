"""Exception hierarchy shared by every module.

Each class carries the CLI exit status it maps to.
"""


class UavSplitError(Exception):
    exit_code = 1


class ConfigurationError(UavSplitError, ValueError):
    """Invalid configuration, flags, or dataset shape."""

    exit_code = 2


class SchemaError(ConfigurationError):
    """Input file does not follow the expected column layout."""


class ParseError(ConfigurationError):
    """A cell of an input file could not be parsed."""


class CheckpointError(ConfigurationError):
    """Checkpoint is malformed or has an unsupported format version."""


class StorageError(UavSplitError, OSError):
    """File could not be read or written."""

    exit_code = 3


class ContractViolation(UavSplitError, ValueError):
    """A function was called with arguments that break its preconditions."""

    exit_code = 4
