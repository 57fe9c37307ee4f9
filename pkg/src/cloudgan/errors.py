"""Exception hierarchy shared across the toolkit.

Each error class carries the CLI exit code it maps to:
2 invalid config/flags, 3 missing data, 4 numeric failure, 5 I/O failure.
"""


class CloudganError(Exception):
    """Base class for all toolkit errors."""

    exit_code = 1


class ConfigError(CloudganError):
    """Invalid configuration, flags, or incompatible checkpoint/config."""

    exit_code = 2


class MissingDataError(CloudganError):
    """Required files, directories, bands, or dataset entries are absent."""

    exit_code = 3


class NumericError(CloudganError):
    """Non-finite loss or model output aborted a numeric procedure."""

    exit_code = 4


class IOFailure(CloudganError):
    """Read/write failed for reasons other than missing input data."""

    exit_code = 5
