"""Error classes shared across the package.

The CLI maps these to process exit codes: ConfigError -> 1,
DataError -> 2, NumericsError -> 3, filesystem errors -> 4.
"""


class EcmnetError(Exception):
    """Base class for package errors."""


class ConfigError(EcmnetError):
    """Bad configuration: unknown keys, invalid values, bad CLI usage."""


class DataError(EcmnetError):
    """Bad or missing input data: malformed CSV, short traces, bounds violations."""


class NumericsError(EcmnetError):
    """Numerical failure: non-finite loss, failed gradient verification."""
