"""Exception hierarchy. Each class carries the CLI exit code for its error class."""


class OditError(Exception):
    exit_code = 1


class ConfigError(OditError, ValueError):
    """Invalid parameters or configuration (usage error)."""

    exit_code = 1


class DataError(OditError, ValueError):
    """Malformed input data: bad CSV rows, dimension mismatch, non-finite values."""

    exit_code = 2


class ArchiveError(DataError):
    """Model archive is corrupt, truncated or from an unsupported format version."""


class NumericError(OditError, ArithmeticError):
    """Numerically infeasible request (singular fit, unreachable calibration target)."""

    exit_code = 3
