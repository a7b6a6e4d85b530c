"""Exception types shared across the package."""


class ConfigError(ValueError):
    """Invalid configuration file, field value, or command-line usage."""


class DataError(ValueError):
    """Malformed or out-of-range input data (trace files, windows)."""


class FitError(RuntimeError):
    """Degenerate or failed least-squares fit."""
