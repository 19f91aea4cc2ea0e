"""Exception hierarchy shared across the toolkit.

The CLI maps these onto exit codes: ConfigError -> 2, NumericalError -> 3,
OSError and friends -> 4.
"""


class UqkitError(Exception):
    """Base class for toolkit errors."""


class ConfigError(UqkitError):
    """Invalid configuration, arguments, or input data."""


class NumericalError(UqkitError):
    """Numerical breakdown: singular systems, broken spectra, non-finite data."""
