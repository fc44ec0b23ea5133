"""Exception types shared across the package."""


class ConfigError(Exception):
    """Invalid configuration, scene description, or run parameters."""


class NumericError(Exception):
    """Numeric failure during computation (NaN, divergence, bad sigma, ...)."""
