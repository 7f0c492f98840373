"""Exception types shared across the package."""


class ConfigError(ValueError):
    """Raised for invalid topology, scenario, or parameter configurations."""


class StabilityError(ConfigError):
    """Raised when an integration step size violates the explicit-Euler bound."""
