"""Error types shared across the package."""


class ConfigError(ValueError):
    """Invalid configuration: bad value, unknown key, or inconsistent sizes."""


class CapacityError(RuntimeError):
    """A request exceeds a hard size or iteration cap of an exact method."""
