"""Exception types shared across the package."""


class ConfigError(ValueError):
    """A scenario configuration or input file is invalid."""


class RefusalError(ValueError):
    """An operation refused its inputs (under-resolved, out of contract)."""
