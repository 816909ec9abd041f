"""Exception types shared across the package."""


class DimensionError(ValueError):
    """Operands have incompatible shapes."""


class ConfigError(Exception):
    """Invalid configuration, pulse spec or file schema (CLI exit code 2)."""


class ConsistencyError(RuntimeError):
    """Numerical internal-consistency violation (CLI exit code 3)."""


class UnsupportedPulseError(ConfigError):
    """Pulse has no analytic continuous-time form and no supplied derivatives."""


class SingularChannelError(ValueError):
    """Channel response is exactly zero on an allocated subcarrier."""
