"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """An agent, solver or experiment was configured with missing or invalid settings."""


class SolverError(RuntimeError):
    """An iterative solver failed to reach its tolerance."""
