"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: ConfigError -> 1, DataError -> 2,
NumericalError -> 3.
"""


class GrainflowError(Exception):
    pass


class ConfigError(GrainflowError):
    """Bad configuration value, unknown key, or usage error."""


class DataError(GrainflowError):
    """Corrupt, missing, or inconsistent data files."""


class NumericalError(GrainflowError):
    """Non-finite loss, singular matrix, or diverged rollout in strict mode."""
