"""Exception taxonomy shared across the package.

The CLI maps these onto exit codes: ConfigError -> 1, DataError -> 2,
SolverError / TrainingDiverged -> 3.
"""


class ConfigError(ValueError):
    """Invalid configuration or usage."""


class DataError(ValueError):
    """Malformed, inconsistent, or out-of-domain data."""


class SolverError(RuntimeError):
    """The repair solver failed or returned an unusable status."""


class TrainingDiverged(RuntimeError):
    """Training loss became non-finite."""

    def __init__(self, message: str, outer_iter: int = -1):
        super().__init__(message)
        self.outer_iter = outer_iter
