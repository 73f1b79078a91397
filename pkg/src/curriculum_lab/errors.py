"""Exception types shared across the package."""


class ParameterError(ValueError):
    """An argument violates a documented precondition."""


class DataLoadError(ValueError):
    """A dataset / table file is malformed; message names the offending row or class."""


class ConfigError(ValueError):
    """An experiment configuration is invalid (unknown keys, bad values)."""


class NumericalError(RuntimeError):
    """A computation produced non-finite values outside a training loop."""


class TrainingDivergedError(RuntimeError):
    """Training produced a non-finite loss or gradient."""

    def __init__(self, iteration: int, message: str = ""):
        self.iteration = iteration
        super().__init__(message or f"training diverged at iteration {iteration}")


class ExperimentError(RuntimeError):
    """An experiment failed as a whole (e.g. most repetitions diverged)."""
