"""Exception types. Each carries the CLI exit code it maps to."""


class FlsLabError(Exception):
    exit_code = 1


class ParameterError(FlsLabError, ValueError):
    exit_code = 2


class ConfigurationError(FlsLabError, ValueError):
    exit_code = 2


class DataError(FlsLabError, ValueError):
    exit_code = 2


class ShapeError(FlsLabError, ValueError):
    exit_code = 2


class SamplingFailure(FlsLabError):
    exit_code = 3

    def __init__(self, message, best_lambda=float("-inf")):
        super().__init__(message)
        self.best_lambda = best_lambda


class DivergenceError(FlsLabError, FloatingPointError):
    exit_code = 4

    def __init__(self, message, trajectory=None):
        super().__init__(message)
        self.trajectory = trajectory


class DegenerateError(FlsLabError, ValueError):
    """Zero predictor, empty neuron set, or colinear geometry."""

    exit_code = 1


class InapplicableError(FlsLabError, ValueError):
    """A bound's hypotheses fail (e.g. non-positive separability margin)."""

    exit_code = 1
