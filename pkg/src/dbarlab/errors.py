"""Exception hierarchy. The CLI maps each class to an exit code."""


class LabError(Exception):
    exit_code = 1


class ConfigurationError(LabError, ValueError):
    """Invalid parameters, schema violations, malformed inputs."""

    exit_code = 2


class PreconditionError(LabError, ValueError):
    """An operation was called on data that violates its precondition."""

    exit_code = 2


class SolverError(LabError, RuntimeError):
    """Iterative solver failed; ``best_residual`` is the smallest residual reached."""

    exit_code = 3

    def __init__(self, message, best_residual=float("nan")):
        super().__init__(message)
        self.best_residual = best_residual


class SamplingError(SolverError):
    """Boundary root solve did not converge."""


class OutputError(LabError, OSError):
    exit_code = 4
