class DomainError(ValueError):
    """Invalid arguments: mesh mismatch, violated precondition, out-of-range value."""


class ConfigError(ValueError):
    """Run configuration failed validation."""


class SolverError(RuntimeError):
    """A nonlinear solve or time-stepping run did not complete."""

    def __init__(self, message, report=None, step=None):
        super().__init__(message)
        self.report = report
        self.step = step
