"""Exception types shared across the package."""


class DomainViolationError(ValueError):
    """A point produced a non-finite density value (e.g. a zero precision)."""


class ParameterError(ValueError):
    """Invalid model or sampler parameters."""


class StepError(RuntimeError):
    """A particle update produced non-finite state."""


class PositivityError(RuntimeError):
    """A grid density lost the positivity required by the dynamics."""


class SolverError(RuntimeError):
    """A linear solve or time march failed its contract."""


class ConfigError(ValueError):
    """Malformed or inconsistent experiment configuration."""
