"""Exception types shared across the library."""


class ConfigError(ValueError):
    """Experiment configuration is invalid (CLI exit code 2)."""


class NumericalError(RuntimeError):
    """A solver or estimator failed (CLI exit code 3)."""


class CoercivityError(NumericalError):
    """A coefficient realisation is not uniformly positive."""


class ConvergenceError(NumericalError):
    """An iterative solver did not reach the requested residual."""


class MemoryGuardError(NumericalError):
    """A requested discretisation would exceed the allocation guard."""
