"""Exception types shared across the package."""


class ConfigError(ValueError):
    """Invalid configuration file, key, or command-line option."""


class DataError(ValueError):
    """Invalid or inconsistent input data (streams, datasets, files)."""


class InvariantError(ValueError):
    """A physical-state invariant (Hermiticity, trace, positivity) is violated."""


class NoPhysicalSolutionError(ValueError):
    """An inverse formula has no solution in the physical parameter range."""


class ConvergenceError(RuntimeError):
    """An iterative optimization failed to converge.

    Carries the best iterate found so far in ``best_result`` when available.
    """

    def __init__(self, message, best_result=None, diagnostics=None):
        super().__init__(message)
        self.best_result = best_result
        self.diagnostics = diagnostics or {}


class EstimationError(RuntimeError):
    """A statistical estimator could not produce a usable result."""
