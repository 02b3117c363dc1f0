"""Exception types shared across the package."""


class DomainError(ValueError):
    """An argument lies outside the domain where a formula is defined."""


class DegenerateEquilibriumError(ValueError):
    """rho_L == rho_R: the matrix-product normalisation is undefined."""


class ConfigurationError(ValueError):
    """Inconsistent truncation windows, cutoffs or margins."""


class TruncationError(RuntimeError):
    """An infinite sum could not be truncated within the requested tolerance."""


class ConvergenceError(RuntimeError):
    """A power series is used outside its guarded domain of convergence."""


class AccuracyError(RuntimeError):
    """Quadrature refinement stopped before reaching the target tolerance."""

    def __init__(self, message, best_estimate=None, achieved=None):
        super().__init__(message)
        self.best_estimate = best_estimate
        self.achieved = achieved
