"""Exception types shared across the package."""


class DomainError(ValueError):
    """An argument lies outside the physically meaningful domain (ell = 0, N = 0, ...)."""


class ResolutionError(ValueError):
    """A sampling grid cannot resolve the requested azimuthal structure."""


class FitError(RuntimeError):
    """A fit failed to converge or produced an inconsistent result."""

    def __init__(self, message, best_cost=None):
        super().__init__(message)
        self.best_cost = best_cost


class ConfigError(ValueError):
    """A run configuration is invalid; ``field`` names the offending entry."""

    def __init__(self, field, message):
        super().__init__(f"{field}: {message}")
        self.field = field
