"""Exception types shared across the package."""


class DomainError(ValueError):
    """An input lies outside the mathematical domain of an operation."""


class FinitenessError(ValueError):
    """Parameters make a required expectation infinite (sqrt(2r) condition)."""


class ConfigError(ValueError):
    """Malformed run configuration."""


class MonotonicityError(ValueError):
    """A path that must be nondecreasing has a negative increment."""


class GridMismatchError(ValueError):
    """Two objects that must share a time grid do not."""


class BracketError(RuntimeError):
    """Root bracketing failed within the configured bounds."""


class ToleranceError(RuntimeError):
    """Iteration budget exhausted before reaching tolerance."""


class DivergenceWarning(UserWarning):
    """A Monte Carlo estimate looks divergent (std error comparable to mean)."""
