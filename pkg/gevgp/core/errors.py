"""Exception hierarchy for gevgp.

Every error carries a ``category`` used by the CLI to build its
``ERROR:<category>:`` prefix and to pick the exit code.
"""

from typing import Any, Optional


class GevGpError(Exception):
    """Base class for all gevgp errors."""

    category = "error"


class ValidationError(GevGpError, ValueError):
    """Invalid input: arguments, configuration or data."""

    category = "validation"


class DomainError(ValidationError):
    """Argument outside the mathematical domain of an operation."""

    category = "domain"


class ConfigError(ValidationError):
    """Run configuration failed schema validation."""

    category = "config"


class DataError(ValidationError):
    """Malformed or empty input data."""

    category = "data"

    def __init__(self, message: str, line: Optional[int] = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class NumericalError(GevGpError, ArithmeticError):
    """A numerical procedure failed."""

    category = "numerical"


class SingularCovarianceError(NumericalError):
    """Covariance matrix is not numerically positive definite."""

    category = "singular-covariance"

    def __init__(self, minor: int, dim: int):
        super().__init__(
            f"covariance matrix is not positive definite: "
            f"leading minor {minor} of {dim} failed"
        )
        self.minor = minor
        self.dim = dim


class SupportError(NumericalError):
    """An observation lies outside the GEV support at the current latent values."""

    category = "support"


class IndefiniteHessianError(NumericalError):
    """Negative Hessian could not be made positive definite."""

    category = "indefinite-hessian"


class NonConvergenceError(NumericalError):
    """Iteration cap reached before the convergence criterion held."""

    category = "non-convergence"

    def __init__(self, message: str, best: Any = None):
        super().__init__(message)
        self.best = best


class ConvergenceDiagnosticError(NumericalError):
    """MCMC diagnostics (acceptance rate, split R-hat) out of range."""

    category = "mcmc-diagnostic"
