# errors.py
# Exception hierarchy shared by every module and mapped to CLI exit codes in app.py


class ThermalFieldError(Exception):
    """Root of all library errors."""


# ---------------------------------------------------------
# Input / precondition errors (CLI exit code 2)
# ---------------------------------------------------------

class ConfigError(ThermalFieldError, ValueError):
    """Malformed state document, flag value or profile name."""


class DomainError(ThermalFieldError, ValueError):
    """A precondition on the physical input is violated."""


class RankDeficiencyError(DomainError):
    def __init__(self, rank, required):
        super().__init__(
            f"Sample set determines only {rank} of {required} independent coefficients"
        )
        self.rank = rank
        self.required = required


class UnsupportedError(DomainError):
    """Requested quantity is deliberately not provided (e.g. massive thermal functions)."""


class NoTemperatureError(DomainError):
    """Wick square is not strictly positive, so no finite temperature exists."""


# ---------------------------------------------------------
# Numerical errors (CLI exit code 3)
# ---------------------------------------------------------

class ConvergenceError(ThermalFieldError, ArithmeticError):
    def __init__(self, message, estimate=None):
        super().__init__(message)
        self.estimate = estimate


class SingularityError(ConvergenceError):
    """Pointwise boundary value requested at a coincident or light-like separation."""


class ExtractionError(ThermalFieldError, ArithmeticError):
    """No timelike eigen-direction in the order-2 tensor."""


class MixtureFitError(ThermalFieldError, ArithmeticError):
    def __init__(self, message, weights=None, residual=None):
        super().__init__(message)
        self.weights = weights
        self.residual = residual
