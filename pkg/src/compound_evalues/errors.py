"""Exception types shared across the package."""


class DataError(ValueError):
    """Malformed or out-of-domain input (bad file row, NaN, negative value)."""


class ConfigError(ValueError):
    """Inconsistent configuration (weight budgets, shapes, parameter ranges)."""


class NumericalError(RuntimeError):
    """A numerical routine failed to converge or certify its solution."""

    def __init__(self, message, gap=None):
        super().__init__(message)
        self.gap = gap
