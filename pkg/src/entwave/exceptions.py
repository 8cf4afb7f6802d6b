"""Exception types shared across the package."""


class StructuralError(ValueError):
    """Inputs with incompatible structure (shapes, tables, layouts, quantum numbers)."""


class ConvergenceError(RuntimeError):
    """Iterative solver stopped without meeting its tolerance."""

    def __init__(self, message, last_value=None, iterations=None):
        super().__init__(message)
        self.last_value = last_value
        self.iterations = iterations


class OracleCapExceeded(RuntimeError):
    """Dense oracle refused because the sector is larger than the configured cap."""

    def __init__(self, dimension, cap):
        super().__init__(f"sector dimension {dimension} exceeds oracle cap {cap}")
        self.dimension = dimension
        self.cap = cap
