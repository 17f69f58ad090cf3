"""Exception hierarchy.

The CLI maps these onto exit codes: ``InputError`` -> 2,
``NumericalError`` -> 3, ``ConvergenceError`` -> 4.
"""


class InputError(ValueError):
    """Malformed or inconsistent user input."""


class InvalidModelError(InputError):
    """Model parameters violate a structural requirement (dimensions, PD covariance, ...)."""


class PathLimitError(InputError):
    """Regime-path enumeration would exceed the configured guard."""

    def __init__(self, count, limit):
        super().__init__(f"regime-path enumeration needs {count} paths (limit {limit})")
        self.count = count
        self.limit = limit


class NumericalError(ArithmeticError):
    """A computation cannot be carried out in floating point."""


class DegenerateError(NumericalError):
    """A distribution needed by a closed form collapses to a point mass."""


class ConvergenceError(RuntimeError):
    """An iterative procedure failed to converge."""
