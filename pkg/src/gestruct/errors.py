"""Exception types shared across the package."""


class DataError(ValueError):
    """Malformed input: bad shapes, missing values, unusable CSV, bad flags."""


class NumericalError(RuntimeError):
    """Numerical failure: rank-deficient designs, non-finite objectives."""
