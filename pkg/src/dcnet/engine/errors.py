"""Exception types shared across the package."""


class DimensionError(ValueError):
    """A tensor or image has the wrong rank or an incompatible extent."""


class ConfigError(ValueError):
    """An invalid configuration value or combination."""


class GraphError(RuntimeError):
    """Misuse of the autodiff tape (reused tape, detached loss, non-scalar loss)."""


class MissingGradientError(RuntimeError):
    """An optimizer step found a parameter without a gradient."""


class FormatError(ValueError):
    """A file does not conform to its container format."""


class MetricError(ValueError):
    """A metric is undefined for the given inputs (degenerate statistics)."""


class NumericError(ArithmeticError):
    """A NaN or Inf appeared where finite values are required."""
