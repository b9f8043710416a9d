"""Self-contained differentiable tensor engine (numpy substrate)."""

from .errors import (ConfigError, DimensionError, FormatError, GraphError,
                     MetricError, MissingGradientError, NumericError)
from .tensor import (Tape, Tensor, absolute, active_tape, add, backward, concat,
                     maximum, mean_all, mul, neg, prelu, reshape, sigmoid, sub,
                     sum_all, tanh, transpose)
from .conv import (conv2d, conv3d, conv_transpose2d, conv_transpose3d,
                   grouped_conv)
from .optim import AdamState, adam_step, lr_schedule

__all__ = [
    "Tape", "Tensor", "absolute", "active_tape", "add", "backward", "concat",
    "maximum", "mean_all", "mul", "neg", "prelu", "reshape", "sigmoid", "sub",
    "sum_all", "tanh", "transpose",
    "conv2d", "conv3d", "conv_transpose2d", "conv_transpose3d", "grouped_conv",
    "AdamState", "adam_step", "lr_schedule",
    "ConfigError", "DimensionError", "FormatError", "GraphError", "MetricError",
    "MissingGradientError", "NumericError",
]
