from .functional import (
    activations,
    channel_linear,
    depthwise_conv1d,
    layer_norm,
    linear_map,
    rms_norm,
    sigmoid,
    silu,
    softplus,
)
from .gradcheck import GradCheckReport, finite_difference_check
from .modules import (
    ChannelLinear,
    DepthwiseConv,
    LayerNorm,
    Linear,
    RMSNorm,
    ones_param,
    zeros_param,
)
from .tensor import (
    Module,
    Tensor,
    as_tensor,
    broadcast_to,
    concat,
    default_dtype,
    exp,
    flip,
    grad_enabled,
    log,
    matmul,
    mean,
    no_grad,
    reshape,
    set_default_dtype,
    sqrt,
    sum_,
    swapaxes,
    tanh,
    take,
)

__all__ = [
    "Tensor", "Module", "no_grad", "set_default_dtype", "default_dtype",
    "as_tensor", "grad_enabled",
    "exp", "log", "sqrt", "tanh", "matmul", "mean", "sum_", "reshape",
    "swapaxes", "flip", "concat", "broadcast_to", "take",
    "sigmoid", "softplus", "silu", "activations",
    "linear_map", "channel_linear", "depthwise_conv1d", "layer_norm", "rms_norm",
    "Linear", "ChannelLinear", "DepthwiseConv", "LayerNorm", "RMSNorm",
    "ones_param", "zeros_param",
    "finite_difference_check", "GradCheckReport",
]
