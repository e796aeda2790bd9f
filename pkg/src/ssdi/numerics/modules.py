"""Parameterized wrappers around the functional ops."""

from __future__ import annotations

import numpy as np

from .functional import channel_linear, depthwise_conv1d, layer_norm, linear_map, rms_norm
from .tensor import Module, Tensor, default_dtype


def _uniform_fan_in(rng: np.random.Generator, fan_in: int, shape) -> Tensor:
    bound = 1.0 / np.sqrt(max(fan_in, 1))
    data = rng.uniform(-bound, bound, size=shape).astype(default_dtype())
    return Tensor(data, requires_grad=True)


def zeros_param(shape) -> Tensor:
    return Tensor(np.zeros(shape, dtype=default_dtype()), requires_grad=True)


def ones_param(shape) -> Tensor:
    return Tensor(np.ones(shape, dtype=default_dtype()), requires_grad=True)


class Linear(Module):
    """Affine map along the last axis."""

    def __init__(self, d_in: int, d_out: int, rng: np.random.Generator, bias: bool = True):
        self.W = _uniform_fan_in(rng, d_in, (d_out, d_in))
        self.b = zeros_param((d_out,)) if bias else None

    def forward(self, x):
        return linear_map(x, self.W, self.b)


class ChannelLinear(Module):
    """Affine map along the channel axis of (..., C, L) inputs."""

    def __init__(self, c_in: int, c_out: int, rng: np.random.Generator, bias: bool = True):
        self.W = _uniform_fan_in(rng, c_in, (c_out, c_in))
        self.b = zeros_param((c_out,)) if bias else None

    def forward(self, x):
        return channel_linear(x, self.W, self.b)


class DepthwiseConv(Module):
    """Per-channel conv along time with a bias, length preserving."""

    def __init__(self, channels: int, k: int, rng: np.random.Generator,
                 padding: str = "causal", bias: bool = True):
        self.padding = padding
        self.kernel = _uniform_fan_in(rng, k, (channels, k))
        self.bias = zeros_param((channels,)) if bias else None

    def forward(self, x):
        y = depthwise_conv1d(x, self.kernel, padding=self.padding)
        if self.bias is not None:
            y = y + self.bias.reshape(-1, 1)
        return y


class LayerNorm(Module):
    def __init__(self, d: int, eps: float = 1e-5, axis: int = -1):
        self.eps = eps
        self.axis = axis
        self.gain = ones_param((d,))
        self.bias = zeros_param((d,))

    def forward(self, x):
        return layer_norm(x, self.gain, self.bias, eps=self.eps, axis=self.axis)


class RMSNorm(Module):
    def __init__(self, d: int, eps: float = 1e-5, axis: int = -1):
        self.eps = eps
        self.axis = axis
        self.gain = ones_param((d,))

    def forward(self, x):
        return rms_norm(x, self.gain, eps=self.eps, axis=self.axis)
