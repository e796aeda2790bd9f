"""Differentiable building-block operations.

All functions accept Tensors (or arrays, auto-wrapped) and return Tensors.
The nonlinearities and norms are single tape nodes with hand-derived
backward passes; that keeps tapes short, which matters on long sequences.

Layout conventions: linear_map applies along the last axis; channel_linear
and depthwise_conv1d treat axis -2 as channels and axis -1 as time, so a
series is (C, L) and a batch is (B, C, L).
"""

from __future__ import annotations

import numpy as np

from ..errors import DimensionError, DomainError
from .tensor import Tensor, as_tensor, matmul, swapaxes

_PAD_MODES = ("causal", "same")


def sigmoid(x) -> Tensor:
    x = as_tensor(x)
    # tanh form is overflow-safe at both ends
    out_data = 0.5 * (np.tanh(0.5 * x.data) + 1.0)

    def backward(g):
        if x.requires_grad:
            x._accumulate(g * out_data * (1.0 - out_data))

    return Tensor._result(out_data, (x,), backward)


def softplus(x) -> Tensor:
    x = as_tensor(x)
    out_data = np.logaddexp(np.asarray(0.0, dtype=x.data.dtype), x.data)

    def backward(g):
        if x.requires_grad:
            x._accumulate(g * (0.5 * (np.tanh(0.5 * x.data) + 1.0)))

    return Tensor._result(out_data, (x,), backward)


def silu(x) -> Tensor:
    x = as_tensor(x)
    sig = 0.5 * (np.tanh(0.5 * x.data) + 1.0)
    out_data = x.data * sig

    def backward(g):
        if x.requires_grad:
            x._accumulate(g * (sig + x.data * sig * (1.0 - sig)))

    return Tensor._result(out_data, (x,), backward)


def activations(x, kind: str) -> Tensor:
    """Dispatch by name; the model only ever needs these three."""
    try:
        fn = {"sigmoid": sigmoid, "softplus": softplus, "silu": silu}[kind]
    except KeyError:
        raise DomainError(f"unknown activation {kind!r}") from None
    return fn(x)


def linear_map(x, W, b=None) -> Tensor:
    """y[..., i] = sum_j W[i, j] x[..., j] + b[i], applied along the last axis."""
    x = as_tensor(x)
    W = as_tensor(W)
    if W.ndim != 2:
        raise DimensionError(f"weight must be 2-d, got {W.shape}")
    if x.shape[-1] != W.shape[1]:
        raise DimensionError(f"input width {x.shape[-1]} != weight fan-in {W.shape[1]}")
    if x.ndim == 1:
        y = matmul(x.reshape(1, -1), swapaxes(W, 0, 1)).reshape(W.shape[0])
    else:
        y = matmul(x, swapaxes(W, 0, 1))
    if b is not None:
        y = y + as_tensor(b, like=y)
    return y


def channel_linear(x, W, b=None) -> Tensor:
    """Linear map over the channel axis of (..., C_in, L) inputs."""
    x = as_tensor(x)
    W = as_tensor(W)
    if x.ndim < 2:
        raise DimensionError("channel_linear needs (..., C, L) input")
    if x.shape[-2] != W.shape[1]:
        raise DimensionError(f"channel count {x.shape[-2]} != weight fan-in {W.shape[1]}")
    y = matmul(W, x)
    if b is not None:
        b = as_tensor(b, like=y)
        y = y + b.reshape(-1, 1)
    return y


def _conv_taps(L: int, k: int, pad_left: int):
    for j in range(k):
        off = j - pad_left
        lo = max(0, -off)
        hi = L - max(0, off)
        if hi > lo:
            yield j, lo, hi, lo + off, hi + off


def depthwise_conv1d(x, kernel, padding: str = "causal") -> Tensor:
    """Per-channel 1-d convolution along the last axis, length preserving.

    x: (..., C, L), kernel: (C, k). "causal" pads k-1 zeros on the left so
    y[t] sees x[t-k+1 .. t]; "same" centers the window (left-biased for
    even k, so k=2 gives y[t] = k0*x[t] + k1*x[t+1]).
    """
    x = as_tensor(x)
    kernel = as_tensor(kernel, like=x)
    if padding not in _PAD_MODES:
        raise DomainError(f"padding must be one of {_PAD_MODES}, got {padding!r}")
    if x.ndim < 2:
        raise DimensionError("depthwise_conv1d needs (..., C, L) input")
    C, L = x.shape[-2], x.shape[-1]
    if kernel.ndim != 2 or kernel.shape[0] != C:
        raise DimensionError(f"kernel shape {kernel.shape} incompatible with {C} channels")
    k = kernel.shape[1]
    if k < 1:
        raise DimensionError("kernel width must be >= 1")
    if k > L:
        raise DimensionError(f"kernel width {k} exceeds sequence length {L}")
    pad_left = k - 1 if padding == "causal" else (k - 1) // 2
    taps = list(_conv_taps(L, k, pad_left))

    kd = kernel.data
    out_data = np.zeros_like(x.data)
    for j, lo, hi, ilo, ihi in taps:
        out_data[..., lo:hi] += kd[:, j : j + 1] * x.data[..., ilo:ihi]

    def backward(g):
        if x.requires_grad:
            gx = np.zeros_like(x.data)
            for j, lo, hi, ilo, ihi in taps:
                gx[..., ilo:ihi] += kd[:, j : j + 1] * g[..., lo:hi]
            x._accumulate(gx)
        if kernel.requires_grad:
            gk = np.zeros_like(kd)
            sum_axes = tuple(range(g.ndim - 2)) + (g.ndim - 1,)
            for j, lo, hi, ilo, ihi in taps:
                gk[:, j] = (g[..., lo:hi] * x.data[..., ilo:ihi]).sum(axis=sum_axes)
            kernel._accumulate(gk)

    return Tensor._result(out_data, (x, kernel), backward)


def _gain_shape(ndim: int, axis: int, d: int) -> list[int]:
    shape = [1] * ndim
    shape[axis] = d
    return shape


def layer_norm(x, gain, bias, eps: float = 1e-5, axis: int = -1) -> Tensor:
    """Normalize to zero mean, unit variance along `axis`, then affine."""
    x = as_tensor(x)
    gain = as_tensor(gain, like=x)
    bias = as_tensor(bias, like=x)
    d = x.shape[axis]
    if gain.shape != (d,) or bias.shape != (d,):
        raise DimensionError(f"gain/bias must have shape ({d},)")
    bshape = _gain_shape(x.ndim, axis % x.ndim, d)
    mu = x.data.mean(axis=axis, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=axis, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    gb = gain.data.reshape(bshape)
    out_data = xhat * gb + bias.data.reshape(bshape)

    def backward(g):
        if x.requires_grad:
            gh = g * gb
            m1 = gh.mean(axis=axis, keepdims=True)
            m2 = (gh * xhat).mean(axis=axis, keepdims=True)
            x._accumulate((gh - m1 - xhat * m2) * inv)
        reduce_axes = tuple(i for i in range(x.ndim) if i != axis % x.ndim)
        if gain.requires_grad:
            gain._accumulate((g * xhat).sum(axis=reduce_axes))
        if bias.requires_grad:
            bias._accumulate(g.sum(axis=reduce_axes))

    return Tensor._result(out_data, (x, gain, bias), backward)


def rms_norm(x, gain, eps: float = 1e-5, axis: int = -1) -> Tensor:
    """Scale by the root-mean-square along `axis`; no centering."""
    x = as_tensor(x)
    gain = as_tensor(gain, like=x)
    d = x.shape[axis]
    if gain.shape != (d,):
        raise DimensionError(f"gain must have shape ({d},)")
    bshape = _gain_shape(x.ndim, axis % x.ndim, d)
    ms = (x.data * x.data).mean(axis=axis, keepdims=True)
    inv = 1.0 / np.sqrt(ms + eps)
    gb = gain.data.reshape(bshape)
    out_data = x.data * inv * gb

    def backward(g):
        if x.requires_grad:
            gh = g * gb
            m = (gh * x.data).mean(axis=axis, keepdims=True)
            x._accumulate(inv * gh - x.data * (m * inv ** 3))
        if gain.requires_grad:
            reduce_axes = tuple(i for i in range(x.ndim) if i != axis % x.ndim)
            gain._accumulate((g * x.data * inv).sum(axis=reduce_axes))

    return Tensor._result(out_data, (x, gain), backward)
