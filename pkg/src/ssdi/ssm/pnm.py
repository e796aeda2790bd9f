"""Selective SSM layer and the gated block built around it.

The layer derives its step sizes and input/output projections from the
input itself (so the recurrence is input-selective), keeps A diagonal and
negative through an exponential parameterization, and adds a learned
per-head skip D unless disabled.

Series layout is channels-first: (C, L) for one series, (B, C, L) batched.
"""

from __future__ import annotations

import numpy as np

from ..errors import DimensionError
from ..numerics import (
    ChannelLinear,
    DepthwiseConv,
    Module,
    RMSNorm,
    Tensor,
    as_tensor,
    ones_param,
    silu,
    softplus,
    swapaxes,
)
from ..numerics.tensor import default_dtype
from ..numerics.tensor import exp as t_exp
from .scan import ssm_scan

DEFAULT_STATE_DIM = 16
DEFAULT_CONV_WIDTH = 4
DEFAULT_EXPAND = 2


def _ensure_batched(x):
    x = as_tensor(x)
    if x.ndim == 2:
        return x.reshape((1,) + tuple(x.shape)), True
    if x.ndim == 3:
        return x, False
    raise DimensionError(f"expected (C, L) or (B, C, L), got {x.shape}")


class SSMLayer(Module):
    """Input-selective state-space recurrence over the time axis.

    heads: number of independent scan channels (the layer width).
    d_state: states per head. dt_min/dt_max bound the initial step sizes;
    the bias of the step projection is set to softplus-inverse of a
    log-uniform draw in that range.
    """

    def __init__(self, heads: int, rng: np.random.Generator,
                 d_state: int = DEFAULT_STATE_DIM,
                 dt_min: float = 0.01, dt_max: float = 0.1,
                 use_skip: bool = True):
        self.heads = heads
        self.d_state = d_state
        self.use_skip = use_skip
        self.dt_proj = ChannelLinear(heads, heads, rng)
        dt0 = np.exp(rng.uniform(np.log(dt_min), np.log(dt_max), size=heads))
        self.dt_proj.b.data[:] = dt0 + np.log(-np.expm1(-dt0))  # softplus inverse
        self.B_proj = ChannelLinear(heads, d_state, rng, bias=False)
        self.C_proj = ChannelLinear(heads, d_state, rng, bias=False)
        # realized A spans -1 .. -d_state on every head
        a_init = np.log(np.arange(1, d_state + 1, dtype=np.float64))
        self.A_log = Tensor(np.tile(a_init, (heads, 1)).astype(default_dtype()),
                            requires_grad=True)
        self.D = ones_param((heads,))

    def forward(self, x):
        """x: (B, H, L) -> (B, H, L)."""
        delta = softplus(self.dt_proj(x))          # (B, H, L), strictly positive
        Bm = self.B_proj(x)                        # (B, N, L)
        Cm = self.C_proj(x)
        A = -t_exp(self.A_log)                     # (H, N), strictly negative
        y = ssm_scan(
            swapaxes(delta, -1, -2),
            A,
            swapaxes(Bm, -1, -2),
            swapaxes(Cm, -1, -2),
            swapaxes(x, -1, -2),
        )
        y = swapaxes(y, -1, -2)
        if self.use_skip:
            y = y + x * self.D.reshape(-1, 1)
        return y


def selective_scan(x, params: SSMLayer) -> Tensor:
    """Apply an SSMLayer to (H, L) or (B, H, L) input."""
    xb, squeeze = _ensure_batched(x)
    if xb.shape[-2] != params.heads:
        raise DimensionError(f"input has {xb.shape[-2]} channels, layer has {params.heads}")
    y = params(xb)
    return y[0] if squeeze else y


class PNMBlock(Module):
    """Gated selective-scan block: widen, conv, scan, gate, project, normalize.

    width: input/output channel count. inner: expanded width (defaults to
    expand * width). conv_width is clamped by callers that scan short axes.
    """

    def __init__(self, width: int, rng: np.random.Generator,
                 inner: int | None = None,
                 expand: int = DEFAULT_EXPAND,
                 d_state: int = DEFAULT_STATE_DIM,
                 conv_width: int = DEFAULT_CONV_WIDTH,
                 use_skip: bool = True,
                 norm_eps: float = 1e-5):
        e = inner if inner is not None else expand * width
        self.width = width
        self.inner = e
        self.in_proj = ChannelLinear(width, 2 * e, rng)
        self.conv = DepthwiseConv(e, conv_width, rng, padding="causal")
        self.ssm = SSMLayer(e, rng, d_state=d_state, use_skip=use_skip)
        self.out_proj = ChannelLinear(e, width, rng)
        self.norm = RMSNorm(width, eps=norm_eps, axis=-2)

    def forward(self, x):
        """x: (B, C, L) -> (B, C, L)."""
        xz = self.in_proj(x)
        xi = xz[:, : self.inner]
        gate = xz[:, self.inner :]
        xi = silu(self.conv(xi))
        y = self.ssm(xi)
        y = y * silu(gate)
        return self.norm(self.out_proj(y))


def pnm_block(x, params: PNMBlock) -> Tensor:
    """Apply a PNMBlock to (C, L) or (B, C, L) input."""
    xb, squeeze = _ensure_batched(x)
    if xb.shape[-2] != params.width:
        raise DimensionError(f"input has {xb.shape[-2]} channels, block has {params.width}")
    y = params(xb)
    return y[0] if squeeze else y
