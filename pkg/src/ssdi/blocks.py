"""Composite sequence blocks around the selective-scan core.

BAMBlock mixes information along time (optionally in both directions),
CMBBlock mixes along channels by transposing and scanning the channel
axis, ChannelAttention is the lightweight pooled-gate alternative, and
SMM chains them. All blocks preserve (B, C, L) shape and carry their
input through a residual path, so zeroing the learned weights reduces
them to the identity.

Note the CMB transpose makes its parameter shapes depend on the window
length: models are built for a fixed L.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, DomainError
from .numerics import (
    DepthwiseConv,
    LayerNorm,
    Linear,
    Module,
    Tensor,
    sigmoid,
    silu,
    swapaxes,
)
from .numerics.tensor import flip, mean
from .ssm.pnm import PNMBlock, _ensure_batched

_DIRECTIONS = ("bidirectional", "forward", "backward")
_ATTENTION_SCOPES = ("per_branch", "shared")
_CHANNEL_MODULES = ("cmb", "none", "channel_attention")


@dataclass
class BlockConfig:
    """Ablation axes and inner sizes shared by the sequence blocks."""

    direction: str = "bidirectional"
    temporal_attention: bool = True
    attention_scope: str = "per_branch"
    channel_module: str = "cmb"
    d_state: int = 16
    conv_width: int = 4
    inner: int | None = None          # PNM expanded width for time-axis blocks
    use_skip: bool = True
    norm_eps: float = 1e-5

    def __post_init__(self):
        if self.direction not in _DIRECTIONS:
            raise DomainError(f"direction must be one of {_DIRECTIONS}")
        if self.attention_scope not in _ATTENTION_SCOPES:
            raise DomainError(f"attention_scope must be one of {_ATTENTION_SCOPES}")
        if self.channel_module not in _CHANNEL_MODULES:
            raise DomainError(f"channel_module must be one of {_CHANNEL_MODULES}")


class TemporalAttention(Module):
    """Position-wise gate: sigmoid of a depthwise conv reweights the input."""

    def __init__(self, channels: int, rng: np.random.Generator, k: int = 4):
        self.conv = DepthwiseConv(channels, k, rng, padding="same")

    def forward(self, x):
        return sigmoid(self.conv(x)) * x


class BAMBlock(Module):
    """Residual time-axis block with forward and reversed scan branches.

    Each branch is conv -> PNM -> attention. The backward branch runs
    entirely in the time-reversed domain (attention included) and is
    flipped back before the residual sum; with tied branch weights the
    block then commutes with time reversal exactly.
    """

    def __init__(self, width: int, rng: np.random.Generator,
                 config: BlockConfig | None = None):
        cfg = config or BlockConfig()
        self.width = width
        self.config = cfg
        self.norm = LayerNorm(width, eps=cfg.norm_eps, axis=-2)

        def make_branch():
            conv = DepthwiseConv(width, cfg.conv_width, rng, padding="causal")
            pnm = PNMBlock(width, rng, inner=cfg.inner, d_state=cfg.d_state,
                           conv_width=cfg.conv_width, use_skip=cfg.use_skip,
                           norm_eps=cfg.norm_eps)
            att = None
            if cfg.temporal_attention and cfg.attention_scope == "per_branch":
                att = TemporalAttention(width, rng)
            return conv, pnm, att

        self.fwd_conv = self.fwd_pnm = self.fwd_att = None
        self.bwd_conv = self.bwd_pnm = self.bwd_att = None
        if cfg.direction in ("bidirectional", "forward"):
            self.fwd_conv, self.fwd_pnm, self.fwd_att = make_branch()
        if cfg.direction in ("bidirectional", "backward"):
            self.bwd_conv, self.bwd_pnm, self.bwd_att = make_branch()
        self.shared_att = None
        if cfg.temporal_attention and cfg.attention_scope == "shared":
            self.shared_att = TemporalAttention(width, rng)

    def forward(self, x):
        u = self.norm(x)
        total = None
        if self.fwd_conv is not None:
            fwd = self.fwd_pnm(self.fwd_conv(u))
            if self.fwd_att is not None:
                fwd = self.fwd_att(fwd)
            total = fwd
        if self.bwd_conv is not None:
            rev = flip(u, axis=-1)
            bwd = self.bwd_pnm(self.bwd_conv(rev))
            if self.bwd_att is not None:
                bwd = self.bwd_att(bwd)
            bwd = flip(bwd, axis=-1)
            total = bwd if total is None else total + bwd
        if self.shared_att is not None:
            total = self.shared_att(total)
        return x + total


class CMBBlock(Module):
    """Residual channel-axis block: transpose, gate a PNM path, transpose back.

    In the transposed view each time position acts as a channel, so the
    convolution kernels have seq_len rows and the scan runs over the C
    axis; kernel width is clamped to the channel count.
    """

    def __init__(self, width: int, seq_len: int, rng: np.random.Generator,
                 config: BlockConfig | None = None):
        cfg = config or BlockConfig()
        self.width = width
        self.seq_len = seq_len
        k = min(cfg.conv_width, width)
        self.path_conv = DepthwiseConv(seq_len, k, rng, padding="causal")
        self.path_pnm = PNMBlock(seq_len, rng, d_state=cfg.d_state, conv_width=k,
                                 use_skip=cfg.use_skip, norm_eps=cfg.norm_eps)
        self.gate_conv = DepthwiseConv(seq_len, k, rng, padding="causal")

    def forward(self, x):
        if x.shape[-1] != self.seq_len:
            raise DimensionError(
                f"block was built for length {self.seq_len}, got {x.shape[-1]}")
        xt = swapaxes(x, -1, -2)                      # (B, L, C)
        path = self.path_pnm(self.path_conv(xt))
        gate = sigmoid(self.gate_conv(xt))
        return swapaxes(xt + gate * path, -1, -2)


class ChannelAttention(Module):
    """Pooled squeeze-excitation gate over channels (ablation alternative)."""

    def __init__(self, width: int, rng: np.random.Generator):
        hidden = max(1, width // 4)
        self.squeeze = Linear(width, hidden, rng)
        self.excite = Linear(hidden, width, rng)

    def forward(self, x):
        pooled = mean(x, axis=-1)                     # (B, C)
        gate = sigmoid(self.excite(silu(self.squeeze(pooled))))
        return x * gate.reshape(gate.shape + (1,))


class SMM(Module):
    """Alternating time-axis and channel-axis blocks, `depth` times."""

    def __init__(self, width: int, seq_len: int, rng: np.random.Generator,
                 depth: int = 1, config: BlockConfig | None = None):
        cfg = config or BlockConfig()
        if depth < 1:
            raise DomainError("depth must be >= 1")
        self.width = width
        self.config = cfg
        self.layers: list[Module] = []
        for _ in range(depth):
            self.layers.append(BAMBlock(width, rng, cfg))
            if cfg.channel_module == "cmb":
                self.layers.append(CMBBlock(width, seq_len, rng, cfg))
            elif cfg.channel_module == "channel_attention":
                self.layers.append(ChannelAttention(width, rng))

    def forward(self, x):
        for layer in self.layers:
            x = layer(x)
        return x


# -- (C, L) convenience wrappers ------------------------------------------


def temporal_attention(x, params: TemporalAttention) -> Tensor:
    xb, squeeze = _ensure_batched(x)
    y = params(xb)
    return y[0] if squeeze else y


def bam_block(x, params: BAMBlock) -> Tensor:
    xb, squeeze = _ensure_batched(x)
    if xb.shape[-2] != params.width:
        raise DimensionError(f"input has {xb.shape[-2]} channels, block has {params.width}")
    y = params(xb)
    return y[0] if squeeze else y


def cmb_block(x, params: CMBBlock) -> Tensor:
    xb, squeeze = _ensure_batched(x)
    if xb.shape[-2] != params.width:
        raise DimensionError(f"input has {xb.shape[-2]} channels, block has {params.width}")
    y = params(xb)
    return y[0] if squeeze else y


def smm(x, params: SMM) -> Tensor:
    xb, squeeze = _ensure_batched(x)
    if xb.shape[-2] != params.width:
        raise DimensionError(f"input has {xb.shape[-2]} channels, stack has {params.width}")
    y = params(xb)
    return y[0] if squeeze else y
