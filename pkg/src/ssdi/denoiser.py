"""The noise-prediction network.

Noisy values (with the conditioning mask stacked as extra channels) and
the conditioning series are embedded separately, fused with a sinusoidal
diffusion-step embedding, and refined by two sequential-block stages. The
output has the same channel count as the data and estimates the noise
that was mixed into the target entries.

Parameter shapes are a pure function of the config plus the data shape
(channels, window length, diffusion horizon), which is what makes
checkpoints self-describing.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .blocks import SMM, BlockConfig
from .errors import DimensionError, DomainError
from .numerics import (
    ChannelLinear,
    Linear,
    Module,
    Tensor,
    as_tensor,
    broadcast_to,
    concat,
    default_dtype,
    silu,
)


@dataclass
class DenoiserConfig:
    seq_dim: int = 128                   # width of the latent stream
    residual_channels: int | None = None  # PNM inner width; None = 2 * seq_dim
    diffusion_embed_dim: int = 128
    n_input_smm: int = 1
    n_cond_smm: int = 1
    n_seq_smm: int = 1
    smm_depth: int = 1
    block: BlockConfig = field(default_factory=BlockConfig)

    def __post_init__(self):
        if self.seq_dim < 1:
            raise DomainError("seq_dim must be positive")
        if self.diffusion_embed_dim < 2 or self.diffusion_embed_dim % 2:
            raise DomainError("diffusion_embed_dim must be even and >= 2")
        for name in ("n_input_smm", "n_cond_smm", "n_seq_smm", "smm_depth"):
            if getattr(self, name) < 1:
                raise DomainError(f"{name} must be >= 1")


def embed_diffusion_step(t, dim: int) -> np.ndarray:
    """Sinusoidal featurization of integer steps: (B,) -> (B, dim).

    Half sine, half cosine over a geometric frequency ladder from 1 down
    to 1e-4, the usual transformer recipe. Stateless; range checks live
    in StepEmbedding.
    """
    if dim < 2 or dim % 2:
        raise DomainError("embedding dim must be even and >= 2")
    t = np.atleast_1d(np.asarray(t, dtype=np.float64))
    half = dim // 2
    if half == 1:
        freqs = np.ones(1)
    else:
        freqs = 10.0 ** (-4.0 * np.arange(half) / (half - 1))
    ang = t[:, None] * freqs[None, :]
    return np.concatenate([np.sin(ang), np.cos(ang)], axis=-1)


class StepEmbedding(Module):
    """Learned transform of the sinusoidal step features."""

    def __init__(self, dim: int, max_t: int, rng: np.random.Generator):
        self.dim = dim
        self.max_t = max_t
        self.lin1 = Linear(dim, dim, rng)
        self.lin2 = Linear(dim, dim, rng)

    def forward(self, t) -> Tensor:
        t_arr = np.atleast_1d(np.asarray(t))
        if not np.issubdtype(t_arr.dtype, np.integer):
            raise DomainError("diffusion steps must be integers")
        if np.any(t_arr < 1) or np.any(t_arr > self.max_t):
            raise DomainError(f"step out of range [1, {self.max_t}]: {t_arr}")
        # the table is built in float64; adopt the working dtype so the
        # embedding never upcasts the activation stream
        table = embed_diffusion_step(t_arr, self.dim).astype(default_dtype())
        return self.lin2(silu(self.lin1(Tensor(table))))


class InputEmbed(Module):
    """Channelwise projection into the latent width plus a block stack."""

    def __init__(self, in_channels: int, width: int, seq_len: int,
                 n_smm: int, depth: int, cfg: BlockConfig,
                 rng: np.random.Generator):
        self.proj = ChannelLinear(in_channels, width, rng)
        self.stack = [SMM(width, seq_len, rng, depth=depth, config=cfg)
                      for _ in range(n_smm)]

    def forward(self, x):
        h = self.proj(x)
        for s in self.stack:
            h = s(h)
        return h


class Denoiser(Module):
    def __init__(self, config: DenoiserConfig, n_channels: int, seq_len: int,
                 max_t: int, rng: np.random.Generator):
        if n_channels < 1 or seq_len < 1:
            raise DimensionError("data shape must be positive")
        cfg = config
        blk = cfg.block
        if cfg.residual_channels is not None:
            blk = replace(blk, inner=cfg.residual_channels)
        C, L, K = cfg.seq_dim, seq_len, n_channels
        self.config = cfg
        self.n_channels = K
        self.seq_len = L
        self.max_t = max_t
        # the noisy path sees values plus the conditioning mask as channels
        self.input_embed = InputEmbed(2 * K, C, L, cfg.n_input_smm,
                                      cfg.smm_depth, blk, rng)
        self.cond_embed = InputEmbed(K, C, L, cfg.n_cond_smm,
                                     cfg.smm_depth, blk, rng)
        self.step_embed = StepEmbedding(cfg.diffusion_embed_dim, max_t, rng)
        self.step_fuse = ChannelLinear(C + cfg.diffusion_embed_dim, C, rng)
        self.mid_smm = [SMM(C, L, rng, depth=cfg.smm_depth, config=blk)
                        for _ in range(cfg.n_seq_smm)]
        self.cond_fuse = ChannelLinear(2 * C, C, rng)
        self.out_smm = [SMM(C, L, rng, depth=cfg.smm_depth, config=blk)
                        for _ in range(cfg.n_seq_smm)]
        self.out_proj = ChannelLinear(C, K, rng)

    def _check(self, x, name):
        x = as_tensor(x)
        if x.ndim == 2:
            x = x.reshape((1,) + tuple(x.shape))
        if x.ndim != 3 or x.shape[-2] != self.n_channels or x.shape[-1] != self.seq_len:
            raise DimensionError(
                f"{name} must be (B, {self.n_channels}, {self.seq_len}), got {x.shape}")
        return x

    def forward(self, x_t, x_cond, cond_mask, t) -> Tensor:
        return self.predict_noise(x_t, x_cond, cond_mask, t)

    def predict_noise(self, x_t, x_cond, cond_mask, t) -> Tensor:
        """Estimate the injected noise; returns the input's (B, K, L) shape."""
        squeeze = as_tensor(x_t).ndim == 2
        x_t = self._check(x_t, "x_t")
        x_cond = self._check(x_cond, "x_cond")
        cond_mask = self._check(cond_mask, "cond_mask")
        B, _, L = x_t.shape

        t_arr = np.atleast_1d(np.asarray(t))
        if t_arr.size == 1 and B > 1:
            t_arr = np.repeat(t_arr, B)
        if t_arr.shape != (B,):
            raise DimensionError(f"t must be scalar or ({B},), got {t_arr.shape}")

        h = self.input_embed(concat([x_t, cond_mask], axis=-2))
        e = self.step_embed(t_arr)                       # (B, E)
        e = broadcast_to(e.reshape(B, -1, 1), (B, e.shape[-1], L))
        h = self.step_fuse(concat([h, e], axis=-2))
        for s in self.mid_smm:
            h = s(h)
        c = self.cond_embed(x_cond)
        h = self.cond_fuse(concat([h, c], axis=-2))
        for s in self.out_smm:
            h = s(h)
        out = self.out_proj(h)
        return out[0] if squeeze else out

    # -- serialization ------------------------------------------------------

    def state_dict(self) -> dict[str, np.ndarray]:
        return {name: p.data.copy() for name, p in self.named_parameters()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        own = dict(self.named_parameters())
        if own.keys() != state.keys():
            missing = own.keys() ^ state.keys()
            raise DimensionError(f"parameter names disagree: {sorted(missing)[:5]}")
        for name, p in own.items():
            arr = np.asarray(state[name])
            if arr.shape != p.data.shape:
                raise DimensionError(
                    f"{name}: stored shape {arr.shape} != model shape {p.data.shape}")
            # adopt the stored dtype so a reload reproduces the run bit for bit
            p.data = arr.copy()


def predict_noise(x_t, x_cond, cond_mask, t, params: Denoiser) -> Tensor:
    return params.predict_noise(x_t, x_cond, cond_mask, t)


def embed_input(x, which: str, params: Denoiser) -> Tensor:
    """Run one embedding path on (C', L) or (B, C', L) input."""
    if which not in ("noisy", "condition"):
        raise DomainError("which must be 'noisy' or 'condition'")
    path = params.input_embed if which == "noisy" else params.cond_embed
    x = as_tensor(x)
    squeeze = x.ndim == 2
    if squeeze:
        x = x.reshape((1,) + tuple(x.shape))
    y = path(x)
    return y[0] if squeeze else y
