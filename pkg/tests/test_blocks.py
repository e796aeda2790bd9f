"""Composite block contracts: residuals, symmetry, gating, ablations."""

import numpy as np
import pytest

from ssdi.blocks import (
    BAMBlock,
    BlockConfig,
    ChannelAttention,
    CMBBlock,
    SMM,
    TemporalAttention,
    bam_block,
    cmb_block,
    smm,
    temporal_attention,
)
from ssdi.errors import DimensionError, DomainError
from ssdi.numerics import Tensor, finite_difference_check

RNG = np.random.default_rng(77)


def zero_params(module):
    for _, p in module.named_parameters():
        p.data[...] = 0.0


def copy_params(src, dst):
    sp = dict(src.named_parameters())
    dp = dict(dst.named_parameters())
    assert sp.keys() == dp.keys()
    for k in sp:
        dp[k].data[...] = sp[k].data


# ---------------------------------------------------------------- attention

def test_attention_zero_weights_halve_input():
    att = TemporalAttention(3, np.random.default_rng(0))
    zero_params(att)
    x = RNG.standard_normal((3, 9))
    y = temporal_attention(Tensor(x), att)
    np.testing.assert_allclose(y.data, 0.5 * x, atol=1e-15)


def test_attention_saturated_bias_passes_input_through():
    att = TemporalAttention(2, np.random.default_rng(0))
    zero_params(att)
    att.conv.bias.data[:] = 40.0
    x = RNG.standard_normal((2, 7))
    y = temporal_attention(Tensor(x), att)
    np.testing.assert_allclose(y.data, x, atol=1e-12)


def test_attention_never_amplifies():
    for seed in range(5):
        att = TemporalAttention(4, np.random.default_rng(seed))
        x = RNG.standard_normal((4, 30)) * 5
        y = temporal_attention(Tensor(x), att)
        assert np.all(np.abs(y.data) <= np.abs(x) + 1e-12)


# ---------------------------------------------------------------- bam

def small_cfg(**kw):
    base = dict(d_state=3, conv_width=3)
    base.update(kw)
    return BlockConfig(**base)


def test_bam_zero_branch_weights_is_identity():
    block = BAMBlock(3, np.random.default_rng(1), small_cfg())
    for branch in (block.fwd_conv, block.fwd_pnm, block.fwd_att,
                   block.bwd_conv, block.bwd_pnm, block.bwd_att):
        zero_params(branch)
    x = RNG.standard_normal((3, 12))
    y = bam_block(Tensor(x), block)
    assert np.max(np.abs(y.data - x)) < 1e-10


def test_bam_weight_tied_reversal_equivariance():
    block = BAMBlock(3, np.random.default_rng(2), small_cfg())
    copy_params(src=block.fwd_conv, dst=block.bwd_conv)
    copy_params(src=block.fwd_pnm, dst=block.bwd_pnm)
    copy_params(src=block.fwd_att, dst=block.bwd_att)
    x = RNG.standard_normal((3, 16))
    y_then_flip = np.flip(bam_block(Tensor(x), block).data, axis=-1)
    flip_then_y = bam_block(Tensor(np.flip(x, axis=-1).copy()), block).data
    assert np.max(np.abs(y_then_flip - flip_then_y)) < 1e-10


def test_bam_directions_differ():
    x = RNG.standard_normal((2, 10))
    outs = {}
    for direction in ("forward", "backward", "bidirectional"):
        block = BAMBlock(2, np.random.default_rng(5), small_cfg(direction=direction))
        outs[direction] = bam_block(Tensor(x), block).data
    assert np.max(np.abs(outs["forward"] - outs["backward"])) > 1e-6
    assert np.max(np.abs(outs["forward"] - outs["bidirectional"])) > 1e-6


def test_bam_forward_only_has_no_backward_branch():
    block = BAMBlock(2, np.random.default_rng(5), small_cfg(direction="forward"))
    assert block.bwd_conv is None and block.bwd_pnm is None


def test_bam_shape_preserved_and_deterministic():
    block = BAMBlock(4, np.random.default_rng(8), small_cfg())
    x = RNG.standard_normal((2, 4, 9))
    y1 = block(Tensor(x))
    y2 = block(Tensor(x))
    assert y1.shape == (2, 4, 9)
    np.testing.assert_array_equal(y1.data, y2.data)


def test_bam_gradients_match_finite_differences():
    block = BAMBlock(2, np.random.default_rng(13), small_cfg(d_state=2))
    x = Tensor(RNG.standard_normal((1, 2, 8)), requires_grad=True)
    params = [("x", x)] + list(block.named_parameters())

    def loss():
        return (block(x) ** 2.0).sum()

    report = finite_difference_check(loss, params)
    assert report.ok(1e-4), report


# ---------------------------------------------------------------- cmb

def test_cmb_zero_path_weights_is_identity():
    block = CMBBlock(4, seq_len=7, rng=np.random.default_rng(3), config=small_cfg())
    zero_params(block.path_conv)
    zero_params(block.path_pnm)
    x = RNG.standard_normal((4, 7))
    y = cmb_block(Tensor(x), block)
    assert np.max(np.abs(y.data - x)) < 1e-12


def test_cmb_shape_preserved():
    block = CMBBlock(5, seq_len=7, rng=np.random.default_rng(4), config=small_cfg())
    x = RNG.standard_normal((5, 7))
    assert cmb_block(Tensor(x), block).shape == (5, 7)


def test_cmb_rejects_wrong_length():
    block = CMBBlock(3, seq_len=6, rng=np.random.default_rng(4), config=small_cfg())
    with pytest.raises(DimensionError):
        cmb_block(Tensor(np.zeros((3, 9))), block)


def test_cmb_single_channel_closed_form():
    # with C=1 every scan inside the block runs exactly one step, so the
    # whole block composes in closed form
    L = 5
    block = CMBBlock(1, seq_len=L, rng=np.random.default_rng(6), config=small_cfg())
    x = RNG.standard_normal((1, L))
    got = cmb_block(Tensor(x), block).data

    def np_silu(v):
        return v / (1.0 + np.exp(-v))

    def np_sigmoid(v):
        return 1.0 / (1.0 + np.exp(-v))

    xt = x.T                                             # (L, 1)
    # path conv: k=1 depthwise over the singleton channel axis
    pc = block.path_conv
    path_in = pc.kernel.data[:, :1] * xt + pc.bias.data[:, None]
    # inner pnm, scan axis length 1
    pnm = block.path_pnm
    E = pnm.inner
    xz = pnm.in_proj.W.data @ path_in + pnm.in_proj.b.data[:, None]
    xi, gate = xz[:E], xz[E:]
    cv = pnm.conv
    xi = np_silu(cv.kernel.data[:, :1] * xi + cv.bias.data[:, None])
    ssm = pnm.ssm
    delta = np.log1p(np.exp(ssm.dt_proj.W.data @ xi + ssm.dt_proj.b.data[:, None]))
    Bm = ssm.B_proj.W.data @ xi                          # (N, 1)
    Cm = ssm.C_proj.W.data @ xi
    A = -np.exp(ssm.A_log.data)                          # (E, N)
    z = delta * A                                        # one step per head
    phi = np.where(np.abs(z) < 1e-8, 1.0 + 0.5 * z, np.expm1(z) / np.where(z == 0, 1, z))
    state = phi * delta * Bm[None, :, 0] * xi            # (E, N)
    y_ssm = (state * Cm[None, :, 0]).sum(axis=1, keepdims=True) + ssm.D.data[:, None] * xi
    y_in = y_ssm * np_silu(gate)
    y_out = pnm.out_proj.W.data @ y_in + pnm.out_proj.b.data[:, None]
    rms = np.sqrt((y_out * y_out).mean(axis=0) + pnm.norm.eps)
    path = (y_out / rms) * pnm.norm.gain.data[:, None]
    gc = block.gate_conv
    g = np_sigmoid(gc.kernel.data[:, :1] * xt + gc.bias.data[:, None])
    expected = (xt + g * path).T
    assert np.max(np.abs(got - expected)) < 1e-10


def test_cmb_gradients_match_finite_differences():
    block = CMBBlock(3, seq_len=6, rng=np.random.default_rng(14), config=small_cfg(d_state=2))
    x = Tensor(RNG.standard_normal((1, 3, 6)), requires_grad=True)
    params = [("x", x)] + list(block.named_parameters())

    def loss():
        return (block(x) ** 2.0).sum()

    report = finite_difference_check(loss, params)
    assert report.ok(1e-4), report


# ---------------------------------------------------------------- smm

def test_smm_depth_one_zero_weights_is_identity():
    stack = SMM(3, seq_len=8, rng=np.random.default_rng(7), depth=1, config=small_cfg())
    bam, cmbb = stack.layers
    for branch in (bam.fwd_conv, bam.fwd_pnm, bam.fwd_att,
                   bam.bwd_conv, bam.bwd_pnm, bam.bwd_att):
        zero_params(branch)
    zero_params(cmbb.path_conv)
    zero_params(cmbb.path_pnm)
    x = RNG.standard_normal((3, 8))
    y = smm(Tensor(x), stack)
    assert np.max(np.abs(y.data - x)) < 1e-10


def test_smm_equals_manual_composition():
    stack = SMM(3, seq_len=8, rng=np.random.default_rng(17), depth=2, config=small_cfg())
    x = RNG.standard_normal((1, 3, 8))
    y = stack(Tensor(x)).data
    h = Tensor(x)
    for layer in stack.layers:
        h = layer(h)
    np.testing.assert_array_equal(y, h.data)


def test_smm_depth_changes_layer_count():
    cfg = small_cfg()
    s1 = SMM(2, 6, np.random.default_rng(0), depth=1, config=cfg)
    s3 = SMM(2, 6, np.random.default_rng(0), depth=3, config=cfg)
    assert len(s3.layers) == 3 * len(s1.layers)
    with pytest.raises(DomainError):
        SMM(2, 6, np.random.default_rng(0), depth=0, config=cfg)


ABLATIONS = [
    dict(direction="bidirectional", temporal_attention=True, channel_module="cmb"),
    dict(direction="forward", temporal_attention=True, channel_module="cmb"),
    dict(direction="backward", temporal_attention=True, channel_module="cmb"),
    dict(direction="bidirectional", temporal_attention=False, channel_module="cmb"),
    dict(direction="forward", temporal_attention=True, channel_module="none"),
    dict(direction="backward", temporal_attention=True, channel_module="none"),
    dict(direction="bidirectional", temporal_attention=True, channel_module="none"),
    dict(direction="bidirectional", temporal_attention=True, channel_module="channel_attention"),
]


@pytest.mark.parametrize("axes", ABLATIONS)
def test_smm_ablation_configs_construct_and_run(axes):
    cfg = small_cfg(**axes)
    stack = SMM(3, seq_len=8, rng=np.random.default_rng(23), depth=1, config=cfg)
    x = RNG.standard_normal((2, 3, 8))
    y = stack(Tensor(x))
    assert y.shape == (2, 3, 8)
    assert np.all(np.isfinite(y.data))


def test_smm_shared_attention_scope_runs():
    cfg = small_cfg(attention_scope="shared")
    stack = SMM(2, seq_len=8, rng=np.random.default_rng(2), depth=1, config=cfg)
    bam = stack.layers[0]
    assert bam.shared_att is not None and bam.fwd_att is None
    y = stack(Tensor(RNG.standard_normal((2, 8))[None]))
    assert y.shape == (1, 2, 8)


def test_channel_attention_gates_channels_uniformly_over_time():
    mod = ChannelAttention(4, np.random.default_rng(3))
    x = RNG.standard_normal((1, 4, 10))
    y = mod(Tensor(x)).data
    ratio = y / x
    np.testing.assert_allclose(ratio.std(axis=-1), 0.0, atol=1e-12)
    assert np.all(ratio > 0) and np.all(ratio < 1)


def test_block_config_rejects_unknown_values():
    with pytest.raises(DomainError):
        BlockConfig(direction="sideways")
    with pytest.raises(DomainError):
        BlockConfig(channel_module="fft")
