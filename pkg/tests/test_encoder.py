import numpy as np
import pytest

from specsar.autodiff.nn import initialize, make_rng
from specsar.autodiff.tensor import Tensor
from specsar.errors import ConfigError, DimensionError
from specsar.model.config import NetConfig, StageConfig
from specsar.model.encoder import (
    BranchFeatures,
    CrossAttention,
    EfficientSelfAttention,
    EncoderStage,
    MixFFN,
    OverlapPatchEmbed,
)
from specsar.model.network import build_network


def dense_attention(x, wq, bq, wk, bk, wv, bv, wo, bo, heads):
    """Loop-over-heads attention written independently of the tape."""
    b, n, c = x.shape
    d = c // heads
    q, k, v = x @ wq + bq, x @ wk + bk, x @ wv + bv
    out = np.zeros_like(q)
    for i in range(b):
        for h in range(heads):
            sl = slice(h * d, (h + 1) * d)
            s = q[i, :, sl] @ k[i, :, sl].T / np.sqrt(d)
            s = np.exp(s - s.max(axis=1, keepdims=True))
            out[i, :, sl] = (s / s.sum(axis=1, keepdims=True)) @ v[i, :, sl]
    return out @ wo + bo


def _f64(module, seed=0):
    initialize(module, make_rng(seed))
    return module.to(np.float64)


def _weights(lin):
    return lin.weight.data, lin.bias.data


@pytest.mark.parametrize("n,c,heads", [(4, 2, 1), (9, 6, 3), (16, 8, 2)])
def test_r1_attention_matches_dense_oracle(rng, n, c, heads):
    attn = _f64(EfficientSelfAttention(c, heads, 1))
    x = rng.normal(size=(2, n, c))
    want = dense_attention(x, *_weights(attn.q), *_weights(attn.k), *_weights(attn.v), *_weights(attn.proj), heads)
    np.testing.assert_allclose(attn(Tensor(x)).data, want, atol=1e-12, rtol=0)


def test_reduction_shortens_keys():
    attn = EfficientSelfAttention(8, 1, 4)
    assert attn.sr(Tensor(np.zeros((1, 4096, 8)))).shape == (1, 1024, 8)


def test_reduction_requires_divisible_length():
    attn = EfficientSelfAttention(8, 1, 4)
    with pytest.raises(ConfigError):
        attn(Tensor(np.zeros((1, 10, 8))))


def test_single_token_returns_projected_value(rng):
    attn = _f64(EfficientSelfAttention(4, 2, 1))
    x = rng.normal(size=(1, 1, 4))
    want = (x @ attn.v.weight.data + attn.v.bias.data) @ attn.proj.weight.data + attn.proj.bias.data
    np.testing.assert_allclose(attn(Tensor(x)).data, want, atol=1e-14)


def test_cross_attention_zero_value_is_identity(rng):
    ca = _f64(CrossAttention(6, 2, 2, 1))
    ca.v.weight.data[:] = 0
    ca.v.bias.data[:] = 0
    ca.proj.bias.data[:] = 0
    p = rng.normal(size=(2, 5, 6))
    assert np.array_equal(ca(Tensor(p), Tensor(rng.normal(size=(2, 5, 2)))).data, p)


def test_cross_attention_zero_aux_with_zero_biases(rng):
    ca = _f64(CrossAttention(4, 3, 1, 1))
    for lin in (ca.adjust, ca.k, ca.v, ca.proj):
        lin.bias.data[:] = 0
    p = rng.normal(size=(1, 4, 4))
    assert np.array_equal(ca(Tensor(p), Tensor(np.zeros((1, 4, 3)))).data, p)


def test_cross_attention_small_instance_oracle(rng):
    ca = _f64(CrossAttention(2, 2, 1, 1))
    p, a = rng.normal(size=(1, 4, 2)), rng.normal(size=(1, 4, 2))
    mu = p.mean(-1, keepdims=True)
    pn = (p - mu) / np.sqrt(p.var(-1, keepdims=True) + 1e-5) * ca.norm.weight.data + ca.norm.bias.data
    aux = a @ ca.adjust.weight.data + ca.adjust.bias.data
    q = pn @ ca.q.weight.data + ca.q.bias.data
    k = aux @ ca.k.weight.data + ca.k.bias.data
    v = aux @ ca.v.weight.data + ca.v.bias.data
    s = q[0] @ k[0].T / np.sqrt(2)
    w = np.exp(s) / np.exp(s).sum(1, keepdims=True)
    want = p + (w @ v[0]) @ ca.proj.weight.data + ca.proj.bias.data
    np.testing.assert_allclose(ca(Tensor(p), Tensor(a)).data, want, atol=1e-12)


def test_cross_attention_token_mismatch():
    with pytest.raises(DimensionError):
        CrossAttention(4, 2, 1)(Tensor(np.zeros((1, 4, 4))), Tensor(np.zeros((1, 5, 2))))


def test_mix_ffn_zero_projections_is_identity(rng):
    ffn = _f64(MixFFN(4, 4))
    for lin in (ffn.fc1, ffn.fc2):
        lin.weight.data[:] = 0
        lin.bias.data[:] = 0
    x = rng.normal(size=(1, 12, 4))
    assert np.array_equal(ffn(Tensor(x), 3, 4).data, x)


def test_mix_ffn_hidden_width_and_params():
    ffn = MixFFN(8, 4)
    assert ffn.hidden == 32
    assert ffn.num_parameters() == 2 * 8 + (8 * 32 + 32) + (32 * 9 + 32) + (32 * 8 + 8)


def test_zero_depth_stage_is_identity(rng):
    stage = EncoderStage(StageConfig(16, 0, 1, 1))
    f = BranchFeatures(Tensor(rng.normal(size=(1, 12, 4, 4))), Tensor(rng.normal(size=(1, 4, 4, 4))))
    out = stage(f)
    assert np.array_equal(out.spec.data, f.spec.data) and np.array_equal(out.sar.data, f.sar.data)


def test_patch_embed_zero_kernel_gives_constant_tokens():
    emb = OverlapPatchEmbed(10, 8, stage=1)
    out = emb(Tensor(np.full((1, 10, 32, 32), 2.0, dtype=np.float32)))
    assert out.shape == (1, 8, 8, 8) and not out.data.any()


def test_stage_shapes_through_64_input():
    net = build_network(NetConfig.desk(), seed=0)
    x = make_rng(0).random((1, 10, 64, 64)).astype(np.float32)
    y = make_rng(1).random((1, 2, 64, 64)).astype(np.float32)
    assert net.stage_sizes(64, 64) == [(16, 16), (8, 8), (4, 4), (2, 2)]
    pyramid = net.features(Tensor(x), Tensor(y))
    assert [f.shape[1] for f in pyramid] == [16, 32, 48, 64]
    assert [(s.spec_channels, s.sar_channels) for s in net.cfg.stages] == [(12, 4), (24, 8), (36, 12), (48, 16)]
    assert [f.shape[2] for f in pyramid] == [16, 8, 4, 2]


def test_without_cross_attention_branches_are_independent(rng):
    stage = EncoderStage(StageConfig(16, 1, 1, 1), cross_attention=False)
    initialize(stage, make_rng(0))
    stage.to(np.float64)
    spec = Tensor(rng.normal(size=(1, 12, 4, 4)))
    a = stage(BranchFeatures(spec, Tensor(rng.normal(size=(1, 4, 4, 4))))).spec.data
    b = stage(BranchFeatures(spec, Tensor(rng.normal(size=(1, 4, 4, 4))))).spec.data
    assert np.array_equal(a, b)
