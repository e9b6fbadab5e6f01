import numpy as np
import pytest
from scipy.special import expit

from specsar.autodiff.nn import initialize, make_rng
from specsar.autodiff.tensor import Tensor, concat
from specsar.errors import DimensionError
from specsar.model.config import StageConfig
from specsar.model.encoder import OverlapPatchEmbed
from specsar.model.fusion import MutualModalAggregation, mmam_fuse, stage_transition


def test_zero_gates_halve_the_concat(rng):
    mm = MutualModalAggregation(6, 2, 2).to(np.float64)
    s, a = rng.normal(size=(2, 6, 3, 3)), rng.normal(size=(2, 2, 3, 3))
    out = mm(Tensor(s), Tensor(a)).data
    assert np.array_equal(out, 0.5 * np.concatenate([s, a], axis=1))


def test_hand_instance(rng):
    mm = MutualModalAggregation(3, 1, 2)
    initialize(mm, make_rng(5))
    mm.to(np.float64)
    s, a = rng.normal(size=(1, 3, 1, 1)), rng.normal(size=(1, 1, 1, 1))
    z = np.concatenate([s, a], axis=1).reshape(4)

    def mlp(g):
        from scipy.special import erf

        h = z @ g.squeeze.weight.data + g.squeeze.bias.data
        h = 0.5 * h * (1 + erf(h / np.sqrt(2)))
        return h @ g.expand.weight.data + g.expand.bias.data

    want = np.concatenate([s.reshape(3) * expit(mlp(mm.gate_spec)), a.reshape(1) * expit(mlp(mm.gate_sar))])
    np.testing.assert_allclose(mm(Tensor(s), Tensor(a)).data.reshape(4), want, rtol=1e-13)


def test_output_channels_and_plain_concat(rng):
    s, a = Tensor(rng.normal(size=(1, 12, 4, 4))), Tensor(rng.normal(size=(1, 4, 4, 4)))
    assert MutualModalAggregation(12, 4)(s, a).shape[1] == 16
    assert np.array_equal(mmam_fuse(s, a, None).data, concat([s, a], axis=1).data)


def test_spatial_mismatch():
    with pytest.raises(DimensionError):
        MutualModalAggregation(2, 2)(Tensor(np.zeros((1, 2, 4, 4))), Tensor(np.zeros((1, 2, 3, 4))))
    with pytest.raises(DimensionError):
        mmam_fuse(Tensor(np.zeros((1, 2, 4, 4))), Tensor(np.zeros((1, 2, 3, 4))), None)


def test_transition_split(rng):
    st = StageConfig(64, 1, 1, 1)
    assert (st.spec_channels, st.sar_channels) == (48, 16)
    merge = OverlapPatchEmbed(16, 64, stage=2)
    initialize(merge, make_rng(0))
    x = Tensor(rng.normal(size=(1, 16, 8, 8)).astype(np.float32))
    f = stage_transition(x, merge, st)
    assert f.spec.shape == (1, 48, 4, 4) and f.sar.shape == (1, 16, 4, 4)
    rejoined = np.concatenate([f.spec.data, f.sar.data], axis=1)
    assert np.array_equal(rejoined, merge(x).data)
