import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from specsar.autodiff.tensor import Tensor
from specsar.errors import DimensionError
from specsar.model.config import NetConfig
from specsar.model.decoder import AllMLPDecoder, logits_to_labels, resize_nearest
from specsar.model.network import build_network


def test_zero_weights_give_uniform_softmax():
    net = build_network(NetConfig.desk(), init=False)
    for p in net.parameters():
        p.data[:] = 0
    logits = net(Tensor(np.random.default_rng(0).random((1, 10, 32, 32))), Tensor(np.ones((1, 2, 32, 32))))
    assert not logits.data.any()
    e = np.exp(logits.data)
    np.testing.assert_allclose(e / e.sum(axis=1, keepdims=True), 1 / 9)


def test_logit_shape_is_quarter_resolution():
    net = build_network(NetConfig.desk(), seed=0)
    out = net(Tensor(np.zeros((2, 10, 64, 64), np.float32)), Tensor(np.zeros((2, 2, 64, 64), np.float32)))
    assert out.shape == (2, 9, 16, 16)


def test_decoder_checks_pyramid():
    dec = AllMLPDecoder([4, 8], 8, 3)
    with pytest.raises(DimensionError):
        dec([Tensor(np.zeros((1, 4, 8, 8)))])
    with pytest.raises(DimensionError):
        dec([Tensor(np.zeros((1, 4, 8, 8))), Tensor(np.zeros((1, 8, 3, 3)))])


def test_one_hot_logits():
    logits = np.zeros((1, 9, 2, 2))
    logits[0, 7] = 5.0
    assert (logits_to_labels(logits) == 7).all()


def test_tie_goes_to_lower_index():
    logits = np.zeros((1, 9, 1, 1))
    logits[0, [3, 5]] = 1.0
    assert logits_to_labels(logits)[0, 0, 0] == 3


@settings(max_examples=30, deadline=None)
@given(hnp.arrays(np.float64, (2, 4, 3, 3), elements=st.integers(-3, 3).map(float)))
def test_argmax_matches_scan(logits):
    got = logits_to_labels(logits)
    for b in range(2):
        for i in range(3):
            for j in range(3):
                best = 0
                for k in range(1, 4):
                    if logits[b, k, i, j] > logits[b, best, i, j]:
                        best = k
                assert got[b, i, j] == best


def test_nearest_upsample_replicates_blocks(rng):
    lab = rng.integers(0, 9, size=(4, 4))
    up = resize_nearest(lab, 16, 16)
    assert np.array_equal(up, np.kron(lab, np.ones((4, 4), dtype=lab.dtype)))
