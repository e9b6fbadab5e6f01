import numpy as np
import pytest

from specsar.autodiff.tensor import Tensor
from specsar.data.patchio import read_manifest
from specsar.data.synth import make_patch
from specsar.errors import NumericalError
from specsar.metrics import metrics
from specsar.model import NetConfig, build_network
from specsar.training import TrainSettings, augment, evaluate, reference_mode, stack_batch, synthesize, train_model


@pytest.fixture(scope="module")
def samples():
    return [make_patch(s, 32) for s in range(2)]


def test_zero_lr_keeps_initial_weights(samples):
    net = build_network(NetConfig.desk(), seed=0)
    before = {k: v.copy() for k, v in net.state_dict().items()}
    train_model(net, samples, TrainSettings(lr=0.0, steps=2, batch_size=2))
    after = net.state_dict()
    assert all(np.array_equal(before[k], after[k]) for k in before)


def test_augment_keeps_alignment(rng, samples):
    s = samples[0]
    spec, sar, lab = augment(s.spec, s.sar, s.labels, rng)
    for c in range(9):
        mask = lab == c
        if mask.any():
            assert np.allclose(spec[:, mask].mean(axis=1), s.spec[:, s.labels == c].mean(axis=1), atol=1e-5)


def test_nan_loss_raises(samples):
    net = build_network(NetConfig.desk(), seed=0)
    net.decoder.classify.bias.data[:] = np.nan
    with pytest.raises(NumericalError):
        train_model(net, samples, TrainSettings(steps=1, batch_size=2))


def test_same_seed_same_losses(samples):
    runs = []
    for _ in range(2):
        net = build_network(NetConfig.desk(), seed=4)
        with reference_mode():
            runs.append([r.line() for r in train_model(net, samples, TrainSettings(steps=3, batch_size=1, seed=4))])
    assert runs[0] == runs[1]


def test_perfect_oracle_evaluates_to_one(samples):
    class Oracle:
        def parameters(self):
            return [Tensor(np.zeros(1, np.float32))]

        def __call__(self, spec, sar):
            onehot = np.eye(9)[self.labels]  # full-resolution logits
            return Tensor(np.moveaxis(onehot, -1, 1))

    oracle = Oracle()
    _, _, oracle.labels = stack_batch(samples)
    cm = evaluate(oracle, samples)
    m = metrics(cm)
    assert m["miou"] == m["oa"] == m["f1"] == 1.0


def test_synthesize_skips_discarded(tmp_path):
    rep = synthesize(tmp_path, 6, seed=0, size=16, coverage=0.5)
    listed = read_manifest(tmp_path / "manifest.txt")
    assert len(listed) == len(rep.paths) == 6 - len(rep.discarded)
    assert rep.discarded
