import numpy as np
import pytest

from specsar.autodiff.nn import make_rng
from specsar.data.synth import (
    SPECKLE_LOOKS,
    SarTimeSeries,
    World,
    composite_sar,
    generate_scene,
    make_patch,
    speckle,
)
from specsar.errors import ConfigError


def test_regeneration_is_bit_identical():
    assert make_patch(42, 32) == make_patch(42, 32)


def test_different_seeds_differ():
    assert make_patch(1, 32) != make_patch(2, 32)


def test_one_class_gives_uniform_labels():
    sample, _ = generate_scene(5, 32, n_classes=1)
    assert not sample.labels.any()


def test_class_means_recoverable():
    world = World.from_seed(0)
    sums = np.zeros((9, 10))
    counts = np.zeros(9)
    for seed in range(12):
        s, _ = generate_scene(seed, 64, world=world)
        for c in range(9):
            mask = s.labels == c
            counts[c] += mask.sum()
            sums[c] += s.spec[:, mask].sum(axis=1)
    for c in np.flatnonzero(counts > 100):
        tol = 3 * 0.05 / np.sqrt(counts[c])
        np.testing.assert_array_less(np.abs(sums[c] / counts[c] - world.spectra[c]), tol + 1e-6)


def test_single_observation_passes_through():
    obs = np.full((2, 4, 4), 0.3, dtype=np.float32)
    assert np.array_equal(composite_sar(SarTimeSeries([obs], [10])), obs)


def test_empty_window_is_absent():
    assert composite_sar(SarTimeSeries([], [])) is None
    obs = np.ones((2, 4, 4), dtype=np.float32)
    assert composite_sar(SarTimeSeries([obs], [170]), window_days=100) is None


def test_composite_is_order_invariant(rng):
    obs = [rng.random((2, 8, 8)).astype(np.float32) for _ in range(5)]
    a = composite_sar(SarTimeSeries(obs, [0] * 5))
    b = composite_sar(SarTimeSeries(obs[::-1], [0] * 5))
    assert np.array_equal(a, b)


def test_speckle_statistics(rng):
    x = speckle(rng, (200_000,))
    assert abs(x.mean() - 1) < 0.01 and abs(x.var() - 1 / SPECKLE_LOOKS) < 0.01


def test_zero_coverage_discards_every_patch():
    assert all(make_patch(s, 32, coverage=0.0) is None for s in range(5))


def test_day_offsets_validated():
    with pytest.raises(ConfigError):
        SarTimeSeries([np.zeros((2, 2, 2))], [200])


def test_tiny_scene_rejected():
    with pytest.raises(ConfigError):
        generate_scene(0, 8)
