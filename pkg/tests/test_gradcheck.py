import numpy as np
import pytest

from specsar.autodiff.gradcheck import TOLERANCE, check_gradients, relative_error
from specsar.autodiff.tensor import Tensor
from specsar.gradsuite import all_cases, run_suite


def test_relative_error_floor():
    assert relative_error(np.array([1e-9]), np.array([0.0]))[0] == pytest.approx(1e-3)


def test_detects_a_wrong_backward(rng):
    x = Tensor(rng.normal(size=4), requires_grad=True, dtype=np.float64)

    def bad():
        out = Tensor._make(x.data ** 2, [x], lambda g: [g * x.data], "bad_square")
        return out.sum()

    assert not check_gradients(bad, [x]).passed


def test_every_op_case_has_three_shapes():
    names = [c.name.split("[")[0] for c in all_cases(include_network=False)]
    for op in ("exp", "log", "matmul", "conv2d", "layer_norm", "softmax", "bilinear_upsample", "attend"):
        assert names.count(op) >= 3, op


def test_op_suite_passes():
    results = run_suite(include_network=False)
    worst = max(results, key=lambda r: r.max_rel_error)
    assert all(r.passed for r in results), f"{worst.name}: {worst.max_rel_error}"
    assert worst.max_rel_error < TOLERANCE
