import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from specsar.autodiff.tensor import Tensor, concat, count_macs, matmul, no_grad, split
from specsar.errors import ContractError, DimensionError


def test_identity_matmul_returns_input(rng):
    x = Tensor(rng.normal(size=(2, 3)))
    assert np.array_equal(matmul(Tensor(np.eye(2)), x).data, x.data)


def test_matmul_hand_example():
    out = matmul(Tensor([[1.0, 2.0], [3.0, 4.0]]), Tensor([[1.0], [1.0]]))
    assert out.data.tolist() == [[3.0], [7.0]]


def test_matmul_backward_is_b_transpose(rng):
    a = Tensor(rng.normal(size=(3, 4)), requires_grad=True)
    b = Tensor(rng.normal(size=(4, 2)))
    matmul(a, b).sum().backward()
    np.testing.assert_allclose(a.grad, np.broadcast_to(b.data.sum(axis=1), (3, 4)))


def test_matmul_shape_mismatch_names_both_shapes():
    with pytest.raises(DimensionError, match=r"\(2, 3\).*\(4, 5\)"):
        matmul(Tensor(np.zeros((2, 3))), Tensor(np.zeros((4, 5))))


def test_sum_grad_is_ones(rng):
    x = Tensor(rng.normal(size=(3, 5)), requires_grad=True)
    x.sum().backward()
    assert np.array_equal(x.grad, np.ones((3, 5)))


def test_square_grad_is_2x(rng):
    x = Tensor(rng.normal(size=(4,)), requires_grad=True)
    (x * x).sum().backward()
    np.testing.assert_allclose(x.grad, 2 * x.data)


def test_grads_accumulate_over_reused_nodes(rng):
    x = Tensor(rng.normal(size=(3,)), requires_grad=True)
    y = x * 2.0
    (y + y + x).sum().backward()
    np.testing.assert_allclose(x.grad, np.full(3, 5.0))


def test_broadcast_grad_is_reduced(rng):
    a = Tensor(rng.normal(size=(2, 3)), requires_grad=True)
    b = Tensor(rng.normal(size=(3,)), requires_grad=True)
    (a * b).sum().backward()
    np.testing.assert_allclose(b.grad, a.data.sum(axis=0))


def test_backward_from_non_scalar_is_contract_error(rng):
    x = Tensor(rng.normal(size=(3,)), requires_grad=True)
    with pytest.raises(ContractError):
        (x * 2.0).backward()


def test_no_grad_records_nothing(rng):
    x = Tensor(rng.normal(size=(3,)), requires_grad=True)
    with no_grad():
        y = (x * x).sum()
    assert not y.requires_grad


def test_count_macs_tallies_matmul():
    with count_macs() as tally:
        matmul(Tensor(np.zeros((2, 3, 4))), Tensor(np.zeros((4, 5))))
    assert tally[0] == 2 * 3 * 4 * 5


def test_split_rejects_bad_partition():
    with pytest.raises(DimensionError):
        split(Tensor(np.zeros((2, 5))), [2, 2], axis=1)


def test_dtype_is_preserved_and_ints_promoted():
    assert Tensor(np.zeros(2, dtype=np.float32)).dtype == np.float32
    assert Tensor([1, 2]).dtype == np.float64


@settings(max_examples=40, deadline=None)
@given(hnp.arrays(np.float64, hnp.array_shapes(min_dims=2, max_dims=3, min_side=1, max_side=5),
                  elements=st.floats(-10, 10)),
       st.data())
def test_split_of_concat_round_trips(a, data):
    b = data.draw(hnp.arrays(np.float64, a.shape, elements=st.floats(-10, 10)))
    parts = split(concat([Tensor(a), Tensor(b)], axis=-1), [a.shape[-1], b.shape[-1]], axis=-1)
    assert np.array_equal(parts[0].data, a) and np.array_equal(parts[1].data, b)
