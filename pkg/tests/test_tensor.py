import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from app.autodiff.tensor import Tensor, backward, get_dtype, matmul, precision, unbroadcast
from app.errors import ContractError, NonFiniteError, ShapeError


def test_default_dtype_is_float32():
    assert Tensor([1.0, 2.0]).data.dtype == np.float32


def test_precision_context_switches_and_restores():
    with precision(np.float64):
        assert get_dtype() is np.float64
        assert Tensor([1.0]).data.dtype == np.float64
    assert get_dtype() is np.float32


def test_add_broadcast_gradient():
    a = Tensor(np.ones((2, 3)), requires_grad=True)
    b = Tensor(np.ones(3), requires_grad=True)
    (a + b).sum().backward()
    np.testing.assert_allclose(a.grad, np.ones((2, 3)))
    np.testing.assert_allclose(b.grad, np.full(3, 2.0))


def test_mul_and_div_gradients():
    a = Tensor([2.0, 3.0], requires_grad=True)
    b = Tensor([4.0, 5.0], requires_grad=True)
    (a * b / b * b).sum().backward()
    np.testing.assert_allclose(a.grad, [4.0, 5.0], rtol=1e-5)
    np.testing.assert_allclose(b.grad, [2.0, 3.0], rtol=1e-5)


def test_matmul_gradient_matches_transpose_rule():
    rng = np.random.default_rng(0)
    x, y = rng.normal(size=(3, 4)), rng.normal(size=(4, 2))
    with precision(np.float64):
        a = Tensor(x, requires_grad=True)
        b = Tensor(y, requires_grad=True)
        matmul(a, b).sum().backward()
    g = np.ones((3, 2))
    np.testing.assert_allclose(a.grad, g @ y.T)
    np.testing.assert_allclose(b.grad, x.T @ g)


def test_matmul_shape_mismatch():
    with pytest.raises(ShapeError):
        Tensor(np.ones((2, 3))) @ Tensor(np.ones((2, 3)))


def test_batched_matmul_with_2d_operand_sums_batch():
    with precision(np.float64):
        a = Tensor(np.ones((5, 2, 3)), requires_grad=True)
        w = Tensor(np.ones((3, 4)), requires_grad=True)
        (a @ w).sum().backward()
    np.testing.assert_allclose(w.grad, np.full((3, 4), 10.0))


def test_gradients_accumulate_across_backward_calls():
    x = Tensor([1.0, 2.0], requires_grad=True)
    (x * 2.0).sum().backward()
    (x * 3.0).sum().backward()
    np.testing.assert_allclose(x.grad, [5.0, 5.0])


def test_shared_node_gradient_is_summed():
    x = Tensor([3.0], requires_grad=True)
    y = x * x
    (y + y).sum().backward()
    np.testing.assert_allclose(x.grad, [12.0])


def test_detach_blocks_gradient():
    x = Tensor([1.0, 2.0], requires_grad=True)
    y = x.detach() * x
    y.sum().backward()
    np.testing.assert_allclose(x.grad, [1.0, 2.0])


def test_zero_grad_sets_zeros():
    x = Tensor([1.0], requires_grad=True)
    (x * 2.0).sum().backward()
    x.zero_grad()
    np.testing.assert_array_equal(x.grad, [0.0])


def test_unreached_leaf_keeps_zero_gradient():
    p = Tensor([1.0, 2.0], requires_grad=True)
    x = Tensor([3.0], requires_grad=True)
    backward((x * x).sum())
    assert p.grad is None
    p.zero_grad()
    backward((x * 2.0).sum())
    np.testing.assert_array_equal(p.grad, [0.0, 0.0])


def test_backward_requires_scalar():
    x = Tensor([1.0, 2.0], requires_grad=True)
    with pytest.raises(ContractError):
        backward(x * 2.0)


def test_non_finite_forward_raises():
    x = Tensor([0.0], requires_grad=True)
    with pytest.raises(NonFiniteError):
        x.log()


def test_reshape_invalid():
    with pytest.raises(ShapeError):
        Tensor(np.ones(6)).reshape(4, 2)


def test_getitem_with_repeated_index_accumulates():
    x = Tensor([1.0, 2.0, 3.0], requires_grad=True)
    x[np.array([0, 0, 2])].sum().backward()
    np.testing.assert_allclose(x.grad, [2.0, 0.0, 1.0])


def test_transpose_gradient_inverts_axes():
    x = Tensor(np.arange(24.0).reshape(2, 3, 4), requires_grad=True)
    w = Tensor(np.arange(24.0).reshape(4, 2, 3))
    (x.transpose(2, 0, 1) * w).sum().backward()
    np.testing.assert_allclose(x.grad, w.data.transpose(1, 2, 0))


def test_item_requires_single_element():
    with pytest.raises(ContractError):
        Tensor([1.0, 2.0]).item()


def test_deep_chain_does_not_recurse():
    x = Tensor([1.0], requires_grad=True)
    y = x
    for _ in range(5000):
        y = y + 0.0
    y.sum().backward()
    np.testing.assert_allclose(x.grad, [1.0])


@settings(max_examples=50, deadline=None)
@given(
    st.lists(st.integers(1, 3), min_size=1, max_size=3),
    st.integers(0, 2),
)
def test_unbroadcast_restores_shape(shape, extra):
    shape = tuple(shape)
    target = tuple([2] * extra) + tuple(s if s != 1 else 3 for s in shape)
    g = np.ones(target)
    out = unbroadcast(g, shape)
    assert out.shape == shape
    assert out.sum() == pytest.approx(g.sum())
