import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ahstgnn import autodiff as ad
from ahstgnn.autodiff import Tensor, gradcheck
from ahstgnn.errors import ContractError, DimensionError

TOL = 1e-4


def leaf(rng, *shape):
    return Tensor(rng.standard_normal(shape), requires_grad=True)


# ---------------------------------------------------------------- matmul


def test_matmul_identity():
    a = Tensor([[1.0, 2.0], [3.0, 4.0]])
    np.testing.assert_array_equal((a @ Tensor(np.eye(2))).data, [[1, 2], [3, 4]])


def test_matmul_hand():
    assert (Tensor([[1.0, 2.0]]) @ Tensor([[3.0], [4.0]])).data.tolist() == [[11.0]]


def test_matmul_shape_error_names_both_shapes():
    with pytest.raises(DimensionError, match=r"\(2, 3\).*\(2, 2\)"):
        ad.matmul(Tensor(np.zeros((2, 3))), Tensor(np.zeros((2, 2))))


@pytest.mark.parametrize("seed", range(5))
def test_matmul_gradient(seed):
    rng = np.random.default_rng(seed)
    a, b = leaf(rng, 3, 4), leaf(rng, 4, 2)
    errs = gradcheck(lambda: ad.sum(a @ b), [a, b])
    assert max(errs.values()) <= 1e-6


@pytest.mark.parametrize(
    "sa,sb",
    [((2, 3, 4, 5), (5, 3)), ((4, 4), (2, 3, 4, 5)), ((2, 1, 3, 4), (5, 4, 2)), ((3, 4), (4, 2))],
)
def test_matmul_broadcast_paths_gradient(sa, sb):
    rng = np.random.default_rng(1)
    a, b = leaf(rng, *sa), leaf(rng, *sb)
    w = rng.standard_normal(np.broadcast_shapes(sa[:-2], sb[:-2]) + (sa[-2], sb[-1]))
    np.testing.assert_allclose((a @ b).data, a.data @ b.data, atol=1e-12)
    errs = gradcheck(lambda: ad.sum((a @ b) * w), [a, b])
    assert max(errs.values()) <= TOL


# ---------------------------------------------------------------- elementwise


def test_mul_zero():
    assert ad.elementwise("mul", Tensor([1.0, 2, 3]), Tensor([0.0, 0, 0])).data.tolist() == [0, 0, 0]


def test_add_broadcast():
    out = ad.elementwise("add", Tensor([[1.0], [2.0]]), Tensor([10.0, 20.0]))
    assert out.data.tolist() == [[11, 21], [12, 22]]


def test_sub_self_cancels():
    x = Tensor([1.0, -2.0, 3.5], requires_grad=True)
    out = ad.elementwise("sub", x, x)
    assert out.data.tolist() == [0, 0, 0]
    ad.backward(ad.sum(out))
    np.testing.assert_array_equal(x.grad, 0.0)


def test_broadcast_error():
    with pytest.raises(DimensionError):
        ad.add(Tensor(np.zeros((2, 3))), Tensor(np.zeros((4,))))


@pytest.mark.parametrize("op", ["add", "sub", "mul"])
def test_elementwise_broadcast_gradient(op):
    rng = np.random.default_rng(2)
    a, b = leaf(rng, 3, 1, 4), leaf(rng, 5, 1)
    w = rng.standard_normal((3, 5, 4))
    errs = gradcheck(lambda: ad.sum(ad.elementwise(op, a, b) * w), [a, b])
    assert max(errs.values()) <= TOL


# ---------------------------------------------------------------- activations


def test_activation_values():
    assert ad.activation("sigmoid", Tensor(0.0)).item() == 0.5
    assert ad.activation("relu", Tensor([-1.0, 2.0])).data.tolist() == [0, 2]
    assert ad.activation("leaky_relu", Tensor(-1.0)).item() == pytest.approx(-0.2, abs=1e-15)


def test_sigmoid_saturates_without_overflow():
    y = ad.sigmoid(Tensor([-1000.0, 1000.0])).data
    assert np.isfinite(y).all() and y[0] == 0.0 and y[1] == 1.0


@pytest.mark.parametrize("kind", ["sigmoid", "tanh", "relu", "leaky_relu", "elu"])
def test_activation_gradient(kind):
    rng = np.random.default_rng(3)
    x = leaf(rng, 4, 5)
    w = rng.standard_normal((4, 5))
    errs = gradcheck(lambda: ad.sum(ad.activation(kind, x) * w), [x])
    assert errs[0] <= TOL


# ---------------------------------------------------------------- softmax


def test_softmax_values():
    np.testing.assert_array_equal(ad.softmax(Tensor([0.0, 0.0])).data, [0.5, 0.5])
    e = np.e
    np.testing.assert_allclose(ad.softmax(Tensor([1.0, 0.0])).data, [e / (e + 1), 1 / (e + 1)], atol=1e-12)
    np.testing.assert_allclose(ad.softmax(Tensor([1.0, 0.0])).data, [0.7311, 0.2689], atol=1e-4)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 6), st.integers(1, 6))
def test_softmax_rows_normalised(seed, n, m):
    x = np.random.default_rng(seed).standard_normal((n, m)) * 20
    y = ad.softmax(Tensor(x), axis=-1).data
    assert (y > 0).all()
    np.testing.assert_allclose(y.sum(-1), 1.0, atol=1e-12)


def test_softmax_gradient():
    rng = np.random.default_rng(4)
    x = leaf(rng, 3, 5)
    w = rng.standard_normal((3, 5))
    assert gradcheck(lambda: ad.sum(ad.softmax(x, axis=0) * w), [x])[0] <= TOL


def test_masked_softmax_exact_zeros_and_gradient():
    rng = np.random.default_rng(5)
    x = leaf(rng, 4, 4)
    mask = rng.random((4, 4)) < 0.5
    np.fill_diagonal(mask, True)
    y = ad.masked_softmax(x, mask).data
    assert (y[~mask] == 0.0).all()
    np.testing.assert_allclose(y.sum(-1), 1.0, atol=1e-12)
    w = rng.standard_normal((4, 4))
    assert gradcheck(lambda: ad.sum(ad.masked_softmax(x, mask) * w), [x])[0] <= TOL


def test_masked_softmax_empty_row():
    with pytest.raises(ContractError):
        ad.masked_softmax(Tensor(np.zeros((2, 2))), np.array([[True, False], [False, False]]))


# ---------------------------------------------------------------- convolution


def test_conv_identity_kernel():
    rng = np.random.default_rng(6)
    x = Tensor(rng.standard_normal((2, 5, 3, 4)))
    kernel = Tensor(np.eye(4)[None])
    np.testing.assert_array_equal(ad.dilated_causal_conv1d(x, kernel, 1).data, x.data)


def test_conv_hand_example():
    x = Tensor(np.array([1.0, 2.0, 3.0]).reshape(1, 3, 1, 1))
    kernel = Tensor(np.ones((2, 1, 1)))
    assert ad.dilated_causal_conv1d(x, kernel, 1).data.reshape(-1).tolist() == [1, 3, 5]


def test_conv_channel_mismatch():
    with pytest.raises(DimensionError):
        ad.dilated_causal_conv1d(Tensor(np.zeros((1, 3, 2, 3))), Tensor(np.zeros((2, 2, 4))), 1)


@pytest.mark.parametrize("k,dilation", [(1, 1), (2, 1), (2, 2), (3, 2), (2, 8)])
def test_conv_causal_bitwise(k, dilation):
    rng = np.random.default_rng(7)
    x = rng.standard_normal((2, 10, 3, 2))
    kernel = Tensor(rng.standard_normal((k, 2, 3)))
    base = ad.dilated_causal_conv1d(Tensor(x), kernel, dilation).data
    for t in range(10):
        xp = x.copy()
        xp[:, t] += 1.0
        out = ad.dilated_causal_conv1d(Tensor(xp), kernel, dilation).data
        assert np.array_equal(out[:, :t], base[:, :t])
        assert out.shape == base.shape


@pytest.mark.parametrize("k,dilation", [(1, 1), (2, 1), (2, 2), (3, 2)])
def test_conv_gradient(k, dilation):
    rng = np.random.default_rng(8)
    x, kernel = leaf(rng, 2, 5, 3, 2), leaf(rng, k, 2, 3)
    w = rng.standard_normal((2, 5, 3, 3))
    errs = gradcheck(lambda: ad.sum(ad.dilated_causal_conv1d(x, kernel, dilation) * w), [x, kernel])
    assert max(errs.values()) <= TOL


# ---------------------------------------------------------------- shape ops


def test_reduce_concat_reshape():
    assert ad.reduce("sum", Tensor([[1.0, 2.0], [3.0, 4.0]]), 0).data.tolist() == [4, 6]
    assert ad.concat([Tensor([1.0]), Tensor([2.0]), Tensor([3.0])], axis=0).data.tolist() == [1, 2, 3]
    x = Tensor(np.arange(12.0).reshape(3, 4))
    np.testing.assert_array_equal(ad.reshape(ad.reshape(x, (2, 6)), (3, 4)).data, x.data)


def test_axis_out_of_range():
    with pytest.raises(DimensionError):
        ad.reduce("sum", Tensor(np.zeros((2, 2))), 2)
    with pytest.raises(DimensionError):
        ad.concat([Tensor(np.zeros(2))], axis=1)


def test_shape_op_gradients():
    rng = np.random.default_rng(9)
    a, b = leaf(rng, 2, 3), leaf(rng, 2, 2)
    w = rng.standard_normal((2, 5))
    errs = gradcheck(lambda: ad.sum(ad.concat([a, b], axis=1) * w), [a, b])
    assert max(errs.values()) <= TOL
    x = leaf(rng, 2, 3, 4)
    c = rng.standard_normal((4, 2, 3))
    assert gradcheck(lambda: ad.reduce("mean", ad.transpose(x, (2, 0, 1)) * c, (0, 2)).sum(), [x])[0] <= TOL
    v = Tensor(rng.standard_normal((4, 1)))
    assert gradcheck(lambda: ad.sum(ad.reshape(x, (6, 4)) @ v), [x])[0] <= TOL
    assert gradcheck(lambda: ad.sum(x[:, 1:, ::2] * x[:, 1:, ::2]), [x])[0] <= TOL


def test_mean_scales_gradient():
    x = Tensor(np.ones((2, 5)), requires_grad=True)
    ad.backward(ad.mean(x))
    np.testing.assert_allclose(x.grad, 0.1)


# ---------------------------------------------------------------- backward


def test_backward_quadratic():
    w = Tensor([1.0, 2.0], requires_grad=True)
    ad.backward(ad.sum(w * w))
    assert w.grad.tolist() == [2.0, 4.0]


def test_backward_loss_independent_of_leaf():
    w = Tensor([1.0, 2.0], requires_grad=True)
    v = Tensor([3.0], requires_grad=True)
    ad.backward(ad.sum(v * v) + ad.sum(w * 0.0))
    assert w.grad.tolist() == [0.0, 0.0]
    u = Tensor([1.0], requires_grad=True)
    ad.backward(ad.sum(v * v))
    assert u.grad is None  # unreachable leaves are left alone; the optimiser reads None as zero


def test_backward_accumulates():
    w = Tensor([1.0, 2.0], requires_grad=True)
    ad.backward(ad.sum(w * w))
    ad.backward(ad.sum(w * w))
    assert w.grad.tolist() == [4.0, 8.0]


def test_backward_requires_scalar():
    w = Tensor([1.0, 2.0], requires_grad=True)
    with pytest.raises(ContractError):
        ad.backward(w * w)


def test_backward_requires_recorded_graph():
    with pytest.raises(ContractError):
        ad.backward(ad.sum(Tensor([1.0])))


def test_no_grad_records_nothing():
    w = Tensor([1.0], requires_grad=True)
    with ad.no_grad():
        y = w * w
    assert not y.requires_grad


def test_shared_subexpression_gradient():
    rng = np.random.default_rng(10)
    x = leaf(rng, 3)
    def f():
        y = ad.tanh(x)
        return ad.sum(y * y + y)
    assert gradcheck(f, [x])[0] <= TOL


def test_determinism_bitwise():
    def run():
        rng = np.random.default_rng(11)
        a, b = leaf(rng, 5, 4), leaf(rng, 4, 3)
        loss = ad.sum(ad.tanh(a @ b) * ad.softmax(a @ b, axis=-1))
        ad.backward(loss)
        return loss.data.copy(), a.grad.copy(), b.grad.copy()
    r1, r2 = run(), run()
    for u, v in zip(r1, r2):
        assert np.array_equal(u, v)
