import numpy as np
import pytest

from ahstgnn import autodiff as ad
from ahstgnn.autodiff import Tensor, gradcheck
from ahstgnn.errors import DimensionError
from ahstgnn.temporal import gated_tcn, init_gated_tcn, init_tcm, tcm_forward


def rand(rng, *shape, grad=False):
    return Tensor(rng.standard_normal(shape), requires_grad=grad)


def test_zero_filter_annihilates():
    rng = np.random.default_rng(0)
    p = init_gated_tcn(rng, 2, 3)
    p.W_t1.data[:] = 0.0
    out = gated_tcn(rand(rng, 2, 4, 3, 2), p)
    np.testing.assert_array_equal(out.data, 0.0)


def test_saturated_gate_passes_tanh_branch():
    rng = np.random.default_rng(1)
    p = init_gated_tcn(rng, 2, 3, dilation=2)
    p.W_t2.data[:] = 0.0
    p.b_t2.data[:] = 40.0
    x = rand(rng, 1, 5, 3, 2)
    expected = np.tanh(ad.dilated_causal_conv1d(x, p.W_t1, 2).data + p.b_t1.data)
    np.testing.assert_allclose(gated_tcn(x, p).data, expected, atol=1e-15)


def test_channel_mismatch():
    p = init_gated_tcn(np.random.default_rng(0), 2, 3)
    with pytest.raises(DimensionError):
        gated_tcn(Tensor(np.zeros((1, 4, 3, 5))), p)


@pytest.mark.parametrize("seed", range(3))
@pytest.mark.parametrize("dilation", [1, 2])
def test_gated_tcn_gradient(seed, dilation):
    rng = np.random.default_rng(seed)
    p = init_gated_tcn(rng, 2, 3, dilation=dilation)
    x = rand(rng, 2, 4, 3, 2, grad=True)
    errs = gradcheck(lambda: ad.sum(gated_tcn(x, p) * 1.3), [x, *p.named().values()])
    assert max(errs.values()) <= 1e-4


def test_tcm_zero_inputs_zero_output():
    p = init_tcm(np.random.default_rng(0), 1, 4)
    z = Tensor(np.zeros((2, 5, 3, 1)))
    H_T, *_ = tcm_forward(z, z, z, p)
    np.testing.assert_array_equal(H_T.data, 0.0)


def test_tcm_shapes():
    rng = np.random.default_rng(0)
    p = init_tcm(rng, 8, 8)
    x = rand(rng, 2, 12, 5, 8)
    outs = tcm_forward(x, x, x, p)
    assert [o.shape for o in outs] == [(2, 12, 5, 8)] * 4


def test_tcm_selector_weights_recover_recent_branch():
    rng = np.random.default_rng(3)
    D = 4
    p = init_tcm(rng, 2, D)
    p.W_mlp.data = np.vstack([np.eye(D), np.zeros((2 * D, D))])
    p.b_mlp.data[:] = 0.0
    # tanh * sigmoid is nonnegative when the filter branch is, so ReLU is inert
    p.recent.W_t1.data = np.abs(p.recent.W_t1.data)
    p.recent.b_t1.data[:] = 0.1
    x = Tensor(np.abs(rng.standard_normal((2, 5, 3, 2))))
    H_T, r, _, _ = tcm_forward(x, rand(rng, 2, 5, 3, 2), rand(rng, 2, 5, 3, 2), p)
    np.testing.assert_array_equal(H_T.data, r.data)


def test_tcm_gradient_and_all_params_touched():
    rng = np.random.default_rng(4)
    p = init_tcm(rng, 2, 3, dilation=2)
    xs = [rand(rng, 1, 4, 3, 2, grad=True) for _ in range(3)]
    w = rng.standard_normal((1, 4, 3, 3))

    def loss():
        H_T, r, d, wk = tcm_forward(*xs, p)
        return ad.sum(H_T * w) + ad.sum(r * d * wk)

    errs = gradcheck(loss, xs + list(p.named().values()))
    assert max(errs.values()) <= 1e-4
    loss().backward()
    for name, t in p.named().items():
        assert t.grad is not None and np.abs(t.grad).max() > 0, name


def test_tcm_causal_and_length_preserving():
    rng = np.random.default_rng(5)
    p = init_tcm(rng, 1, 3, dilation=2)
    x = rng.standard_normal((1, 6, 2, 1))
    y = x.copy()
    y[:, 4:] += 10.0
    a = tcm_forward(Tensor(x), Tensor(x), Tensor(x), p)[0].data
    b = tcm_forward(Tensor(y), Tensor(y), Tensor(y), p)[0].data
    assert a.shape[1] == 6
    np.testing.assert_array_equal(a[:, :4], b[:, :4])
