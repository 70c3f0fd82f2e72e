import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

import gradcheck
from compmotion import autodiff as ad
from compmotion.autodiff import Tensor


@pytest.mark.parametrize("name,fn,arrays", list(gradcheck.zoo(2, seed=11)), ids=lambda v: v if isinstance(v, str) else "")
def test_backward_matches_finite_differences(name, fn, arrays):
    a, _ = gradcheck.analytic(fn, arrays)
    n = gradcheck.numeric(fn, arrays)
    assert gradcheck.max_relative_error(a, n) < 1e-4


def test_zoo_covers_every_op():
    ops = set()
    for _, fn, arrays in gradcheck.zoo(1):
        ops |= gradcheck.analytic(fn, arrays)[1]
    assert gradcheck.ALL_OPS <= ops


small = hnp.arrays(np.float64, hnp.array_shapes(min_dims=1, max_dims=3, max_side=4),
                   elements=st.floats(-3, 3, allow_nan=False))


@settings(max_examples=60, deadline=None)
@given(small, st.data())
def test_broadcast_grad_shapes_and_values(x, data):
    # y broadcasts against x from a trailing-dims suffix, possibly with ones
    suffix = x.shape[data.draw(st.integers(0, x.ndim)):]
    yshape = tuple(1 if data.draw(st.booleans()) else d for d in suffix)
    y = data.draw(hnp.arrays(np.float64, yshape, elements=st.floats(-3, 3, allow_nan=False)))
    tx, ty = Tensor(x, requires_grad=True), Tensor(y, requires_grad=True)
    ad.backward((tx * ty + tx - ty).sum())
    assert tx.grad.shape == x.shape and ty.grad.shape == y.shape
    expect_x = np.broadcast_to(y, x.shape) + 1.0
    np.testing.assert_allclose(tx.grad, expect_x)
    expect_y = np.zeros(y.shape)
    lead = x.ndim - y.ndim
    for idx in np.ndindex(x.shape):
        target = tuple(0 if d == 1 else i for i, d in zip(idx[lead:], y.shape))
        expect_y[target] += x[idx] - 1.0
    np.testing.assert_allclose(ty.grad, expect_y, atol=1e-9)


def test_leaf_gradients_accumulate_across_backward_calls():
    w = Tensor(np.array([1.0, 2.0]), requires_grad=True)
    ad.backward((w * 3.0).sum())
    ad.backward((w * w).sum())
    np.testing.assert_array_equal(w.grad, [3.0 + 2.0, 3.0 + 4.0])


def test_shared_subexpression_gets_both_paths():
    x = Tensor(np.array(2.0), requires_grad=True)
    y = x * x
    ad.backward(y * y + y)  # x^4 + x^2
    assert x.grad == pytest.approx(4 * 8 + 2 * 2)


def test_second_backward_on_same_graph_is_stale():
    x = Tensor(np.ones(3), requires_grad=True)
    loss = (x * 2.0).sum()
    ad.backward(loss)
    with pytest.raises(ad.StaleTapeError):
        ad.backward(loss)


def test_retain_graph_allows_replay():
    x = Tensor(np.ones(3), requires_grad=True)
    loss = (x * 2.0).sum()
    ad.backward(loss, retain_graph=True)
    ad.backward(loss)
    np.testing.assert_array_equal(x.grad, [4.0, 4.0, 4.0])


def test_non_scalar_loss_rejected():
    x = Tensor(np.ones(3), requires_grad=True)
    with pytest.raises(ad.ShapeError):
        ad.backward(x * 2.0)


def test_shape_mismatch_is_reported():
    with pytest.raises(ad.ShapeError):
        Tensor(np.ones((2, 3))) + Tensor(np.ones((4,)))
    with pytest.raises(ad.ShapeError):
        Tensor(np.ones((2, 3))) @ Tensor(np.ones((2, 3)))


def test_no_grad_records_nothing():
    x = Tensor(np.ones(2), requires_grad=True)
    with ad.no_grad():
        y = (x * 2.0).sum()
        assert not ad.is_grad_enabled()
    assert ad.is_grad_enabled()
    assert not y.requires_grad and y._parents == ()


def test_grad_wrt_input_requires_input_on_tape():
    w = Tensor(np.ones(2), requires_grad=True)
    other = Tensor(np.ones(2), requires_grad=True)
    with pytest.raises(ad.AutodiffError):
        ad.grad_wrt_input((w * 2.0).sum(), other)


def test_grad_wrt_input_clears_stale_gradient():
    x = Tensor(np.array([1.0, -1.0]), requires_grad=True)
    x.grad = np.array([100.0, 100.0])
    g = ad.grad_wrt_input((x * x).sum(), x)
    np.testing.assert_array_equal(g, [2.0, -2.0])


def test_dropout_is_identity_in_eval_mode():
    x = Tensor(np.arange(6.0))
    assert ad.dropout(x, 0.5, None, training=False) is x
    assert ad.dropout(x, 0.0, np.random.default_rng(0), training=True) is x


def test_dropout_training_needs_rng_and_preserves_expectation():
    x = Tensor(np.ones(200_000))
    with pytest.raises(ValueError):
        ad.dropout(x, 0.3, None, training=True)
    y = ad.dropout(x, 0.3, np.random.default_rng(0), training=True).data
    assert set(np.unique(y)) <= {0.0, 1.0 / 0.7}
    assert y.mean() == pytest.approx(1.0, abs=0.01)


def test_sigmoid_and_bce_stay_finite_at_extreme_logits():
    z = Tensor(np.array([-800.0, 800.0, 0.0]), requires_grad=True)
    s = ad.sigmoid(z).data
    np.testing.assert_allclose(s, [0.0, 1.0, 0.5])
    loss = ad.bce_with_logits(z, np.array([1.0, 0.0, 1.0]))
    assert np.isfinite(loss.data)
    assert float(loss.data) == pytest.approx((800.0 + 800.0 + np.log(2.0)) / 3)
    ad.backward(loss)
    np.testing.assert_allclose(z.grad, [-1 / 3, 1 / 3, -0.5 / 3])


def test_softmax_rows_sum_to_one_under_large_offsets():
    x = Tensor(np.array([[1000.0, 1001.0, -1e9], [0.0, 0.0, 0.0]]))
    s = ad.softmax(x, axis=-1).data
    np.testing.assert_allclose(s.sum(axis=-1), 1.0)
    assert s[0, 2] == 0.0
