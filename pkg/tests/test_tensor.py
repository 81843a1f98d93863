import numpy as np
import pytest

from app.errors import AttentionMaskError, DomixError, ShapeError
from app.tensor import Tensor, backward, grad_scaling, no_grad, ops
from app.tensor.gradcheck import check_gradients, relative_error


def leaf(rng, *shape):
    return Tensor(rng.normal(size=shape), requires_grad=True)


def test_add_and_mul_gradients():
    a = Tensor(np.array([1.0, 2.0, 3.0]), requires_grad=True)
    b = Tensor(np.array([4.0, 5.0, 6.0]), requires_grad=True)
    loss = ops.sum(ops.mul(ops.add(a, b), a))
    backward(loss)
    # d/da (a + b) a = 2a + b, d/db = a
    assert np.allclose(a.grad, [6.0, 9.0, 12.0])
    assert np.allclose(b.grad, [1.0, 2.0, 3.0])


def test_shared_subexpression_accumulates():
    x = Tensor(np.array(3.0), requires_grad=True)
    y = ops.mul(x, x)
    loss = ops.add(y, y)
    backward(loss)
    assert x.grad == pytest.approx(12.0)


def test_leaf_gradients_accumulate_across_calls():
    x = Tensor(np.array([2.0]), requires_grad=True)
    backward(ops.sum(ops.scale(x, 3.0)))
    backward(ops.sum(ops.scale(x, 3.0)))
    assert x.grad[0] == pytest.approx(6.0)


def test_backward_requires_scalar(rng):
    with pytest.raises(DomixError):
        backward(ops.scale(leaf(rng, 3), 2.0))


def test_shape_errors_name_both_shapes(rng):
    with pytest.raises(ShapeError) as info:
        ops.matmul(leaf(rng, 2, 3), leaf(rng, 4, 5))
    assert "(2, 3)" in str(info.value) and "(4, 5)" in str(info.value)
    with pytest.raises(ShapeError):
        ops.mul(leaf(rng, 2, 3), leaf(rng, 3))


def test_bias_broadcast_reduces_gradient(rng):
    x = leaf(rng, 2, 3, 4)
    b = leaf(rng, 4)
    backward(ops.sum(ops.add(x, b)))
    assert np.allclose(b.grad, np.full(4, 6.0))


def test_no_grad_records_nothing(rng):
    x = leaf(rng, 3)
    with no_grad():
        y = ops.sum(ops.mul(x, x))
    assert not y.requires_grad
    assert backward(y) == {}


def test_stop_gradient_blocks_flow(rng):
    x = leaf(rng, 3)
    loss = ops.sum(ops.mul(ops.stop_gradient(x), x))
    backward(loss)
    assert np.allclose(x.grad, x.data)


def test_scale_grad_identity_forward_and_reversed_backward(rng):
    x = leaf(rng, 2, 4)
    y = ops.reverse_grad(x)
    assert np.array_equal(y.data, x.data)
    backward(ops.sum(y))
    assert np.array_equal(x.grad, -np.ones((2, 4)))


def test_scale_grad_per_feature(rng):
    x = leaf(rng, 3, 4)
    backward(ops.sum(ops.scale_grad(x, [1.0, 1.0, -1.0, -1.0])))
    assert np.array_equal(x.grad, np.tile([1.0, 1.0, -1.0, -1.0], (3, 1)))


def test_scale_grad_disabled_is_identity(rng):
    x = leaf(rng, 3)
    with grad_scaling(False):
        backward(ops.sum(ops.reverse_grad(x)))
    assert np.array_equal(x.grad, np.ones(3))


def test_softmax_shift_invariance(rng):
    logits = rng.normal(size=(4, 7))
    shifted = logits + rng.normal(size=(4, 1)) * 100
    assert np.allclose(ops.softmax(Tensor(logits)).data, ops.softmax(Tensor(shifted)).data, atol=1e-10)


def test_masked_softmax_rejects_fully_masked_row():
    logits = Tensor(np.zeros((2, 3)))
    mask = np.array([[False, True, True], [True, True, True]])
    with pytest.raises(AttentionMaskError):
        ops.masked_softmax(logits, mask)


def test_masked_softmax_gives_zero_weight():
    logits = Tensor(np.array([[1.0, 2.0, 3.0]]))
    weights = ops.masked_softmax(logits, np.array([[False, True, False]])).data
    assert weights[0, 1] == 0.0
    assert weights.sum() == pytest.approx(1.0)


@pytest.mark.parametrize("build", [
    lambda p: ops.sum(ops.softmax(ops.matmul(p["x"], p["w"]), axis=-1) * ops.as_tensor(np.arange(12.0).reshape(3, 4))),
    lambda p: ops.sum(ops.log_softmax(ops.matmul(p["x"], p["w"])) * ops.as_tensor(np.linspace(0, 1, 12).reshape(3, 4))),
    lambda p: ops.mean(ops.relu(ops.add(ops.matmul(p["x"], p["w"]), p["b"]))),
    lambda p: ops.sum(ops.exp(ops.scale(ops.matmul(p["x"], p["w"]), 0.1))),
    lambda p: ops.sum(ops.layer_norm(ops.matmul(p["x"], p["w"]), p["g"], p["b"]) * ops.as_tensor(np.arange(12.0).reshape(3, 4))),
    lambda p: ops.sum(ops.concat([p["x"], ops.reshape(p["w"], (4, 5))], axis=0)[1:5] * ops.as_tensor(np.arange(20.0).reshape(4, 5))),
    lambda p: ops.sum(ops.mul(ops.expand(ops.reshape(p["b"], (1, 4)), (3, 4)), ops.matmul(p["x"], p["w"]))),
    lambda p: ops.sum(ops.embedding_lookup(p["w"], np.array([0, 2, 2, 4])) * ops.as_tensor(np.arange(16.0).reshape(4, 4))),
])
def test_primitive_gradients_match_finite_differences(rng, build):
    params = {
        "x": leaf(rng, 3, 5),
        "w": leaf(rng, 5, 4),
        "b": leaf(rng, 4),
        "g": Tensor(1.0 + 0.1 * rng.normal(size=4), requires_grad=True),
    }
    report = check_gradients(lambda: build(params), params)
    assert report.passed, report.to_dict()


def test_positive_log_gradient(rng):
    x = Tensor(rng.uniform(0.5, 2.0, size=(3,)), requires_grad=True)
    report = check_gradients(lambda: ops.sum(ops.log(x)), {"x": x})
    assert report.passed


def test_corrupted_backward_rule_is_caught(rng, monkeypatch):
    original = ops.Softmax.backward

    def corrupted(self, grad):
        (value,) = original(self, grad)
        return (value * 1.1,)

    monkeypatch.setattr(ops.Softmax, "backward", corrupted)
    params = {"x": leaf(rng, 3, 4)}
    weights = ops.as_tensor(rng.normal(size=(3, 4)))
    report = check_gradients(lambda: ops.sum(ops.mul(ops.softmax(params["x"]), weights)), params)
    assert not report.passed


def test_relative_error_is_scale_free():
    a = np.array([1.0, 2.0])
    assert relative_error(a, a) == 0.0
    assert relative_error(a * 1000, a * 1000 * (1 + 1e-3)) == pytest.approx(1e-3, rel=1e-2)


def test_dropout_is_seeded_and_inverted(rng):
    x = Tensor(np.ones((4, 50)))
    a = ops.dropout(x, 0.5, np.random.default_rng(3)).data
    b = ops.dropout(x, 0.5, np.random.default_rng(3)).data
    assert np.array_equal(a, b)
    assert set(np.unique(a)) <= {0.0, 2.0}
    assert ops.dropout(x, 0.5, rng, training=False) is x
