import math

import numpy as np
import pytest

from mol2adr import autodiff as ad
from mol2adr.autodiff import Tape, Tensor
from mol2adr.errors import AllPositionsMasked, NonScalarLoss, NotOnTape, ShapeMismatch

TOL = 1e-4


@pytest.fixture
def rng():
    return np.random.default_rng(7)


def test_broadcast_add_gradient():
    x = Tensor(np.ones((2, 3)), requires_grad=True)
    b = Tensor(np.zeros(3), requires_grad=True)
    with Tape() as tape:
        loss = ad.reduce_sum(x + b)
    ad.backward(loss, tape)
    np.testing.assert_array_equal(b.grad, [2, 2, 2])
    np.testing.assert_array_equal(x.grad, np.ones((2, 3)))


def test_nothing_recorded_without_tape():
    x = Tensor([1.0, 2.0], requires_grad=True)
    y = ad.mul(x, x)
    assert y.requires_grad is False


def test_unused_param_gets_zero_gradient():
    x = Tensor([1.0, 2.0], requires_grad=True)
    unused = Tensor(np.ones((2, 2)), requires_grad=True)
    with Tape() as tape:
        loss = ad.reduce_sum(ad.mul(x, x))
    ad.backward(loss, tape, [x, unused])
    np.testing.assert_array_equal(x.grad, [2.0, 4.0])
    np.testing.assert_array_equal(unused.grad, np.zeros((2, 2)))


def test_backward_errors():
    x = Tensor([1.0, 2.0], requires_grad=True)
    with Tape() as tape:
        y = ad.mul(x, x)
    with pytest.raises(NonScalarLoss):
        ad.backward(y, tape)
    stray = ad.reduce_sum(Tensor([1.0]))
    with pytest.raises(NotOnTape):
        ad.backward(stray, tape)


def test_matmul_shape_mismatch():
    with pytest.raises(ShapeMismatch):
        ad.matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 3))))


def test_masked_softmax_gives_exact_zeros():
    logits = Tensor([[1.0, 5.0, 2.0]])
    probs = ad.softmax_rows(logits, np.array([[True, False, True]])).data
    assert probs[0, 1] == 0.0
    assert probs.sum() == pytest.approx(1.0)
    with pytest.raises(AllPositionsMasked):
        ad.softmax_rows(logits, np.array([[False, False, False]]))


def test_cross_entropy_uniform_logits():
    logits = Tensor(np.zeros((1, 3, 5)))
    loss = ad.cross_entropy_masked(logits, [[4, 2, 0]])
    assert loss.item() == pytest.approx(math.log(5))
    with pytest.raises(AllPositionsMasked):
        ad.cross_entropy_masked(logits, [[0, 0, 0]])
    with pytest.raises(ShapeMismatch):
        ad.cross_entropy_masked(logits, [[1, 2]])


def test_segment_softmax_normalizes_per_segment():
    scores = Tensor([[1.0], [2.0], [3.0], [0.5]])
    probs = ad.segment_softmax(scores, [0, 0, 1, 1], 2).data
    assert probs[:2].sum() == pytest.approx(1.0)
    assert probs[2:].sum() == pytest.approx(1.0)


def test_layer_norm_output_statistics():
    x = Tensor(np.arange(8.0).reshape(2, 4))
    out = ad.layer_norm(x, Tensor(np.ones(4)), Tensor(np.zeros(4))).data
    np.testing.assert_allclose(out.mean(axis=-1), 0.0, atol=1e-12)
    np.testing.assert_allclose(out.var(axis=-1), 1.0, atol=1e-4)


def test_float_width():
    ad.set_float_width(32)
    assert Tensor([1.0]).data.dtype == np.float32
    ad.set_float_width(64)
    assert Tensor([1.0]).data.dtype == np.float64
    with pytest.raises(ValueError):
        ad.set_float_width(16)


def _sq(t):
    return ad.reduce_sum(ad.mul(t, t))


@pytest.mark.parametrize(
    "name",
    ["sub", "matmul", "transpose", "reshape", "getitem", "mean", "relu", "layer_norm", "softmax"],
)
def test_gradients_match_finite_differences(name, rng):
    w = Tensor(rng.normal(size=(4, 3)))
    gain, bias = Tensor(rng.normal(size=4)), Tensor(rng.normal(size=4))
    weights = Tensor(rng.normal(size=(3, 4)))
    mask = np.array([[True, False, True, True]] * 3)
    functions = {
        "sub": lambda x: _sq(ad.sub(x, weights)),
        "matmul": lambda x: _sq(x @ w),
        "transpose": lambda x: ad.reduce_sum(ad.mul(ad.transpose(x), w)),
        "reshape": lambda x: ad.reduce_sum(ad.mul(ad.reshape(x, (4, 3)), w)),
        "getitem": lambda x: _sq(x[1:, :2]),
        "mean": lambda x: _sq(ad.mean(x, axis=0)),
        "relu": lambda x: ad.reduce_sum(ad.mul(ad.relu(x), weights)),
        "layer_norm": lambda x: ad.reduce_sum(ad.mul(ad.layer_norm(x, gain, bias), weights)),
        "softmax": lambda x: ad.reduce_sum(ad.mul(ad.softmax_rows(x, mask), weights)),
    }
    x = Tensor(rng.normal(size=(3, 4)))
    assert ad.grad_check(functions[name], x) < TOL


def test_gradient_through_cross_entropy(rng):
    targets = np.array([[3, 1, 0], [2, 0, 0]])
    x = Tensor(rng.normal(size=(2, 3, 4)))
    assert ad.grad_check(lambda t: ad.cross_entropy_masked(t, targets), x) < TOL


def test_gradient_of_reused_tensor(rng):
    x = Tensor(rng.normal(size=(3, 3)))
    assert ad.grad_check(lambda t: _sq(t @ t), x) < TOL


def test_grad_check_flags_tiny_untracked_gradient():
    leak = 2e-11
    zeros = Tensor(np.zeros(3))

    def f(t):
        return ad.reduce_sum(ad.mul(t, zeros)) + Tensor(leak * t.data.sum())

    assert ad.grad_check(f, Tensor([0.3, -1.2, 0.8])) > TOL
