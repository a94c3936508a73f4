import numpy as np
import pytest

from mol2adr import autodiff as ad
from mol2adr.autodiff import Tape, Tensor
from mol2adr.errors import ShapeMismatch, StepOutOfRange
from mol2adr.optim import Adam, AdamState, CosineSchedule, adam_step, cosine_lr


def test_cosine_schedule_endpoints():
    schedule = CosineSchedule(total_steps=100, lr_max=1e-3, lr_min=1e-5)
    assert cosine_lr(0, schedule) == pytest.approx(1e-3)
    assert cosine_lr(100, schedule) == pytest.approx(1e-5)
    assert cosine_lr(50, schedule) == pytest.approx((1e-3 + 1e-5) / 2)
    rates = [cosine_lr(s, schedule) for s in range(101)]
    assert all(a >= b for a, b in zip(rates, rates[1:]))


def test_cosine_schedule_rejects_bad_steps():
    schedule = CosineSchedule(total_steps=10)
    with pytest.raises(StepOutOfRange):
        cosine_lr(11, schedule)
    with pytest.raises(StepOutOfRange):
        cosine_lr(-1, schedule)
    with pytest.raises(ValueError):
        CosineSchedule(total_steps=10, lr_max=1e-5, lr_min=1e-3)


def test_first_adam_step_moves_by_learning_rate():
    p = Tensor([1.0, -2.0, 3.0])
    adam_step([p], [np.array([0.5, -4.0, 2.0])], AdamState(), lr=0.1)
    np.testing.assert_allclose(p.data, [0.9, -1.9, 2.9], atol=1e-6)


def test_missing_gradient_leaves_parameter():
    p = Tensor([1.0, 2.0])
    state = AdamState()
    adam_step([p], [None], state, lr=0.1)
    np.testing.assert_array_equal(p.data, [1.0, 2.0])
    assert state.step == 1


def test_adam_shape_mismatch():
    with pytest.raises(ShapeMismatch):
        adam_step([Tensor([1.0, 2.0])], [np.ones(3)], AdamState(), lr=0.1)
    with pytest.raises(ShapeMismatch):
        adam_step([Tensor([1.0])], [], AdamState(), lr=0.1)


def test_adam_minimizes_quadratic():
    x = Tensor([3.0, -2.0], requires_grad=True)
    target = np.array([1.0, 1.0])
    optimizer = Adam([x])

    def loss_value():
        diff = ad.sub(x, target)
        return ad.reduce_sum(ad.mul(diff, diff))

    start = loss_value().item()
    for _ in range(200):
        optimizer.zero_grad()
        with Tape() as tape:
            loss = loss_value()
        ad.backward(loss, tape, [x])
        optimizer.step(0.05)
    assert loss_value().item() < start / 100
