import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from core import autodiff as ad
from core.autodiff import Tape, Tensor
from core.optim import AdamState, adam_step
from errors import ShapeError


def test_zero_gradient_leaves_params_unchanged():
    w = Tensor([[1.0, -2.0]], requires_grad=True)
    adam_step([w], [np.zeros((1, 2))], AdamState(), lr=0.1)
    assert_array_equal(w.values, [[1.0, -2.0]])


def test_missing_gradient_counts_as_zero():
    w = Tensor([[1.0]], requires_grad=True)
    adam_step([w], [None], AdamState(), lr=0.1)
    assert w.values[0, 0] == 1.0


def test_first_step_moves_by_lr_times_sign():
    w = Tensor([[0.0, 0.0, 0.0]], requires_grad=True)
    adam_step([w], [np.array([[3.0, -0.01, 250.0]])], AdamState(), lr=0.01)
    assert_allclose(w.values, [[-0.01, 0.01, -0.01]], rtol=1e-5)


def test_converges_on_scalar_quadratic():
    w = Tensor([[0.0]], requires_grad=True)
    state = AdamState()
    for _ in range(100):
        w.zero_grad()
        with Tape():
            diff = ad.affine(w, 1.0, -3.0)
            ad.backward(ad.mul(diff, diff))
        adam_step([w], [w.grad], state, lr=0.1)
    assert abs(w.values[0, 0] - 3.0) < 0.1
    assert state.step == 100


def test_length_mismatch():
    w = Tensor([[0.0]], requires_grad=True)
    with pytest.raises(ShapeError):
        adam_step([w], [np.zeros((1, 1)), np.zeros((1, 1))], AdamState(), lr=0.1)
