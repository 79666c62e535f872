import numpy as np
import pytest

from cmfnet import functional as F
from cmfnet.gradcheck import grad_check, relative_error
from cmfnet.nn import Parameter
from cmfnet.tensor import Tensor, _record, sigmoid


def test_relative_error_floor():
    assert relative_error(0.0, 0.0) == 0.0
    assert relative_error(1.0, 1.0) == 0.0
    assert relative_error(1.0, -1.0) == pytest.approx(1.0)


def test_sum_of_squares(rng):
    x = Tensor(rng.standard_normal(10))
    assert grad_check(lambda t: (t * t).sum(), [x]) < 1e-7


def test_conv_sigmoid_chain(rng):
    x = Tensor(rng.standard_normal((1, 2, 5, 5)))
    w = Tensor(rng.standard_normal((3, 2, 3, 3)) * 0.3)
    assert grad_check(lambda a, b: sigmoid(F.conv2d(a, b, padding=1)).sum(), [x, w], eps=1e-4) < 1e-4


def test_constant_function_gives_zero():
    x = Tensor(np.ones(4))
    assert grad_check(lambda t: (t * 0.0).sum() + 3.0, [x]) == 0.0


def test_wrong_backward_is_detected(rng):
    def bad_square(t):
        return _record(t.data**2, (t,), lambda g: (g * t.data,))  # missing the factor 2

    x = Tensor(rng.uniform(0.5, 1.5, 5))
    assert grad_check(lambda t: bad_square(t).sum(), [x]) > 0.1


def test_restores_dtype_and_grad_state(rng):
    p = Parameter(rng.standard_normal(3))
    p.grad = np.ones(3, dtype=np.float32)
    before = p.data.copy()
    grad_check(lambda: (p * p).sum(), [], wrt=[p])
    assert p.data.dtype == np.float32
    np.testing.assert_array_equal(p.data, before)
    np.testing.assert_array_equal(p.grad, np.ones(3))


def test_coordinate_sampling_and_per_tensor(rng):
    a, b = Tensor(rng.standard_normal(50)), Tensor(rng.standard_normal(3))
    errs = grad_check(lambda x, y: (x * x).sum() + (y * y * y).sum(), [a, b], coords=5, per_tensor=True)
    assert len(errs) == 2 and max(errs) < 1e-6


def test_non_scalar_rejected():
    with pytest.raises(ValueError):
        grad_check(lambda t: t * 2.0, [Tensor(np.ones(3))])
