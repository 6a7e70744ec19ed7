import numpy as np
import pytest

from roughdelay.fields import (MODELS, bilinear_noncommuting, constant, jacobian_fd_defect,
                               linear, make_sigma, sine)


@pytest.mark.parametrize("name", MODELS)
def test_registered_jacobians_match_finite_differences(name):
    sig = make_sigma(name, 2, 2, 1, seed=3)
    assert jacobian_fd_defect(sig, points=50, seed=1) <= 1e-6


def test_sine_with_several_delays():
    sig = sine(3, 2, 2, seed=5)
    assert jacobian_fd_defect(sig, seed=2) <= 1e-6
    assert sig.eval(np.zeros((4, 3, 3))).shape == (4, 3, 2)
    assert sig.jac(np.zeros((4, 3, 3)), 2).shape == (4, 3, 2, 3)


def test_constant_field():
    S = np.array([[1.0, 2.0], [3.0, 4.0]])
    sig = constant(S)(1)
    u = np.random.default_rng(0).normal(size=(5, 2, 2))
    np.testing.assert_array_equal(sig.eval(u), np.broadcast_to(S, (5, 2, 2)))
    assert np.all(sig.jac(u, 0) == 0) and sig.lip == 0


def test_linear_field_is_linear():
    rng = np.random.default_rng(1)
    A = rng.normal(size=(2, 3, 2, 3))
    sig = linear(A)
    u, w = rng.normal(size=(2, 3, 2))
    np.testing.assert_allclose(sig.eval(2 * u - w), 2 * sig.eval(u) - sig.eval(w), atol=1e-12)
    with pytest.raises(ValueError):
        linear(rng.normal(size=(2, 3, 2, 4)))


def test_bilinear_columns_do_not_commute():
    sig = bilinear_noncommuting(1)
    J = sig.jac(np.zeros((2, 2)), 0)
    M0, M1 = J[:, 0, :], J[:, 1, :]
    assert np.max(np.abs(M0 @ M1 - M1 @ M0)) > 0.5


def test_make_sigma_rejects_unknown():
    with pytest.raises(ValueError):
        make_sigma("cubic", 2, 2, 1)
    with pytest.raises(ValueError):
        make_sigma("bilinear-noncommuting", 3, 2, 1)
