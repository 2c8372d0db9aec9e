import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.special import erf

from lao.core import ConfigurationError, InvalidInputError
from lao.smoothing import (
    SQRT_PI,
    LossSpec,
    clip,
    delta_insensitive_loss,
    erf_series,
    erf_taylor_coeff,
    f_eps,
    f_eps_derivative,
    mw_second_order_check,
    mw_second_order_terms,
    rho,
    squared_loss,
)


def test_squared_loss_examples():
    assert squared_loss(1.0, 1.0) == 0.0
    assert squared_loss(2.0, 0.0) == 2.0
    assert squared_loss(-1.0, 1.0) == 2.0


def test_delta_insensitive_examples():
    assert delta_insensitive_loss(1.0, 1.3, 0.5) == 0.0
    assert delta_insensitive_loss(2.0, 0.0, 0.5) == 1.5
    assert delta_insensitive_loss(-0.7, 0.2, 0.0) == pytest.approx(0.9)


def test_clip_examples():
    assert clip(0.5, 1.0) == 0.5
    assert clip(5.0, 1.0) == 1.0
    assert clip(-3.0, 2.0) == -2.0
    with pytest.raises(InvalidInputError):
        clip(1.0, 0.0)


def test_rho_values():
    assert rho(0.0) == pytest.approx(0.5641895835, abs=1e-10)
    assert rho(10.0) - 10.0 <= 1e-8
    assert rho(1e6) == 1e6
    assert rho(-40.0) == 40.0


@given(st.floats(-50, 50))
def test_rho_is_even(x):
    assert rho(x) == rho(-x)


def test_rho_derivative_is_erf():
    xs = np.linspace(-4, 4, 81)
    h = 1e-5
    np.testing.assert_allclose((rho(xs + h) - rho(xs - h)) / (2 * h), erf(xs), atol=1e-6)


def test_erf_coefficients():
    assert erf_taylor_coeff(0) == 0.0
    assert erf_taylor_coeff(2) == 0.0
    assert erf_taylor_coeff(1) == pytest.approx(1.1283791671, abs=1e-10)
    assert erf_taylor_coeff(3) == pytest.approx(-0.3761263890, abs=1e-10)
    # Independent recurrence: a_{2m+3} / a_{2m+1} = -(2m+1) / ((m+1)(2m+3)).
    for m in range(30):
        ratio = erf_taylor_coeff(2 * m + 3) / erf_taylor_coeff(2 * m + 1)
        assert ratio == pytest.approx(-(2 * m + 1) / ((m + 1) * (2 * m + 3)), rel=1e-12)
    assert math.isfinite(erf_taylor_coeff(801))
    with pytest.raises(InvalidInputError):
        erf_taylor_coeff(-1)


def test_erf_series_matches_reference():
    xs = np.linspace(-1, 1, 4001)
    assert np.abs(erf_series(xs) - erf(xs)).max() <= 1e-10


def test_f_eps_at_zero():
    for eps in (0.1, 0.5, 2.0):
        assert f_eps(0.0, 0.0, eps) == pytest.approx(eps / SQRT_PI, rel=1e-14)


@given(st.floats(-30, 30), st.floats(0, 2), st.floats(1e-3, 3))
def test_f_eps_even(x, delta, eps):
    assert f_eps(x, delta, eps) == pytest.approx(f_eps(-x, delta, eps), rel=1e-12, abs=1e-12)


@pytest.mark.parametrize("eps", [0.1, 0.01])
@pytest.mark.parametrize("delta", [0.0, 0.5])
def test_f_eps_uniform_gap(eps, delta):
    xs = np.linspace(-10, 10, 10_000)
    assert np.abs(f_eps(xs, delta, eps) - delta_insensitive_loss(xs, 0.0, delta)).max() <= eps


def test_f_eps_convex_and_finite_far_out():
    xs = np.linspace(-5, 5, 5001)
    vals = f_eps(xs, 0.3, 0.05)
    assert (vals[:-2] - 2 * vals[1:-1] + vals[2:]).min() >= -1e-12
    far = f_eps(np.array([-1e6, 1e6]), 0.5, 1e-3)
    np.testing.assert_allclose(far, [1e6 - 0.5, 1e6 - 0.5])


def test_f_eps_derivative_matches_finite_differences():
    xs = np.linspace(-2, 2, 41)
    h = 1e-6
    fd = (f_eps(xs + h, 0.4, 0.2) - f_eps(xs - h, 0.4, 0.2)) / (2 * h)
    np.testing.assert_allclose(f_eps_derivative(xs, 0.4, 0.2), fd, atol=1e-6)


def test_loss_spec():
    assert LossSpec()(3.0, 1.0) == 2.0
    assert LossSpec("delta_insensitive", delta=0.5)(3.0, 1.0) == 1.5
    assert LossSpec("smoothed_svr", delta=0.5, epsilon=0.01)(3.0, 1.0) == pytest.approx(1.5, abs=0.01)
    with pytest.raises(ConfigurationError):
        LossSpec("hinge")
    with pytest.raises(ConfigurationError):
        LossSpec("delta_insensitive", delta=-1.0)


def test_mw_zero_costs_slack_is_log_n_over_eta():
    lhs, rhs = mw_second_order_terms(np.zeros((5, 4)), 0.5)
    assert lhs == 0.0
    assert rhs == pytest.approx(math.log(4) / 0.5)


def test_mw_single_expert():
    costs = np.array([[0.3], [-1.0], [2.0]])
    assert mw_second_order_check(costs, 1.0)
    lhs, rhs = mw_second_order_terms(costs, 1.0)
    assert rhs - lhs == pytest.approx(1.0 * (0.09 + 1.0 + 4.0))


def test_mw_rejects_costs_below_minus_inverse_eta():
    with pytest.raises(InvalidInputError):
        mw_second_order_check([[-3.0, 0.0]], 0.5)


def test_mw_random_sequences_hold():
    rng = np.random.default_rng(0)
    for _ in range(1000):
        n = int(rng.integers(1, 17))
        T = int(rng.integers(1, 65))
        eta = float(rng.uniform(0.01, 3.0))
        assert mw_second_order_check(rng.uniform(-1 / eta, 1 / eta, size=(T, n)), eta)


def test_mw_extreme_costs_stay_finite():
    costs = np.full((200, 3), 1e3)
    costs[:, 0] = -1.0
    assert mw_second_order_check(costs, 1.0)
