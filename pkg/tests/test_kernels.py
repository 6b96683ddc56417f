import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.integrate import quad

from yosida_fde.kernels import (exp_convolution_series, exp_pl_weights, exp_segment_integral,
                                exp_window_integrals, kernel_convolution_series,
                                kernel_step_weights)


@given(st.floats(1e-6, 50.0))
def test_pl_weights_sum_and_positivity(a):
    E, w0, w1 = exp_pl_weights(a)
    assert w0 >= 0 and w1 >= 0
    assert w0 + w1 == pytest.approx(-math.expm1(-a), rel=1e-13, abs=1e-300)


@pytest.mark.parametrize("a", [1e-4, 0.3, 0.49999, 0.50001, 2.0, 20.0])
def test_pl_weights_against_quadrature(a):
    # kernel exp(-tau)/1 over [0, a] against the hat functions of the step
    w1_ref = quad(lambda tau: math.exp(-tau) * (1 - tau / a), 0, a, epsabs=1e-15)[0]
    w0_ref = quad(lambda tau: math.exp(-tau) * tau / a, 0, a, epsabs=1e-15)[0]
    _, w0, w1 = exp_pl_weights(a)
    assert w0 == pytest.approx(w0_ref, rel=1e-12, abs=1e-16)
    assert w1 == pytest.approx(w1_ref, rel=1e-12, abs=1e-16)


@pytest.mark.parametrize("beta", [-3.0, -0.1, 0.0, 1e-3, 0.7, 40.0])
def test_kernel_step_weights_against_quadrature(beta):
    h = 0.05
    _, W0, W1 = kernel_step_weights(beta, h)
    W1_ref = quad(lambda s: math.exp(-beta * s) * (1 - s / h), 0, h, epsabs=1e-16)[0]
    W0_ref = quad(lambda s: math.exp(-beta * s) * s / h, 0, h, epsabs=1e-16)[0]
    assert W0 == pytest.approx(W0_ref, rel=1e-12)
    assert W1 == pytest.approx(W1_ref, rel=1e-12)


def test_exp_convolution_constant_closed_form():
    h, lam = 0.01, 0.1
    t = np.arange(0, 2 + h / 2, h)
    C = exp_convolution_series(np.full(t.size, 3.0), h, lam)
    np.testing.assert_allclose(C, 3.0 * (1 - np.exp(-t / lam)), atol=1e-13)


def test_exp_convolution_linear_closed_form():
    # (1/lam) int_0^t e^{-tau/lam} (t - tau) dtau = t - lam + lam e^{-t/lam}
    h, lam = 1e-3, 0.1
    t = np.arange(0, 1 + h / 2, h)
    C = exp_convolution_series(t, h, lam)
    assert C[-1] == pytest.approx(0.9 + 0.1 * math.exp(-10), abs=1e-13)
    np.testing.assert_allclose(C, t - lam + lam * np.exp(-t / lam), atol=1e-13)


def test_kernel_convolution_matches_quadrature_on_random_data(rng):
    h, beta = 0.1, -0.8
    u = rng.normal(size=21)
    t = h * np.arange(u.size)
    I = kernel_convolution_series(u, h, beta)
    for j in (5, 13, 20):
        ref = quad(lambda tau: math.exp(-beta * (t[j] - tau)) * np.interp(tau, t, u), 0, t[j],
                   points=t[1:j], limit=200, epsabs=1e-14)[0]
        assert I[j] == pytest.approx(ref, abs=1e-11)


def test_window_integrals_against_direct_segment_integral(rng):
    h, kappa, steps = 0.05, 1.3, 40
    u = rng.normal(size=(120, 2))
    M = exp_window_integrals(u, h, kappa, steps)
    j = 100
    seg_t = h * np.arange(-steps, 1)
    ref = exp_segment_integral(seg_t, u[j - steps: j + 1], kappa)
    np.testing.assert_allclose(M[j], ref, atol=1e-12)


def test_segment_integral_constant():
    t = np.linspace(-30, 0, 601)
    val = exp_segment_integral(t, np.ones_like(t), 1.0)
    assert val == pytest.approx(1 - math.exp(-30), abs=1e-12)
