import math

import numpy as np
import pytest
import scipy.integrate
import scipy.linalg
import scipy.signal
from hypothesis import given, settings
from hypothesis import strategies as st

from nvpdmr import kernels
from nvpdmr import _pykernels

needs_cython = pytest.mark.skipif("cython" not in kernels.available_backends(),
                                  reason="compiled kernels not built")


@pytest.fixture(params=kernels.available_backends())
def backend(request):
    previous = kernels.use_backend(request.param)
    yield request.param
    kernels.use_backend(previous)


def test_use_backend_validates():
    with pytest.raises(ValueError):
        kernels.use_backend("fortran")


def test_lowpass_matches_scipy_lfilter(backend):
    x = np.random.default_rng(0).normal(size=5000)
    alpha = 0.07
    ref = scipy.signal.lfilter([alpha], [1, -(1 - alpha)], x)
    np.testing.assert_allclose(kernels.lowpass_iir(x, alpha), ref, rtol=1e-12, atol=1e-14)


def test_lowpass_initial_state(backend):
    y = kernels.lowpass_iir(np.zeros(3), 0.5, 8.0)
    np.testing.assert_array_equal(y, [4.0, 2.0, 1.0])


def test_rk4_matches_expm(backend):
    rng = np.random.default_rng(3)
    m = rng.normal(size=(4, 4))
    x0 = rng.normal(size=4)
    dt, n = 1e-3, 500
    out = kernels.rk4_linear(m, x0, dt, n)
    np.testing.assert_allclose(out, scipy.linalg.expm(m * dt * n) @ x0, rtol=1e-9)


def test_rk4_zero_steps_returns_copy(backend):
    x0 = np.array([1.0, 2.0])
    out = kernels.rk4_linear(np.eye(2), x0, 0.1, 0)
    assert np.array_equal(out, x0) and out is not x0


def test_rk4_shape_check():
    with pytest.raises(ValueError):
        kernels.rk4_linear(np.eye(3), np.ones(2), 0.1, 1)


def test_pulse_train_matches_quadrature(backend):
    t0, period, width, n, omega, phase = 1e-4, 1e-3, 2.5e-4, 7, 2 * math.pi * 1.1e3, 0.3
    total = sum(scipy.integrate.quad(lambda t: math.sin(omega * t + phase), t0 + k * period,
                                     t0 + k * period + width, epsabs=1e-15)[0] for k in range(n))
    got = kernels.pulse_train_sin_integral(t0, period, width, n, omega, phase)
    assert got == pytest.approx(total, rel=1e-9, abs=1e-15)


def test_pulse_train_locked_pulses_add_coherently(backend):
    f, w = 1e3, 2.5e-4
    omega = 2 * math.pi * f
    one = kernels.pulse_train_sin_integral(0.0, 1 / f, w, 1, omega, 0.0)
    many = kernels.pulse_train_sin_integral(0.0, 1 / f, w, 200, omega, 0.0)
    assert many == pytest.approx(200 * one, rel=1e-9)


def test_pulse_train_rejects_zero_frequency():
    with pytest.raises(ValueError):
        kernels.pulse_train_sin_integral(0.0, 1.0, 0.5, 1, 0.0, 0.0)


@needs_cython
@settings(max_examples=50, deadline=None)
@given(st.integers(1, 6), st.integers(0, 300), st.floats(1e-4, 1e-2), st.integers(0, 2**32 - 1))
def test_rk4_backends_agree(dim, n, dt, seed):
    rng = np.random.default_rng(seed)
    m, x0 = rng.normal(size=(dim, dim)), rng.normal(size=dim)
    ref = _pykernels.rk4_linear(m, x0, dt, n)
    previous = kernels.use_backend("cython")
    try:
        got = kernels.rk4_linear(m, x0, dt, n)
    finally:
        kernels.use_backend(previous)
    np.testing.assert_allclose(got, ref, rtol=1e-12, atol=1e-12)


@needs_cython
@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-1e3, 1e3), max_size=200), st.floats(0, 1), st.floats(-10, 10))
def test_lowpass_backends_agree(xs, alpha, y0):
    x = np.array(xs, dtype=float)
    ref = _pykernels.lowpass_iir(x, alpha, y0)
    previous = kernels.use_backend("cython")
    try:
        got = kernels.lowpass_iir(x, alpha, y0)
    finally:
        kernels.use_backend(previous)
    np.testing.assert_allclose(got, ref, rtol=1e-12, atol=1e-12)


@needs_cython
@settings(max_examples=50, deadline=None)
@given(st.floats(0, 1e-2), st.floats(1e-6, 1e-2), st.floats(0.01, 0.99), st.integers(0, 5000),
       st.floats(1e2, 1e7), st.floats(-math.pi, math.pi))
def test_pulse_train_backends_agree(t0, period, duty, n, freq, phase):
    args = (t0, period, duty * period, n, 2 * math.pi * freq, phase)
    ref = _pykernels.pulse_train_sin_integral(*args)
    previous = kernels.use_backend("cython")
    try:
        got = kernels.pulse_train_sin_integral(*args)
    finally:
        kernels.use_backend(previous)
    scale = n * duty * period + 1e-300
    assert abs(got - ref) <= 1e-9 * scale
