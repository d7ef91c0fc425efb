"""Hot-loop kernels with a compiled core and a pure-Python fallback.

The compiled module ``nvpdmr._ckernels`` is used when it was built;
otherwise the numpy/pure-Python versions in ``nvpdmr._pykernels`` are
selected at import. ``use_backend`` switches explicitly, which the
benchmarks and the backend-parity tests rely on.

Kernels
-------
rk4_linear(m, x0, dt, n_steps)
    Fixed-step classical Runge-Kutta for ``dx/dt = m @ x``.
lowpass_iir(x, alpha, y0)
    First-order recursive low-pass ``y += alpha * (x - y)``.
pulse_train_sin_integral(t_first, period, width, n_pulses, omega, phase)
    Sum over a square pulse train of the integral of ``sin(omega t + phase)``.
"""
import numpy as np

from . import _pykernels

try:
    from . import _ckernels
except ImportError:  # extension not built
    _ckernels = None

BACKEND = "cython" if _ckernels is not None else "python"
_impl = _ckernels if _ckernels is not None else _pykernels


def available_backends():
    return ["python"] + (["cython"] if _ckernels is not None else [])


def use_backend(name):
    """Select ``"cython"`` or ``"python"``; returns the previous backend name."""
    global _impl, BACKEND
    if name == "cython":
        if _ckernels is None:
            raise RuntimeError("compiled kernels are not available")
        new = _ckernels
    elif name == "python":
        new = _pykernels
    else:
        raise ValueError(f"unknown backend {name!r}")
    previous = BACKEND
    _impl, BACKEND = new, name
    return previous


def rk4_linear(m, x0, dt, n_steps):
    m = np.ascontiguousarray(m, dtype=np.float64)
    x0 = np.ascontiguousarray(x0, dtype=np.float64)
    if m.ndim != 2 or m.shape[0] != m.shape[1] or m.shape[0] != x0.shape[0]:
        raise ValueError("m must be square and match x0")
    return _impl.rk4_linear(m, x0, float(dt), int(n_steps))


def lowpass_iir(x, alpha, y0=0.0):
    x = np.ascontiguousarray(x, dtype=np.float64)
    return _impl.lowpass_iir(x, float(alpha), float(y0))


def pulse_train_sin_integral(t_first, period, width, n_pulses, omega, phase):
    if omega == 0:
        raise ValueError("omega must be non-zero")
    return _impl.pulse_train_sin_integral(
        float(t_first), float(period), float(width), int(n_pulses), float(omega), float(phase)
    )
