"""Pure-Python reference versions of the compiled kernels."""
import numpy as np


def rk4_linear(m, x0, dt, n_steps):
    m = np.asarray(m, dtype=np.float64)
    x = np.array(x0, dtype=np.float64, copy=True)
    h2 = 0.5 * dt
    h6 = dt / 6.0
    for _ in range(int(n_steps)):
        k1 = m @ x
        k2 = m @ (x + h2 * k1)
        k3 = m @ (x + h2 * k2)
        k4 = m @ (x + dt * k3)
        x = x + h6 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return x


def lowpass_iir(x, alpha, y0):
    x = np.asarray(x, dtype=np.float64)
    y = np.empty_like(x)
    state = float(y0)
    for i, xi in enumerate(x):
        state += alpha * (xi - state)
        y[i] = state
    return y


def pulse_train_sin_integral(t_first, period, width, n_pulses, omega, phase, chunk=1 << 20):
    total = 0.0
    for start in range(0, int(n_pulses), chunk):
        k = np.arange(start, min(start + chunk, int(n_pulses)), dtype=np.float64)
        t = t_first + k * period
        total += float(np.sum(np.cos(omega * t + phase) - np.cos(omega * (t + width) + phase)))
    return total / omega
