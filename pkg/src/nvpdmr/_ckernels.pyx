# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled inner loops. Mirrors ``_pykernels`` function for function."""
import numpy as np
cimport numpy as cnp
from libc.math cimport cos

cnp.import_array()


def rk4_linear(double[:, ::1] m, double[::1] x0, double dt, long n_steps):
    cdef Py_ssize_t n = m.shape[0]
    cdef Py_ssize_t i, j
    cdef long step
    cdef double acc, h2 = 0.5 * dt, h6 = dt / 6.0
    out = np.array(x0, dtype=np.float64, copy=True)
    cdef double[::1] x = out
    cdef double[::1] k1 = np.empty(n)
    cdef double[::1] k2 = np.empty(n)
    cdef double[::1] k3 = np.empty(n)
    cdef double[::1] k4 = np.empty(n)
    cdef double[::1] tmp = np.empty(n)

    for step in range(n_steps):
        for i in range(n):
            acc = 0.0
            for j in range(n):
                acc += m[i, j] * x[j]
            k1[i] = acc
        for i in range(n):
            tmp[i] = x[i] + h2 * k1[i]
        for i in range(n):
            acc = 0.0
            for j in range(n):
                acc += m[i, j] * tmp[j]
            k2[i] = acc
        for i in range(n):
            tmp[i] = x[i] + h2 * k2[i]
        for i in range(n):
            acc = 0.0
            for j in range(n):
                acc += m[i, j] * tmp[j]
            k3[i] = acc
        for i in range(n):
            tmp[i] = x[i] + dt * k3[i]
        for i in range(n):
            acc = 0.0
            for j in range(n):
                acc += m[i, j] * tmp[j]
            k4[i] = acc
        for i in range(n):
            x[i] += h6 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
    return out


def lowpass_iir(double[::1] x, double alpha, double y0):
    cdef Py_ssize_t i, n = x.shape[0]
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] y = out
    cdef double state = y0
    for i in range(n):
        state += alpha * (x[i] - state)
        y[i] = state
    return out


def pulse_train_sin_integral(double t_first, double period, double width,
                             long n_pulses, double omega, double phase):
    cdef long k
    cdef double t, total = 0.0
    for k in range(n_pulses):
        t = t_first + k * period
        total += cos(omega * t + phase) - cos(omega * (t + width) + phase)
    return total / omega
