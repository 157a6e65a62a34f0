# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled inner loops.  Must stay numerically identical to _kernels_py."""
import numpy as np

from libc.math cimport isfinite


cdef inline void _field(double I, double b, double c_s, double gamma, double alpha,
                        double K, double u, double* dI, double* db) noexcept nogil:
    dI[0] = (c_s * b - gamma) * I
    db[0] = -alpha * (b - K / (1.0 + u * I))


def monod_fast_rk4(double I0, double b0, double c_s, double gamma, double alpha,
                   double K, double u, double dt, Py_ssize_t n_out,
                   Py_ssize_t steps_per_out, double cap=1e15):
    """Fixed-step RK4 for the Monod fast system; returns (n_out, 2) samples."""
    out = np.empty((n_out, 2))
    cdef double[:, ::1] o = out
    cdef double I = I0, b = b0, h = dt, h2 = 0.5 * dt, h6 = dt / 6.0
    cdef double k1I, k1b, k2I, k2b, k3I, k3b, k4I, k4b
    cdef Py_ssize_t k, s
    cdef int bad = 0
    with nogil:
        for k in range(n_out):
            o[k, 0] = I
            o[k, 1] = b
            if k == n_out - 1:
                break
            for s in range(steps_per_out):
                _field(I, b, c_s, gamma, alpha, K, u, &k1I, &k1b)
                _field(I + h2 * k1I, b + h2 * k1b, c_s, gamma, alpha, K, u, &k2I, &k2b)
                _field(I + h2 * k2I, b + h2 * k2b, c_s, gamma, alpha, K, u, &k3I, &k3b)
                _field(I + h * k3I, b + h * k3b, c_s, gamma, alpha, K, u, &k4I, &k4b)
                I = I + h6 * (k1I + 2.0 * k2I + 2.0 * k3I + k4I)
                b = b + h6 * (k1b + 2.0 * k2b + 2.0 * k3b + k4b)
                if I < 0.0:
                    I = 0.0
                if not (isfinite(I) and isfinite(b)) or I > cap:
                    bad = 1
                    break
            if bad:
                break
    if bad:
        raise FloatingPointError(
            f"Monod fast system diverged near t={(k * steps_per_out + s + 1) * dt:g}")
    return out
