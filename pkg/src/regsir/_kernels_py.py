"""Pure-Python twin of the compiled kernels in ``_kernels.pyx``."""
import math

import numpy as np


def monod_fast_rk4(I0, b0, c_s, gamma, alpha, K, u, dt, n_out, steps_per_out, cap=1e15):
    """Fixed-step RK4 for the Monod fast system; returns (n_out, 2) samples."""
    out = np.empty((n_out, 2))
    I, b = float(I0), float(b0)
    h, h2, h6 = dt, 0.5 * dt, dt / 6.0

    def field(I, b):
        return (c_s * b - gamma) * I, -alpha * (b - K / (1.0 + u * I))

    for k in range(n_out):
        out[k, 0] = I
        out[k, 1] = b
        if k == n_out - 1:
            break
        for s in range(steps_per_out):
            k1I, k1b = field(I, b)
            k2I, k2b = field(I + h2 * k1I, b + h2 * k1b)
            k3I, k3b = field(I + h2 * k2I, b + h2 * k2b)
            k4I, k4b = field(I + h * k3I, b + h * k3b)
            I = I + h6 * (k1I + 2.0 * k2I + 2.0 * k3I + k4I)
            b = b + h6 * (k1b + 2.0 * k2b + 2.0 * k3b + k4b)
            if I < 0.0:
                I = 0.0
            if not (math.isfinite(I) and math.isfinite(b)) or I > cap:
                raise FloatingPointError(
                    f"Monod fast system diverged near t={(k * steps_per_out + s + 1) * dt:g}"
                )
    return out
