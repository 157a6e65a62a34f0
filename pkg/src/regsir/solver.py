"""Explicit Runge-Kutta integration with positivity handling.

Two methods are available: classical fixed-step RK4 and the adaptive
Dormand-Prince 5(4) embedded pair.  Both return a :class:`Trajectory` that
also stores the vector field at every sample, so that the solution can be
resampled by cubic Hermite interpolation (:func:`sample_daily`).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.interpolate import CubicHermiteSpline, CubicSpline

from .errors import DivergenceError, IntegrationError, ModelEvaluationError

__all__ = ["IntegratorConfig", "Trajectory", "integrate", "sample_daily", "sample_at"]

VectorField = Callable[[float, np.ndarray], np.ndarray]


@dataclass(frozen=True)
class IntegratorConfig:
    method: str = "rk45"
    dt: float = 0.1
    rtol: float = 1e-8
    atol: float = 1e-10
    max_steps: int = 1_000_000
    positivity_floor: float | None = 0.0

    def __post_init__(self):
        if self.method not in ("rk45", "rk4"):
            raise ValueError(f"unknown method {self.method!r}; use 'rk45' or 'rk4'")
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if not (self.rtol > 0 and self.atol > 0):
            raise ValueError("rtol and atol must be positive")
        if self.max_steps < 1:
            raise ValueError("max_steps must be >= 1")


@dataclass(frozen=True)
class Trajectory:
    """Time-stamped samples of an ODE solution (immutable)."""

    times: np.ndarray
    states: np.ndarray
    derivs: np.ndarray | None = None
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        times = np.array(self.times, dtype=float)
        states = np.array(self.states, dtype=float)
        if states.ndim == 1:
            states = states[:, None]
        if times.ndim != 1 or len(times) < 1 or len(times) != len(states):
            raise ValueError("times and states must be aligned and non-empty")
        if np.any(np.diff(times) <= 0):
            raise ValueError("times must be strictly increasing")
        if not np.all(np.isfinite(states)):
            raise ValueError("states must be finite")
        times.flags.writeable = False
        states.flags.writeable = False
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "states", states)
        if self.derivs is not None:
            derivs = np.array(self.derivs, dtype=float).reshape(states.shape)
            derivs.flags.writeable = False
            object.__setattr__(self, "derivs", derivs)

    def __len__(self):
        return len(self.times)

    @property
    def final(self) -> np.ndarray:
        return self.states[-1]

    def component(self, i: int) -> np.ndarray:
        return self.states[:, i]


# Dormand-Prince 5(4) tableau
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_B4 = np.array(
    [5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40]
)
_E = _B5 - _B4


def _eval(rhs, t, x):
    dx = np.asarray(rhs(t, x), dtype=float)
    if not np.all(np.isfinite(dx)):
        raise ModelEvaluationError(f"non-finite derivative {dx} at t={t!r}, x={x}")
    return dx


def _floor_fix(x, floor, atol):
    """Clamp small undershoots; return None when the undershoot exceeds atol."""
    if floor is None:
        return x
    low = x < floor
    if not low.any():
        return x
    if np.any(floor - x[low] > atol):
        return None
    x = x.copy()
    x[low] = floor
    return x


def integrate(
    rhs: VectorField,
    x0,
    t_span: tuple[float, float],
    cfg: IntegratorConfig | None = None,
) -> Trajectory:
    """Integrate ``x' = rhs(t, x)`` over ``t_span``.

    Adaptive runs are sampled at accepted steps, fixed runs on a uniform grid.
    Components falling below ``cfg.positivity_floor`` by at most ``atol`` are
    clamped to the floor; deeper undershoots cause the step to be halved.

    Raises
    ------
    DivergenceError
        More than ``cfg.max_steps`` step attempts.
    ModelEvaluationError
        ``rhs`` returned NaN/Inf at an accepted state.
    """
    cfg = cfg or IntegratorConfig()
    t0, t1 = float(t_span[0]), float(t_span[1])
    if not t1 > t0:
        raise ValueError(f"t_span must satisfy t1 > t0, got {t_span}")
    x0 = np.array(x0, dtype=float).ravel()
    if not np.all(np.isfinite(x0)):
        raise ValueError("initial state must be finite")
    if cfg.method == "rk4":
        times, states, derivs = _run_rk4(rhs, x0, t0, t1, cfg)
    else:
        times, states, derivs = _run_rk45(rhs, x0, t0, t1, cfg)
    meta = {
        "method": cfg.method,
        "rtol": cfg.rtol,
        "atol": cfg.atol,
        "dt": cfg.dt,
        "rhs": getattr(rhs, "name", getattr(rhs, "__name__", repr(rhs))),
    }
    return Trajectory(np.array(times), np.array(states), np.array(derivs), meta)


def _rk4_step(rhs, t, x, k1, h):
    k2 = _eval(rhs, t + h / 2, x + h / 2 * k1)
    k3 = _eval(rhs, t + h / 2, x + h / 2 * k2)
    k4 = _eval(rhs, t + h, x + h * k3)
    return x + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)


def _rk4_interval(rhs, t, x, k1, h, cfg, depth, budget):
    budget[0] += 1
    if budget[0] > cfg.max_steps:
        raise DivergenceError("max_steps exceeded", state=x, time=t)
    x_new = _floor_fix(_rk4_step(rhs, t, x, k1, h), cfg.positivity_floor, cfg.atol)
    if x_new is not None:
        return x_new
    if depth >= 40:
        raise IntegrationError("positivity could not be restored", state=x, time=t)
    half = h / 2
    x_mid = _rk4_interval(rhs, t, x, k1, half, cfg, depth + 1, budget)
    k_mid = _eval(rhs, t + half, x_mid)
    return _rk4_interval(rhs, t + half, x_mid, k_mid, half, cfg, depth + 1, budget)


def _run_rk4(rhs, x0, t0, t1, cfg):
    span = t1 - t0
    ratio = span / cfg.dt
    n = max(1, int(round(ratio)) if abs(ratio - round(ratio)) < 1e-9 * ratio else math.ceil(ratio))
    h = span / n
    x = x0
    k = _eval(rhs, t0, x)
    times, states, derivs = [t0], [x], [k]
    budget = [0]
    for i in range(1, n + 1):
        t = t0 + (i - 1) * h
        x = _rk4_interval(rhs, t, x, k, h, cfg, 0, budget)
        t_new = t1 if i == n else t0 + i * h
        k = _eval(rhs, t_new, x)
        times.append(t_new)
        states.append(x)
        derivs.append(k)
    return times, states, derivs


def _run_rk45(rhs, x0, t0, t1, cfg):
    rtol, atol, floor = cfg.rtol, cfg.atol, cfg.positivity_floor
    t, x = t0, x0
    k1 = _eval(rhs, t, x)
    times, states, derivs = [t], [x], [k1]
    h = min(cfg.dt, t1 - t0)
    attempts = 0
    K = np.empty((7, x.size))
    while t < t1:
        attempts += 1
        if attempts > cfg.max_steps:
            raise DivergenceError("max_steps exceeded", state=x, time=t)
        if h < 1e-14 * max(1.0, abs(t)):
            raise IntegrationError("step size underflow", state=x, time=t)
        last = t + h >= t1
        if last:
            h = t1 - t
        K[0] = k1
        ok = True
        for s in range(1, 7):
            xs = x + h * (np.dot(_A[s], K[:s]))
            ks = np.asarray(rhs(t + _C[s] * h, xs), dtype=float)
            if not np.all(np.isfinite(ks)):
                ok = False
                break
            K[s] = ks
        if not ok:
            h *= 0.25
            continue
        x_new = x + h * np.dot(_B5, K)
        err_vec = h * np.dot(_E, K)
        scale = atol + rtol * np.maximum(np.abs(x), np.abs(x_new))
        err = float(np.max(np.abs(err_vec) / scale))
        if err > 1.0:
            h *= max(0.2, 0.9 * err ** -0.2)
            continue
        fixed = _floor_fix(x_new, floor, atol)
        if fixed is None:
            h *= 0.5
            continue
        t_new = t1 if last else t + h
        if fixed is x_new:
            k_new = K[6].copy()
        else:
            k_new = _eval(rhs, t_new, fixed)
        t, x, k1 = t_new, fixed, k_new
        times.append(t)
        states.append(x)
        derivs.append(k1)
        factor = 5.0 if err == 0.0 else min(5.0, max(0.2, 0.9 * err ** -0.2))
        h *= factor
    return times, states, derivs


def sample_at(traj: Trajectory, times) -> np.ndarray:
    """Cubic interpolation of ``traj`` at ``times`` (Hermite when derivatives exist)."""
    times = np.asarray(times, dtype=float)
    if len(traj) == 1:
        return np.repeat(traj.states, len(times), axis=0)
    if traj.derivs is not None:
        spline = CubicHermiteSpline(traj.times, traj.states, traj.derivs, axis=0)
    else:
        spline = CubicSpline(traj.times, traj.states, axis=0)
    return spline(times)


def sample_daily(traj: Trajectory) -> Trajectory:
    """Resample a trajectory at the integer days inside its time span."""
    t0, t1 = traj.times[0], traj.times[-1]
    days = np.arange(math.ceil(t0 - 1e-12), math.floor(t1 + 1e-12) + 1, dtype=float)
    if len(days) == 0:
        raise ValueError("trajectory does not contain an integer day")
    if len(traj) == 1:
        return Trajectory(days, traj.states.copy(), traj.derivs, dict(traj.metadata, sampled="daily"))
    if traj.derivs is not None:
        spline = CubicHermiteSpline(traj.times, traj.states, traj.derivs, axis=0)
    else:
        spline = CubicSpline(traj.times, traj.states, axis=0)
    states = spline(days)
    # pin knots exactly; avoids rounding noise at coinciding sample times
    idx = np.searchsorted(traj.times, days)
    hit = (idx < len(traj)) & (traj.times[np.minimum(idx, len(traj) - 1)] == days)
    states[hit] = traj.states[idx[hit]]
    derivs = spline.derivative()(days)
    return Trajectory(days, states, derivs, dict(traj.metadata, sampled="daily"))
