"""Bounded Nelder-Mead simplex search.

Coordinates outside the box are folded back by reflection at the bounds, so
the objective is only ever evaluated at admissible points.  The run stops when
the simplex diameter (max-norm distance of every vertex from the best one)
falls below ``xtol`` or when the evaluation budget is spent.  A converged
simplex is rebuilt around the best point and searched again until a restart
no longer improves the objective.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["SimplexResult", "reflect_into", "nelder_mead"]


@dataclass
class SimplexResult:
    x: np.ndarray
    fun: float
    converged: bool
    iterations: int
    evaluations: int
    restarts: int
    diameter: float


def reflect_into(x, lower, upper):
    """Fold ``x`` into ``[lower, upper]`` by mirror reflection at the bounds."""
    x = np.asarray(x, dtype=float)
    width = upper - lower
    y = np.mod(x - lower, 2 * width)
    y = np.where(y > width, 2 * width - y, y)
    return lower + y


def _diameter(sim):
    return float(np.max(np.abs(sim[1:] - sim[0]))) if len(sim) > 1 else 0.0


def nelder_mead(
    f,
    x0,
    lower,
    upper,
    step,
    *,
    xtol: float = 1e-10,
    max_evals: int = 20_000,
    max_restarts: int = 5,
) -> SimplexResult:
    """Minimise ``f`` over the box ``[lower, upper]`` starting from ``x0``.

    Uses the dimension-adapted coefficients of Gao and Han (2012).
    ``step`` sets the edge lengths of the initial (and every restart) simplex.
    """
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    step = np.broadcast_to(np.asarray(step, dtype=float), lower.shape)
    n = len(lower)
    rho, chi = 1.0, 1.0 + 2.0 / n
    psi, sigma = 0.75 - 1.0 / (2 * n), 1.0 - 1.0 / n

    evals = 0

    def F(x):
        nonlocal evals
        evals += 1
        v = f(x)
        return v if np.isfinite(v) else np.inf

    best = reflect_into(x0, lower, upper)
    best_f = F(best)
    iterations = 0
    restarts = 0
    converged = False
    diameter = np.inf
    while True:
        sim = np.empty((n + 1, n))
        sim[0] = best
        for i in range(n):
            v = best.copy()
            v[i] += step[i]
            sim[i + 1] = reflect_into(v, lower, upper)
        fs = np.empty(n + 1)
        fs[0] = best_f
        for i in range(1, n + 1):
            fs[i] = F(sim[i])
        start_f = best_f
        converged = False
        while evals < max_evals:
            order = np.argsort(fs, kind="stable")
            sim, fs = sim[order], fs[order]
            diameter = _diameter(sim)
            if diameter <= xtol:
                converged = True
                break
            iterations += 1
            centroid = sim[:-1].mean(axis=0)
            xr = reflect_into(centroid + rho * (centroid - sim[-1]), lower, upper)
            fr = F(xr)
            if fr < fs[0]:
                xe = reflect_into(centroid + rho * chi * (centroid - sim[-1]), lower, upper)
                fe = F(xe)
                if fe < fr:
                    sim[-1], fs[-1] = xe, fe
                else:
                    sim[-1], fs[-1] = xr, fr
                continue
            if fr < fs[-2]:
                sim[-1], fs[-1] = xr, fr
                continue
            if fr < fs[-1]:
                xc = reflect_into(centroid + psi * rho * (centroid - sim[-1]), lower, upper)
                fc = F(xc)
                if fc <= fr:
                    sim[-1], fs[-1] = xc, fc
                    continue
            else:
                xc = reflect_into(centroid - psi * (centroid - sim[-1]), lower, upper)
                fc = F(xc)
                if fc < fs[-1]:
                    sim[-1], fs[-1] = xc, fc
                    continue
            for i in range(1, n + 1):
                sim[i] = sim[0] + sigma * (sim[i] - sim[0])
                fs[i] = F(sim[i])
        i_best = int(np.argmin(fs))
        best, best_f = sim[i_best].copy(), float(fs[i_best])
        if not converged or restarts >= max_restarts or evals >= max_evals:
            break
        improved = start_f - best_f
        if restarts > 0 and not improved > 1e-12 * max(abs(best_f), 1e-300):
            break
        restarts += 1
    return SimplexResult(best, best_f, converged, iterations, evals, restarts, diameter)
