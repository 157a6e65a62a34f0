"""Estimating the normalised Monod model from daily incidence data.

With the infection-rate scale fixed at ``c_tilde = 1`` the fitted model is

    I'    = (S_tilde beta_hat - gamma) I
    beta_hat' = -alpha (beta_hat - K / (1 + u I))
    y     = S_tilde beta_hat I

with ``S_tilde`` the rescaled population (held fixed).  The unknowns are
``gamma, alpha, K, u`` and the initial conditions ``I0, beta_hat0``.
"""
from __future__ import annotations

import csv
import datetime as dt
import logging
import math
import warnings
from dataclasses import asdict, dataclass, field
from typing import NamedTuple

import numpy as np

from .analysis import identifiability_rank
from .dynamics import simulate_monod_output
from .errors import DataError, DivergenceError, FitError, IdentifiabilityError
from .optimize import nelder_mead

__all__ = [
    "IncidenceSeries",
    "MonodFitParams",
    "FitProblem",
    "FitResult",
    "DEFAULT_BOUNDS",
    "load_incidence",
    "moving_average",
    "simulate_fit_output",
    "loss",
    "fit",
]

log = logging.getLogger(__name__)

PARAM_NAMES = ("gamma", "alpha", "K", "u", "I0", "beta0")
DEFAULT_BOUNDS = {
    "gamma": (0.01, 1.0),
    "alpha": (0.001, 1.0),
    "K": (1e-4, 1.0),
    "u": (1e-7, 1e-1),
    "I0": (1.0, 1e6),
    "beta0": (1e-5, 1.0),
}
MIN_WINDOW = 30


class MonodFitParams(NamedTuple):
    gamma: float
    alpha: float
    K: float
    u: float


def moving_average(values, window: int = 7) -> np.ndarray:
    """Centred moving average; only positions with a complete window are returned.

    The result has ``len(values) - window + 1`` entries, the first of which is
    centred on ``values[window // 2]``.
    """
    if window < 1 or window % 2 == 0:
        raise ValueError(f"window must be odd and >= 1, got {window}")
    values = np.asarray(values, dtype=float)
    if len(values) < window:
        return np.empty(0)
    return np.convolve(values, np.full(window, 1.0 / window), mode="valid")


@dataclass(frozen=True)
class IncidenceSeries:
    dates: tuple
    raw: np.ndarray
    region: str = ""
    population: float | None = None
    window: int = 7
    smoothed: np.ndarray = field(init=False)

    def __post_init__(self):
        raw = np.array(self.raw, dtype=float)
        if len(raw) != len(self.dates):
            raise DataError("dates and counts differ in length")
        raw.flags.writeable = False
        object.__setattr__(self, "raw", raw)
        object.__setattr__(self, "dates", tuple(self.dates))
        sm = np.full(len(raw), np.nan)
        half = self.window // 2
        ma = moving_average(raw, self.window)
        sm[half : half + len(ma)] = ma
        sm.flags.writeable = False
        object.__setattr__(self, "smoothed", sm)

    def __len__(self):
        return len(self.raw)


def load_incidence(
    path, cumulative: bool = False, *, region: str = "", population: float | None = None
) -> IncidenceSeries:
    """Read a ``date,cases`` CSV into an :class:`IncidenceSeries`.

    Cumulative counts are differenced.  Negative daily values (reporting
    corrections) are clamped to 0 and missing dates are filled with 0; both
    are reported through :mod:`warnings` and the module logger.
    """
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise DataError(f"{path}: empty file")
        cols = [h.strip().lower() for h in header]
        try:
            i_date, i_cases = cols.index("date"), cols.index("cases")
        except ValueError:
            raise DataError(f"{path}: header must contain 'date' and 'cases', got {header}")
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            try:
                day = dt.date.fromisoformat(row[i_date].strip())
                count = float(row[i_cases])
            except (IndexError, ValueError) as exc:
                raise DataError(f"{path}: cannot parse row {lineno}: {row!r} ({exc})") from None
            if not math.isfinite(count):
                raise DataError(f"{path}: non-finite count on row {lineno}")
            rows.append((day, count))
    if not rows:
        raise DataError(f"{path}: no data rows")
    rows.sort(key=lambda r: r[0])
    for (d0, _), (d1, _) in zip(rows, rows[1:]):
        if d0 == d1:
            raise DataError(f"{path}: duplicate date {d0}")
    dates = [r[0] for r in rows]
    counts = np.array([r[1] for r in rows])
    if cumulative:
        if len(counts) < 2:
            raise DataError(f"{path}: cumulative series needs at least two rows")
        counts = np.diff(counts)
        dates = dates[1:]
    negative = int(np.sum(counts < 0))
    if negative:
        msg = f"{path}: clamped {negative} negative daily value(s) to 0"
        log.warning(msg)
        warnings.warn(msg, stacklevel=2)
        counts = np.maximum(counts, 0.0)
    dates, counts = _fill_gaps(dates, counts, path)
    if len(counts) == 0:
        raise DataError(f"{path}: empty series")
    return IncidenceSeries(tuple(dates), counts, region=region, population=population)


def _fill_gaps(dates, counts, path):
    first, last = dates[0], dates[-1]
    n = (last - first).days + 1
    if n == len(dates):
        return dates, counts
    full = np.zeros(n)
    for d, c in zip(dates, counts):
        full[(d - first).days] = c
    msg = f"{path}: filled {n - len(dates)} missing date(s) with 0"
    log.warning(msg)
    warnings.warn(msg, stacklevel=3)
    return [first + dt.timedelta(days=k) for k in range(n)], full


def simulate_fit_output(params, init, S_tilde: float, days: int, *, c_tilde: float = 1.0):
    """Daily incidence ``y`` at t = 0, 1, ..., days - 1 for the normalised model.

    ``params`` is ``(gamma, alpha, K, u)`` and ``init`` is ``(I0, beta_hat0)``.
    The integration grid contains every integer day, so the daily values are
    grid values (no interpolation).
    """
    gamma, alpha, K, u = params
    I0, beta0 = init
    if days < 1:
        raise ValueError("days must be >= 1")
    _, y = simulate_monod_output(gamma, alpha, K, u, I0, beta0, S_tilde, days, 1.0, c_tilde=c_tilde)
    return y


@dataclass(frozen=True)
class FitProblem:
    """Data, fixed population scale and search box for a fit.

    ``window`` holds inclusive day indices into ``data`` over which smoothed
    residuals are taken; it defaults to the whole range where the 7-day
    average exists.  The model clock starts ``window[0] - 3`` (half the
    smoothing width) days into the data, so ``I0`` and ``beta0`` refer to that
    day.  The model curve goes through the same moving average as the data.
    """

    data: IncidenceSeries
    S_tilde: float
    window: tuple[int, int] | None = None
    bounds: dict = field(default_factory=lambda: dict(DEFAULT_BOUNDS))
    loss_space: str = "linear"

    def __post_init__(self):
        half = self.data.window // 2
        n = len(self.data)
        window = self.window or (half, n - 1 - half)
        a, b = int(window[0]), int(window[1])
        if a < half or b > n - 1 - half or b < a:
            raise ValueError(
                f"window {window} must lie inside the smoothed range [{half}, {n - 1 - half}]"
            )
        if b - a + 1 < MIN_WINDOW:
            raise ValueError(f"window must contain at least {MIN_WINDOW} days")
        object.__setattr__(self, "window", (a, b))
        bounds = dict(DEFAULT_BOUNDS)
        bounds.update(self.bounds)
        for k, (lo, hi) in bounds.items():
            if not 0 < lo < hi:
                raise ValueError(f"bounds for {k} must be positive and increasing")
        object.__setattr__(self, "bounds", bounds)
        if self.loss_space not in ("linear", "log"):
            raise ValueError("loss_space must be 'linear' or 'log'")
        if not self.S_tilde > 0:
            raise ValueError("S_tilde must be positive")

    @property
    def origin(self) -> int:
        return self.window[0] - self.data.window // 2

    @property
    def model_days(self) -> int:
        return self.window[1] - self.window[0] + self.data.window

    @property
    def target(self) -> np.ndarray:
        a, b = self.window
        return self.data.smoothed[a : b + 1]

    def lower(self):
        return np.array([self.bounds[k][0] for k in PARAM_NAMES])

    def upper(self):
        return np.array([self.bounds[k][1] for k in PARAM_NAMES])


def model_curve(problem: FitProblem, params, init) -> np.ndarray:
    """Smoothed model incidence aligned with ``problem.target``."""
    y = simulate_fit_output(params, init, problem.S_tilde, problem.model_days)
    return moving_average(y, problem.data.window)


def _residual_loss(problem, curve):
    target = problem.target
    if problem.loss_space == "log":
        r = np.log1p(np.maximum(curve, 0.0)) - np.log1p(target)
    else:
        r = curve - target
    return float(np.dot(r, r))


def loss(problem: FitProblem, params, init) -> float:
    """Sum of squared residuals between smoothed model and smoothed data."""
    return _residual_loss(problem, model_curve(problem, params, init))


@dataclass(frozen=True)
class FitResult:
    params: MonodFitParams
    init: tuple[float, float]
    loss: float
    rms_error: float
    iterations: int
    converged: bool
    restarts_used: int
    evaluations: int
    starts: int
    best_so_far: tuple[float, ...]
    origin: int

    def to_dict(self) -> dict:
        d = asdict(self)
        d["params"] = dict(self.params._asdict())
        d["init"] = {"I0": self.init[0], "beta0": self.init[1]}
        d["best_so_far"] = list(self.best_so_far)
        return d


def fit(
    problem: FitProblem,
    seeds: int = 16,
    *,
    rng: np.random.Generator | int | None = 0,
    check_identifiability: bool = True,
    max_evals: int = 20_000,
    xtol: float = 1e-10,
    screen_xtol: float = 1e-3,
    polish: int = 3,
) -> FitResult:
    """Least-squares fit of ``(gamma, alpha, K, u, I0, beta0)``.

    A bounded simplex search runs in log-parameter space from ``seeds``
    starting points: the geometric centre of the box followed by log-uniform
    random draws.  Every start is first run to a loose ``screen_xtol``; the
    ``polish`` best are then refined to ``xtol`` with simplex restarts.
    ``converged`` means the simplex diameter of the winning run fell below
    ``xtol`` in log coordinates, i.e. a relative parameter spread of about
    ``xtol``.

    Raises
    ------
    IdentifiabilityError
        The sensitivity matrix at the first start is rank deficient.
    FitError
        Every start ended at a non-finite loss.
    """
    if seeds < 1:
        raise ValueError("seeds must be >= 1")
    rng = np.random.default_rng(rng)
    lo, hi = np.log(problem.lower()), np.log(problem.upper())
    starts = [(lo + hi) / 2]
    starts += [rng.uniform(lo, hi) for _ in range(seeds - 1)]

    if check_identifiability:
        th = np.exp(starts[0])
        try:
            ident = identifiability_rank(
                dict(zip(PARAM_NAMES[:4], th[:4])),
                problem.S_tilde,
                th[4],
                th[5],
                float(problem.model_days - 1),
            )
        except DivergenceError as exc:
            raise IdentifiabilityError(f"cannot simulate the starting point: {exc}") from exc
        if ident.rank < len(PARAM_NAMES):
            raise IdentifiabilityError(
                f"sensitivity rank {ident.rank} < {len(PARAM_NAMES)} at the starting point "
                f"(singular values {ident.singular_values})"
            )

    def objective(z):
        th = np.exp(z)
        try:
            return loss(problem, th[:4], th[4:])
        except DivergenceError:
            return math.inf

    # screen every start loosely, then polish the most promising ones
    screened = [
        nelder_mead(
            objective, z0, lo, hi, step=0.1 * (hi - lo), xtol=screen_xtol,
            max_evals=max_evals, max_restarts=0,
        )
        for z0 in starts
    ]
    history = [float(v) for v in np.minimum.accumulate([r.fun for r in screened])]
    order = np.argsort([r.fun for r in screened], kind="stable")[:polish]
    best = None
    for i in order:
        cand = screened[i]
        if not math.isfinite(cand.fun):
            continue
        res = nelder_mead(
            objective, cand.x, lo, hi, step=0.01 * (hi - lo), xtol=xtol, max_evals=max_evals
        )
        res.iterations += cand.iterations
        res.evaluations += cand.evaluations
        if best is None or res.fun < best.fun:
            best = res
        history.append(float(min(history[-1], best.fun)))
    if best is None:
        best = screened[order[0]]
    if not math.isfinite(best.fun):
        raise FitError(f"all {seeds} starts diverged; last simplex diameter {best.diameter}")
    th = np.exp(best.x)
    params = MonodFitParams(*map(float, th[:4]))
    init = (float(th[4]), float(th[5]))
    final_loss = loss(problem, params, init)
    curve = model_curve(problem, params, init)
    rms = float(np.sqrt(np.mean((curve - problem.target) ** 2)))
    return FitResult(
        params=params,
        init=init,
        loss=final_loss,
        rms_error=rms,
        iterations=best.iterations,
        converged=best.converged,
        restarts_used=best.restarts,
        evaluations=best.evaluations,
        starts=seeds,
        best_so_far=tuple(history),
        origin=problem.origin,
    )
