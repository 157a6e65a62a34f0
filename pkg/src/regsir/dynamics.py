"""Model equations for the SIR epidemic regulated by adaptive social distancing.

The contact rate ``beta`` obeys ``beta' = -alpha * (g(beta) - h(u * I))`` where
``g`` is increasing (natural relaxation) and ``h`` is decreasing (the contact
rate society aims for when ``I`` infectives are around).  The infection rate
factors as ``c * beta``.

Four systems are exposed:

* full   : (S, I, R, beta), the SIR compartments plus the contact-rate law
* fast   : (I, beta) with ``c_s = c * S`` frozen
* log-fast : (p, beta) with ``p = ln I``
* slow   : rescaled susceptibles ``S_tilde = epsilon * S`` on the slow time
  scale ``tau = epsilon * t`` with the fast variables at their QSS
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable, NamedTuple

import numpy as np
from scipy.optimize import bisect

from . import kernels
from .errors import DivergenceError, DomainError, ModelEvaluationError, RegSIRError

__all__ = [
    "ContactRateLaw",
    "MonodLaw",
    "EpidemicParams",
    "FullState",
    "FastState",
    "LogFastState",
    "RangeError",
    "a4_holds",
    "rhs_full",
    "rhs_fast",
    "rhs_log_fast",
    "rhs_slow",
    "monod_threshold",
    "monod_closed_form_susceptibles",
    "monod_closed_form_infectives",
    "measured_output",
    "simulate_monod_output",
    "full_field",
    "fast_field",
    "log_fast_field",
    "slow_field",
]

# relative margin for open-interval membership tests
INTERIOR_MARGIN = 1e-12
BISECT_RTOL = 1e-12
_LOG_MAX = math.log(np.finfo(float).max)


class RangeError(RegSIRError, OverflowError):
    """A log-coordinate is too large to map back to infectives."""


class ContactRateLaw:
    """The monotone pair (g, h) of the contact-rate regulation law.

    ``g`` maps a contact rate to a rate and must be strictly increasing and
    nonnegative on ``[0, inf)``; ``h`` maps the dimensionless perceived
    infection level ``u * I`` to a rate and must be strictly decreasing and
    positive.  Inverses and derivatives are optional; when omitted they are
    computed by bracketing bisection and central differences.

    ``h_inf`` is ``lim h(x)`` as ``x -> inf`` (the open lower end of the image
    of ``h``) and ``g_sup`` the supremum of the image of ``g``.  Both are
    estimated by sampling large arguments when not supplied.
    """

    def __init__(
        self,
        g: Callable[[float], float],
        h: Callable[[float], float],
        descriptor: str = "custom",
        *,
        g_inv: Callable[[float], float] | None = None,
        h_inv: Callable[[float], float] | None = None,
        dg: Callable[[float], float] | None = None,
        dh: Callable[[float], float] | None = None,
        h_inf: float | None = None,
        g_sup: float | None = None,
    ):
        self._g = g
        self._h = h
        self.descriptor = descriptor
        self._g_inv = g_inv
        self._h_inv = h_inv
        self._dg = dg
        self._dh = dh
        self._h_inf = h_inf
        self._g_sup = g_sup

    def __repr__(self):
        return f"{type(self).__name__}({self.descriptor!r})"

    def _checked(self, name, fn, x):
        try:
            val = float(fn(x))
        except DomainError:
            raise
        except (ArithmeticError, ValueError) as exc:
            raise ModelEvaluationError(
                f"law {self.descriptor!r}: {name}({x!r}) failed: {exc}"
            ) from exc
        if not math.isfinite(val):
            raise ModelEvaluationError(
                f"law {self.descriptor!r}: {name}({x!r}) is not finite ({val})"
            )
        return val

    def g(self, beta: float) -> float:
        return self._checked("g", self._g, beta)

    def h(self, x: float) -> float:
        return self._checked("h", self._h, x)

    def g_prime(self, beta: float) -> float:
        if self._dg is not None:
            return self._checked("g'", self._dg, beta)
        return _derivative(self.g, beta)

    def h_prime(self, x: float) -> float:
        if self._dh is not None:
            return self._checked("h'", self._dh, x)
        return _derivative(self.h, x)

    def h_infimum(self) -> float:
        if self._h_inf is not None:
            return float(self._h_inf)
        return min(_sample_large(self._h))

    def g_supremum(self) -> float:
        if self._g_sup is not None:
            return float(self._g_sup)
        vals = _sample_large(self._g)
        # overflow before 1e300 means g is unbounded
        return max(vals) if len(vals) == 31 else math.inf

    def image_h(self) -> tuple[float, float]:
        """Return ``(inf, h(0))``; the image of h on [0, inf) is ``(inf, h(0)]``."""
        return self.h_infimum(), self.h(0.0)

    def image_g(self) -> tuple[float, float]:
        """Return ``(g(0), sup)``; the image of g on [0, inf) is ``[g(0), sup)``."""
        return self.g(0.0), self.g_supremum()

    def g_inverse(self, y: float) -> float:
        if self._g_inv is not None:
            return self._checked("g^-1", self._g_inv, y)
        lo, hi = self.image_g()
        if not lo <= y < hi:
            raise DomainError(f"{y!r} outside image of g {[lo, hi]}")
        if y == lo:
            return 0.0
        b = _expand_bracket(lambda z: self.g(z) - y, increasing=True)
        return bisect(
            lambda z: self.g(z) - y, 0.0, b, xtol=1e-300, rtol=BISECT_RTOL, maxiter=2000
        )

    def h_inverse(self, y: float) -> float:
        if self._h_inv is not None:
            return self._checked("h^-1", self._h_inv, y)
        lo, hi = self.image_h()
        if not lo < y <= hi:
            raise DomainError(f"{y!r} outside image of h {(lo, hi)}")
        if y == hi:
            return 0.0
        b = _expand_bracket(lambda x: self.h(x) - y, increasing=False)
        return bisect(
            lambda x: self.h(x) - y, 0.0, b, xtol=1e-300, rtol=BISECT_RTOL, maxiter=2000
        )


def _sample_large(f):
    vals = []
    for k in range(0, 301, 10):
        try:
            v = float(f(10.0**k))
        except (ArithmeticError, ValueError):
            break
        if not math.isfinite(v):
            break
        vals.append(v)
    return vals


def _expand_bracket(f, increasing):
    b = 1.0
    for _ in range(1100):
        v = f(b)
        if (v > 0) if increasing else (v < 0):
            return b
        b *= 2.0
    raise DomainError("could not bracket the inverse")


def _derivative(f, x):
    step = 1e-6 * max(1.0, abs(x))
    if x - step < 0.0:
        # one-sided second-order stencil; laws are only defined on [0, inf)
        return (-3.0 * f(x) + 4.0 * f(x + step) - f(x + 2 * step)) / (2 * step)
    return (f(x + step) - f(x - step)) / (2 * step)


class MonodLaw(ContactRateLaw):
    """Monod (Michaelis-Menten) inhibition: ``h(x) = K / (1 + x)``, ``g(z) = z``.

    ``K`` is the nominal contact rate, reached when there are no infectives.
    """

    def __init__(self, K: float):
        if not (math.isfinite(K) and K > 0):
            raise DomainError(f"Monod K must be positive, got {K!r}")
        self.K = float(K)
        super().__init__(
            self._g_monod,
            self._h_monod,
            "monod",
            g_inv=self._g_monod,
            h_inv=self._h_inv_monod,
            dg=self._dg_monod,
            dh=self._dh_monod,
            h_inf=0.0,
            g_sup=math.inf,
        )

    def __repr__(self):
        return f"MonodLaw(K={self.K!r})"

    def __eq__(self, other):
        return isinstance(other, MonodLaw) and other.K == self.K

    def __hash__(self):
        return hash(("monod", self.K))

    @staticmethod
    def _g_monod(z):
        return z

    @staticmethod
    def _dg_monod(z):
        return 1.0

    def _h_monod(self, x):
        return self.K / (1.0 + x)

    def _dh_monod(self, x):
        return -self.K / (1.0 + x) ** 2

    def _h_inv_monod(self, y):
        if not 0.0 < y <= self.K:
            raise DomainError(f"{y!r} outside image of h (0, {self.K!r}]")
        return self.K / y - 1.0


@dataclass(frozen=True)
class EpidemicParams:
    """Biological and societal constants.

    c       intrinsic infection rate, 1/(person day)
    gamma   removal rate, 1/day
    alpha   relaxation rate of the contact rate, 1/day
    u       perception gain, 1/person (``u * I`` is dimensionless)
    epsilon population rescaling, ``S_tilde = epsilon * S``
    """

    c: float
    gamma: float
    alpha: float
    u: float
    epsilon: float = 1e-6

    def __post_init__(self):
        for name in ("c", "gamma", "alpha", "u", "epsilon"):
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and math.isfinite(v) and v > 0):
                raise DomainError(f"{name} must be a positive finite number, got {v!r}")

    @property
    def c_tilde(self) -> float:
        """Rescaled infection rate ``c / epsilon``."""
        return self.c / self.epsilon

    def replace(self, **changes) -> "EpidemicParams":
        return replace(self, **changes)


class FullState(NamedTuple):
    S: float
    I: float
    R: float
    beta: float


class FastState(NamedTuple):
    I: float
    beta: float
    c_s: float


class LogFastState(NamedTuple):
    p: float
    beta: float


def a4_holds(law: ContactRateLaw, gamma: float, c_s: float) -> bool:
    """True when ``g(gamma / c_s)`` lies strictly inside the image of ``h``."""
    if not c_s > 0:
        return False
    target = gamma / c_s
    if not math.isfinite(target):
        return False
    gv = law.g(target)
    lo, hi = law.image_h()
    margin = INTERIOR_MARGIN * max(abs(hi), abs(lo), abs(gv))
    return lo + margin < gv < hi - margin


def rhs_full(state, params: EpidemicParams, law: ContactRateLaw) -> FullState:
    """Derivatives of (S, I, R, beta) for the full regulated SIR model."""
    S, I, R, beta = state
    inflow = params.c * beta * S * I
    dS = -inflow
    dI = inflow - params.gamma * I
    # dR is built so that dS + dI + dR is exactly 0.0 in floating point
    dR = -(dS + dI)
    dbeta = -params.alpha * (law.g(beta) - law.h(params.u * I))
    return FullState(dS, dI, dR, dbeta)


def rhs_fast(state, params: EpidemicParams, law: ContactRateLaw) -> FastState:
    """Derivatives of the fast subsystem; the ``c_s`` slot of the result is 0."""
    I, beta, c_s = state
    dI = (c_s * beta - params.gamma) * I
    dbeta = -params.alpha * (law.g(beta) - law.h(params.u * I))
    return FastState(dI, dbeta, 0.0)


def rhs_log_fast(state, params: EpidemicParams, law: ContactRateLaw, c_s: float) -> LogFastState:
    """Fast subsystem in ``p = ln I`` coordinates."""
    p, beta = state
    if not math.isfinite(p):
        raise DomainError(f"log-infectives must be finite, got {p!r}")
    lx = p + math.log(params.u)
    if lx > _LOG_MAX:
        raise RangeError(f"u * exp(p) overflows for p={p!r}")
    dp = c_s * beta - params.gamma
    dbeta = -params.alpha * (law.g(beta) - law.h(math.exp(lx)))
    return LogFastState(dp, dbeta)


def rhs_slow(S_tilde: float, params: EpidemicParams, law: ContactRateLaw) -> float:
    """Slow-time derivative ``dS_tilde/dtau`` with the fast variables at QSS.

    Zero wherever the endemic state does not exist.
    """
    if S_tilde < 0:
        raise DomainError(f"S_tilde must be nonnegative, got {S_tilde!r}")
    c_s = params.c_tilde * S_tilde
    if not a4_holds(law, params.gamma, c_s):
        return 0.0
    return -(params.gamma / params.u) * law.h_inverse(law.g(params.gamma / c_s))


def monod_threshold(params: EpidemicParams, K: float) -> float:
    """Minimum rescaled susceptibles ``S* = gamma / (c_tilde K)`` for an endemic state."""
    return params.gamma / (params.c_tilde * K)


def _closed_form_setup(S0, params, K):
    s_star = monod_threshold(params, K)
    if not S0 > s_star:
        raise DomainError(f"closed form needs S0 > S* = {s_star!r}, got {S0!r}")
    rate = params.c_tilde * K * params.epsilon / params.u
    return s_star, rate


def monod_closed_form_susceptibles(t, S0: float, params: EpidemicParams, K: float):
    """Rescaled susceptibles along the slow manifold, in days.

    ``S(t) = S* + (S0 - S*) exp(-c_tilde K epsilon t / u)``.
    """
    s_star, rate = _closed_form_setup(S0, params, K)
    return s_star + (S0 - s_star) * np.exp(-rate * np.asarray(t, dtype=float))


def monod_closed_form_infectives(
    t, S0: float, params: EpidemicParams, K: float, *, as_printed: bool = False
):
    """Infectives along the slow manifold, in persons.

    The default evaluates the QSS map on the closed-form susceptibles,
    ``I(t) = (S(t) / S* - 1) / u = (S0 - S*) exp(-rate t) / (u S*)``.

    ``as_printed=True`` returns ``(S0 - S*) exp(-rate t) / u`` without the
    ``1 / S*`` factor; it coincides with the QSS map only when ``S* = 1``.
    """
    s_star, rate = _closed_form_setup(S0, params, K)
    decay = (S0 - s_star) * np.exp(-rate * np.asarray(t, dtype=float)) / params.u
    if as_printed:
        return decay
    return decay / s_star


def measured_output(S_tilde, beta_hat, I):
    """Daily incidence ``y = S_tilde * beta_hat * I`` (normalised ``c_tilde = 1``)."""
    return S_tilde * beta_hat * I


def simulate_monod_output(
    gamma: float,
    alpha: float,
    K: float,
    u: float,
    I0: float,
    beta0: float,
    S_tilde: float,
    n_out: int,
    interval: float = 1.0,
    *,
    c_tilde: float = 1.0,
    max_dt: float = 0.05,
):
    """Integrate the Monod fast system and return ``(states, y)`` at ``n_out`` samples.

    Samples are spaced ``interval`` days apart starting at t = 0.  The run uses
    fixed-step RK4 with ``dt <= max_dt`` dividing ``interval``; the output is
    therefore a smooth function of the parameters, which keeps finite
    differences and simplex searches well behaved.  ``c_tilde = 1`` is the
    normalised model used for fitting.
    """
    steps = max(1, math.ceil(interval / max_dt - 1e-9))
    dt = interval / steps
    c_s = c_tilde * S_tilde
    try:
        states = kernels.monod_fast_rk4(
            float(I0), float(beta0), c_s, gamma, alpha, K, u, dt, int(n_out), steps
        )
    except FloatingPointError as exc:
        raise DivergenceError(
            f"{exc} (gamma={gamma!r}, alpha={alpha!r}, K={K!r}, u={u!r}, "
            f"I0={I0!r}, beta0={beta0!r}, S_tilde={S_tilde!r})"
        ) from exc
    y = c_s * states[:, 1] * states[:, 0]
    return states, y


# ---------------------------------------------------------------------------
# array vector fields for the integrator


def full_field(params: EpidemicParams, law: ContactRateLaw, u: float | None = None):
    c, gamma, alpha = params.c, params.gamma, params.alpha
    u = params.u if u is None else u
    g, h = law.g, law.h

    def f(t, x):
        S, I, _, beta = x
        inflow = c * beta * S * I
        rem = gamma * I
        return np.array([-inflow, inflow - rem, rem, -alpha * (g(beta) - h(u * I))])

    f.name = "full"
    return f


def fast_field(params: EpidemicParams, law: ContactRateLaw, c_s: float, u: float | None = None):
    gamma, alpha = params.gamma, params.alpha
    u = params.u if u is None else u
    g, h = law.g, law.h

    def f(t, x):
        I, beta = x
        return np.array([(c_s * beta - gamma) * I, -alpha * (g(beta) - h(u * I))])

    f.name = "fast"
    return f


def log_fast_field(params: EpidemicParams, law: ContactRateLaw, c_s: float):
    def f(t, x):
        return np.array(rhs_log_fast((x[0], x[1]), params, law, c_s))

    f.name = "log-fast"
    return f


def slow_field(params: EpidemicParams, law: ContactRateLaw, *, fast_time: bool = True):
    """Vector field of the slow system.

    With ``fast_time`` the derivative is taken w.r.t. original time in days
    (``epsilon * dS/dtau``), otherwise w.r.t. the slow time ``tau``.
    """
    scale = params.epsilon if fast_time else 1.0

    def f(t, x):
        return np.array([scale * rhs_slow(max(x[0], 0.0), params, law)])

    f.name = "slow"
    return f
