"""Steady states, stability, the Lyapunov certificate and control experiments.

Everything here concerns the fast subsystem ``(I, beta)`` with ``c_s = c S``
frozen, except :func:`tikhonov_sweep` which compares the full three-state
system against its slow-fast reduction, and :func:`identifiability_rank`
which works on the normalised output model used for fitting.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import quad

from .dynamics import (
    ContactRateLaw,
    EpidemicParams,
    MonodLaw,
    a4_holds,
    fast_field,
    rhs_slow,
    simulate_monod_output,
)
from .errors import AssumptionError, DomainError
from .solver import IntegratorConfig, Trajectory, integrate, sample_at

__all__ = [
    "AssumptionReport",
    "SteadyStateInfo",
    "LyapunovSample",
    "AdaptationResult",
    "FCDResult",
    "TikhonovResult",
    "IdentifiabilityResult",
    "check_assumptions",
    "classify",
    "fast_jacobian",
    "disease_free_state",
    "endemic_state",
    "r0",
    "lyapunov",
    "lyapunov_along",
    "adaptation_experiment",
    "fcd_experiment",
    "assign_u",
    "tikhonov_sweep",
    "identifiability_rank",
    "slowest_rate",
]

EIG_MARGIN = 1e-10
SETTLING_BAND = 0.01
PRECISE = IntegratorConfig(method="rk45", dt=0.1, rtol=1e-10, atol=1e-12)


@dataclass(frozen=True)
class AssumptionReport:
    a1: bool
    a2: bool
    a3: bool
    a4: bool
    margins: dict = field(default_factory=dict)

    @property
    def all_hold(self) -> bool:
        return self.a1 and self.a2 and self.a3 and self.a4


@dataclass(frozen=True)
class SteadyStateInfo:
    kind: str  # "disease-free" | "endemic"
    I: float
    beta: float
    eigenvalues: tuple[complex, complex]
    classification: str  # "exp-stable" | "exp-unstable" | "marginal"

    def as_dict(self) -> dict:
        return {
            "kind": self.kind,
            "I": self.I,
            "beta": self.beta,
            "eigenvalues": [[ev.real, ev.imag] for ev in self.eigenvalues],
            "classification": self.classification,
        }


@dataclass(frozen=True)
class LyapunovSample:
    p: float
    beta: float
    V: float
    Vdot: float


def _grid(scale, n_per_decade):
    pts = np.logspace(-8, 8, 16 * n_per_decade + 1) * scale
    return np.concatenate([[0.0], pts])


def _continuous(f, xs, levels: int = 30):
    """Sample ``f`` on ``xs`` and look for jumps inside every cell.

    Each cell is bisected ``levels`` times, always following the half with the
    larger change.  For a continuous function the change over the final
    sub-cell (a ``2**-levels`` fraction) vanishes; a jump keeps its full size.
    """
    vals = np.array([f(x) for x in xs])
    if not np.all(np.isfinite(vals)):
        return False, vals
    scale = float(np.max(np.abs(vals))) or 1.0
    for a, b, fa, fb in zip(xs[:-1], xs[1:], vals[:-1], vals[1:]):
        total = abs(fb - fa)
        if total <= 1e-12 * scale:
            continue
        for _ in range(levels):
            m = 0.5 * (a + b)
            fm = f(m)
            if not math.isfinite(fm):
                return False, vals
            if abs(fm - fa) >= abs(fb - fm):
                b, fb = m, fm
            else:
                a, fa = m, fm
        if abs(fb - fa) > 0.25 * total:
            return False, vals
    return True, vals


def check_assumptions(
    law: ContactRateLaw, params: EpidemicParams, c_s: float, n_per_decade: int = 4
) -> AssumptionReport:
    """Check A1-A4 by sampling ``g`` and ``h`` on log grids over 16 decades.

    ``g`` is sampled around its natural scale ``gamma / c_s`` and ``h`` around
    1 (its argument ``u I`` is dimensionless).
    """
    if not c_s > 0:
        raise DomainError(f"c_s must be positive, got {c_s!r}")
    beta_e = params.gamma / c_s
    zs = _grid(beta_e, n_per_decade)
    xs = _grid(1.0, n_per_decade)
    try:
        g_ok, gv = _continuous(law._g, zs)
        h_ok, hv = _continuous(law._h, xs)
    except (ArithmeticError, ValueError):
        return AssumptionReport(False, False, False, False, {})
    a1 = g_ok and h_ok
    dh = np.diff(hv)
    dg = np.diff(gv)
    a2 = bool(np.all(np.isfinite(hv)) and np.all(hv > 0) and np.all(dh < 0))
    a3 = bool(np.all(np.isfinite(gv)) and np.all(gv >= 0) and np.all(dg > 0))
    margins = {
        "a2": float(min(hv.min(), (-dh).min())) if np.all(np.isfinite(hv)) else -math.inf,
        "a3": float(min(gv.min(), dg.min())) if np.all(np.isfinite(gv)) else -math.inf,
    }
    try:
        gval = law.g(beta_e)
        lo, hi = law.image_h()
        scale = max(abs(lo), abs(hi), abs(gval))
        margins["a4_upper"] = (hi - gval) / scale
        margins["a4_lower"] = (gval - lo) / scale
        a4 = a4_holds(law, params.gamma, c_s)
    except (ArithmeticError, ValueError):
        a4 = False
    return AssumptionReport(a1, a2, a3, a4, margins)


def classify(eigenvalues, margin: float = EIG_MARGIN) -> str:
    re = [complex(ev).real for ev in eigenvalues]
    if max(re) > margin:
        return "exp-unstable"
    if max(re) < -margin:
        return "exp-stable"
    return "marginal"


def fast_jacobian(I, beta, law, params, c_s, u=None) -> np.ndarray:
    """Analytic Jacobian of the fast subsystem at ``(I, beta)``."""
    u = params.u if u is None else u
    return np.array(
        [
            [c_s * beta - params.gamma, c_s * I],
            [params.alpha * u * law.h_prime(u * I), -params.alpha * law.g_prime(beta)],
        ]
    )


def disease_free_state(law, params, c_s) -> SteadyStateInfo | None:
    """``(0, g^-1(h(0)))`` when ``h(0)`` is in the image of ``g``, else ``None``."""
    h0 = law.h(0.0)
    lo, hi = law.image_g()
    if not lo <= h0 < hi:
        return None
    beta_d = law.g_inverse(h0)
    # the Jacobian is triangular at I = 0
    eigs = (complex(c_s * beta_d - params.gamma), complex(-params.alpha * law.g_prime(beta_d)))
    return SteadyStateInfo("disease-free", 0.0, beta_d, eigs, classify(eigs))


def _quadratic_roots(b, c):
    disc = complex(b * b - 4 * c)
    root = disc**0.5
    return ((-b + root) / 2, (-b - root) / 2)


def endemic_state(law, params, c_s, u=None) -> SteadyStateInfo | None:
    """Endemic equilibrium ``(h^-1(g(gamma/c_s)) / u, gamma/c_s)``, or ``None`` if A4 fails.

    Eigenvalues solve ``l^2 + alpha g'(beta_e) l - c_s I_e alpha u h'(u I_e) = 0``.
    """
    u = params.u if u is None else u
    if not a4_holds(law, params.gamma, c_s):
        return None
    beta_e = params.gamma / c_s
    x_e = law.h_inverse(law.g(beta_e))
    I_e = x_e / u
    b = params.alpha * law.g_prime(beta_e)
    c = -c_s * I_e * params.alpha * u * law.h_prime(x_e)
    eigs = _quadratic_roots(b, c)
    return SteadyStateInfo("endemic", I_e, beta_e, eigs, classify(eigs))


def slowest_rate(law, params, c_s, u=None) -> float:
    """``min(alpha, gamma, |Re l|)`` over the endemic eigenvalues."""
    ss = endemic_state(law, params, c_s, u)
    rates = [params.alpha, params.gamma]
    if ss is not None:
        rates += [abs(ev.real) for ev in ss.eigenvalues]
    return min(rates)


def r0(b: float, S0: float, gamma: float) -> float:
    """Basic reproduction number ``b S0 / gamma``; an outbreak occurs iff it exceeds 1."""
    if not (b > 0 and S0 > 0 and gamma > 0):
        raise DomainError("r0 needs positive b, S0 and gamma")
    return b * S0 / gamma


def _require_endemic(law, params, c_s):
    ss = endemic_state(law, params, c_s)
    if ss is None:
        raise AssumptionError(
            f"no endemic state: g(gamma/c_s) is not interior to the image of h (c_s={c_s!r})"
        )
    return ss


def _log_integral(law, params, p_e, p):
    """``int_{p_e}^{p} (h(u e^{p_e}) - h(u e^s)) ds``."""
    u = params.u
    h_e = law.h(u * math.exp(p_e))
    if isinstance(law, MonodLaw):
        # K [ln((1 + x) / (1 + x_e)) - w d] with x = x_e e^d, w = x_e / (1 + x_e)
        d = p - p_e
        lx_e = math.log(u) + p_e
        w = 1.0 / (1.0 + math.exp(-lx_e))
        if abs(d) < 1.0:
            val = math.log1p(w * math.expm1(d)) - w * d
        else:
            val = _log1p_exp(lx_e + d) - _log1p_exp(lx_e) - w * d
        # the integrand has the sign of d, so the integral is >= 0 up to rounding
        return law.K * max(val, 0.0)
    val, _ = quad(
        lambda s: h_e - law.h(u * math.exp(s)), p_e, p, epsabs=1e-10, epsrel=1e-10, limit=200
    )
    return val


def _log1p_exp(z):
    if z > 30:
        return z + math.log1p(math.exp(-z))
    return math.log1p(math.exp(z))


def lyapunov(p, beta, law, params, c_s) -> LyapunovSample:
    """Lyapunov function of the log-coordinate fast system and its derivative.

    ``V = int_{p_e}^{p} (h(u e^{p_e}) - h(u e^s)) ds + (c_s beta - gamma)^2 / (2 alpha c_s)``

    The quadratic term carries the weight ``1 / (alpha c_s)``; with it the
    time derivative along the flow is exactly
    ``Vdot = (c_s beta - gamma) (g(gamma / c_s) - g(beta)) <= 0``.
    """
    ss = _require_endemic(law, params, c_s)
    p_e = math.log(ss.I)
    w = c_s * beta - params.gamma
    V = _log_integral(law, params, p_e, p) + w * w / (2.0 * params.alpha * c_s)
    Vdot = w * (law.g(params.gamma / c_s) - law.g(beta))
    return LyapunovSample(p, beta, V, Vdot)


def lyapunov_along(traj: Trajectory, law, params, c_s) -> np.ndarray:
    """V evaluated on the ``(I, beta)`` samples of a fast-subsystem trajectory."""
    return np.array(
        [lyapunov(math.log(I), b, law, params, c_s).V for I, b in traj.states[:, :2]]
    )


@dataclass(frozen=True)
class AdaptationResult:
    trajectory: Trajectory
    beta_target: float
    sup_deviation: float
    settling_time: float
    terminal_beta: float
    terminal_I: float
    expected_I: float


def adaptation_experiment(
    params, law, c_s, u_before, u_after, horizon=None, cfg=PRECISE
) -> AdaptationResult:
    """Step ``u`` from ``u_before`` to ``u_after`` at the ``u_before`` endemic point.

    The default horizon is ``25 / min(alpha, gamma, |Re l|)``.  The settling
    time is the first time after which ``beta`` stays in the 1% band around
    ``gamma / c_s``.
    """
    before = endemic_state(law, params, c_s, u=u_before)
    after = endemic_state(law, params, c_s, u=u_after)
    if before is None or after is None:
        raise AssumptionError("no endemic state for the requested u values")
    if horizon is None:
        horizon = 25.0 / slowest_rate(law, params, c_s, u_after)
    f = fast_field(params, law, c_s, u=u_after)
    traj = integrate(f, [before.I, before.beta], (0.0, horizon), cfg)
    target = params.gamma / c_s
    fine_t = np.linspace(0.0, horizon, max(2001, int(horizon * 10) + 1))
    beta = sample_at(traj, fine_t)[:, 1]
    dev = np.abs(beta - target)
    outside = np.nonzero(dev > SETTLING_BAND * target)[0]
    if len(outside) == 0:
        settling = 0.0
    elif outside[-1] == len(fine_t) - 1:
        settling = math.inf
    else:
        settling = float(fine_t[outside[-1] + 1])
    return AdaptationResult(
        trajectory=traj,
        beta_target=target,
        sup_deviation=float(np.max(np.abs(traj.states[:, 1] - target))),
        settling_time=settling,
        terminal_beta=float(traj.final[1]),
        terminal_I=float(traj.final[0]),
        expected_I=after.I,
    )


@dataclass(frozen=True)
class FCDResult:
    times: np.ndarray
    beta_1: np.ndarray
    beta_2: np.ndarray
    I_1: np.ndarray
    I_2: np.ndarray
    max_deviation: float
    max_identity_deviation: float


def fcd_experiment(
    params, law, c_s, q, u_bar_1, u_bar_2, horizon=None, cfg=PRECISE, n_samples=4001
) -> FCDResult:
    """Fold-change response of ``beta`` from two different base levels of ``u``.

    Each run starts at its own endemic state for ``u = u_bar`` and is driven
    with ``u = q * u_bar``.  ``max_deviation`` is ``sup |beta_1 - beta_2|``
    and ``max_identity_deviation`` is ``sup |u_bar_1 I_1 - u_bar_2 I_2|``.
    """
    runs = []
    for ub in (u_bar_1, u_bar_2):
        start = endemic_state(law, params, c_s, u=ub)
        if start is None:
            raise AssumptionError("no endemic state for the FCD base level")
        runs.append((ub, start))
    if horizon is None:
        horizon = 25.0 / slowest_rate(law, params, c_s, q * u_bar_1)
    times = np.linspace(0.0, horizon, n_samples)
    out = []
    for ub, start in runs:
        traj = integrate(
            fast_field(params, law, c_s, u=q * ub), [start.I, start.beta], (0.0, horizon), cfg
        )
        out.append(sample_at(traj, times))
    (I1, b1), (I2, b2) = out[0].T, out[1].T
    return FCDResult(
        times=times,
        beta_1=b1,
        beta_2=b2,
        I_1=I1,
        I_2=I2,
        max_deviation=float(np.max(np.abs(b1 - b2))),
        max_identity_deviation=float(np.max(np.abs(u_bar_1 * I1 - u_bar_2 * I2))),
    )


def assign_u(I_star: float, law, params, c_s) -> float:
    """Perception gain that places the endemic infectives at ``I_star``."""
    if not I_star > 0:
        raise DomainError(f"I_star must be positive, got {I_star!r}")
    if not a4_holds(law, params.gamma, c_s):
        raise AssumptionError("no endemic state exists, so no u can assign it")
    return law.h_inverse(law.g(params.gamma / c_s)) / I_star


@dataclass(frozen=True)
class TikhonovResult:
    epsilons: np.ndarray
    errors: dict  # state name -> array of sup-norm deviations, one per epsilon
    boundary_layer: float

    def ratios(self, name: str) -> np.ndarray:
        e = self.errors[name]
        return e[1:] / e[:-1]


def tikhonov_sweep(
    params: EpidemicParams,
    law: ContactRateLaw,
    S0_rescaled: float,
    epsilons,
    T_slow: float,
    I0: float,
    beta0: float,
    cfg: IntegratorConfig = PRECISE,
    layer_factor: float = 40.0,
) -> TikhonovResult:
    """Compare the full system with its slow-fast reduction for several epsilon.

    ``params.c_tilde`` is held fixed while epsilon varies (so ``c`` scales with
    epsilon).  ``T_slow`` is the window length in slow time ``tau = epsilon t``.
    The reduced solution is the slow susceptibles plus the fast QSS maps
    ``beta = gamma / (c_tilde S)`` and ``I = h^-1(g(beta)) / u``.  Deviations
    are sup-norms over the window after a boundary layer of
    ``layer_factor / min(alpha, gamma, |Re l|)`` fast-time units, with the
    eigenvalues taken at the initial susceptibles.  The fast transient decays
    no faster than ``|Re l|`` (always below ``min(alpha, gamma)``), so the
    layer must be measured in that rate for the O(epsilon) term to dominate.
    """
    c_tilde = params.c_tilde
    gamma, alpha, u = params.gamma, params.alpha, params.u
    slow = integrate(
        lambda tau, x: np.array([rhs_slow(max(x[0], 0.0), params, law)]),
        [S0_rescaled],
        (0.0, T_slow),
        IntegratorConfig(method="rk45", dt=T_slow / 100, rtol=1e-12, atol=1e-14),
    )
    layer = layer_factor / slowest_rate(law, params, c_tilde * S0_rescaled)
    errs = {"S": [], "I": [], "beta": []}
    for eps in epsilons:
        if not 0 < eps < 1:
            raise DomainError(f"epsilon must lie in (0, 1), got {eps!r}")

        def f(t, x, eps=eps):
            S, I, beta = x
            inflow = c_tilde * beta * S * I
            return np.array(
                [-eps * inflow, inflow - gamma * I, -alpha * (law.g(beta) - law.h(u * I))]
            )

        full = integrate(f, [S0_rescaled, I0, beta0], (0.0, T_slow / eps), cfg)
        keep = full.times >= layer
        t = full.times[keep]
        X = full.states[keep]
        S_bar = sample_at(slow, eps * t)[:, 0]
        beta_bar = gamma / (c_tilde * S_bar)
        I_bar = np.array([law.h_inverse(law.g(b)) for b in beta_bar]) / u
        errs["S"].append(np.max(np.abs(X[:, 0] - S_bar)))
        errs["I"].append(np.max(np.abs(X[:, 1] - I_bar)))
        errs["beta"].append(np.max(np.abs(X[:, 2] - beta_bar)))
    return TikhonovResult(
        np.asarray(epsilons, dtype=float), {k: np.array(v) for k, v in errs.items()}, layer
    )


@dataclass(frozen=True)
class IdentifiabilityResult:
    rank: int
    singular_values: np.ndarray
    names: tuple[str, ...]
    matrix: np.ndarray


def identifiability_rank(
    params,
    S_tilde: float,
    I0: float,
    beta0: float,
    horizon: float,
    *,
    n_samples: int = 60,
    rel_step: float = 1e-6,
    threshold: float = 1e-8,
    include_c_tilde: bool = False,
) -> IdentifiabilityResult:
    """Numerical local identifiability of the normalised output model.

    ``params`` supplies ``gamma, alpha, K, u`` (attributes or mapping).  The
    sensitivity matrix holds ``d y(t_k) / d ln(theta_j)`` by central
    differences with relative step ``rel_step`` for
    ``theta = (gamma, alpha, K, u, I0, beta0)`` at ``n_samples`` equally
    spaced times in ``[0, horizon]`` (a single sample when ``horizon == 0``).
    ``include_c_tilde`` appends the un-normalised infection rate ``c_tilde``
    (nominal value 1) as a seventh column.  The rank counts singular values
    with ``s_i / s_1 > threshold``.
    """
    get = params.get if isinstance(params, dict) else lambda k: getattr(params, k)
    names = ["gamma", "alpha", "K", "u", "I0", "beta0"]
    theta = np.array([get("gamma"), get("alpha"), get("K"), get("u"), I0, beta0], dtype=float)
    if include_c_tilde:
        names.append("c_tilde")
        theta = np.append(theta, 1.0)
    if np.any(theta <= 0):
        raise DomainError("identifiability_rank needs positive inputs")
    if horizon > 0:
        n_out, interval = max(n_samples, 2), horizon / (max(n_samples, 2) - 1)
    else:
        n_out, interval = 1, 1.0

    def output(th):
        c_t = th[6] if include_c_tilde else 1.0
        return simulate_monod_output(
            th[0], th[1], th[2], th[3], th[4], th[5], S_tilde, n_out, interval, c_tilde=c_t
        )[1]

    cols = []
    for j in range(len(theta)):
        up, dn = theta.copy(), theta.copy()
        up[j] *= 1 + rel_step
        dn[j] *= 1 - rel_step
        cols.append((output(up) - output(dn)) / (2 * rel_step))
    M = np.column_stack(cols)
    sv = np.linalg.svd(M, compute_uv=False)
    rank = int(np.sum(sv > threshold * sv[0])) if sv[0] > 0 else 0
    return IdentifiabilityResult(rank, sv, tuple(names), M)
