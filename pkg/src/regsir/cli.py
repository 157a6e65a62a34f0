"""Command-line interface: simulate, analyze, fit, sweep and assign.

Exit codes: 0 success, 2 invalid input, 3 numerical failure, 4 the endemic
state does not exist (assumption A4 fails).
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import analysis, dynamics, fitting
from .dynamics import EpidemicParams, MonodLaw
from .errors import (
    AssumptionError,
    DataError,
    DomainError,
    FitError,
    IntegrationError,
    ModelEvaluationError,
)
from .solver import IntegratorConfig, integrate, sample_daily

EXIT_OK, EXIT_INPUT, EXIT_NUMERIC, EXIT_ASSUMPTION = 0, 2, 3, 4
MODELS = ("full", "fast", "log-fast", "slow", "closed-form-monod")

# default parameters; "cs" is c * S(0), held fixed by the population sweep
DEFAULTS = dict(gamma=0.091, alpha=0.0679, K=0.0229, u=0.0008, S0=80e6, cs=17.5392)


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    """Parameters for every sub-command; the JSON file uses these field names.

    Rates are per day.  ``c`` is per person and defaults to ``c_s / S0``;
    ``c_s`` defaults to ``c * S0``.  ``beta0`` defaults to ``K``.
    """

    gamma: float = DEFAULTS["gamma"]
    alpha: float = DEFAULTS["alpha"]
    K: float = DEFAULTS["K"]
    u: float = DEFAULTS["u"]
    epsilon: float = 1e-6
    S0: float = DEFAULTS["S0"]
    c: float | None = None
    c_s: float | None = None
    I0: float = 1.0
    R0: float = 0.0
    beta0: float | None = None
    method: str = "rk45"
    dt: float = 0.1
    rtol: float = 1e-8
    atol: float = 1e-10
    max_steps: int = 1_000_000
    horizon: float = 200.0
    # fitting
    S_tilde: float | None = None
    population: float | None = None
    window: list | None = None
    loss_space: str = "linear"
    seeds: int = 16
    bounds: dict = field(default_factory=dict)
    # analyze
    lyapunov_samples: int = 1000
    nullcline_points: int = 200
    grid: int = 15
    # sweep
    populations: list | None = None

    @classmethod
    def from_sources(cls, path: str | None, **overrides) -> "RunConfig":
        data = {}
        if path is not None:
            try:
                data = json.loads(Path(path).read_text(encoding="utf-8"))
            except FileNotFoundError:
                raise ConfigError(f"params file not found: {path}")
            except json.JSONDecodeError as exc:
                raise ConfigError(f"params file {path} is not valid JSON: {exc}")
            if not isinstance(data, dict):
                raise ConfigError("params JSON must be an object")
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown parameter(s): {sorted(unknown)}")
        data.update({k: v for k, v in overrides.items() if v is not None})
        cfg = cls(**data)
        cfg.validate()
        return cfg

    def validate(self):
        for name in ("gamma", "alpha", "K", "u", "epsilon", "S0", "dt", "rtol", "atol"):
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and math.isfinite(v) and v > 0):
                raise ConfigError(f"{name} must be a positive number, got {v!r}")
        for name in ("c", "c_s", "beta0", "S_tilde", "population"):
            v = getattr(self, name)
            if v is not None and not (isinstance(v, (int, float)) and math.isfinite(v) and v > 0):
                raise ConfigError(f"{name} must be a positive number, got {v!r}")
        if not (math.isfinite(self.I0) and self.I0 >= 0) or not (
            math.isfinite(self.R0) and self.R0 >= 0
        ):
            raise ConfigError("I0 and R0 must be nonnegative")
        if not (math.isfinite(self.horizon) and self.horizon >= 0):
            raise ConfigError("horizon must be nonnegative")
        if not (isinstance(self.max_steps, int) and self.max_steps >= 1):
            raise ConfigError("max_steps must be a positive integer")
        if self.method not in ("rk45", "rk4"):
            raise ConfigError("method must be 'rk45' or 'rk4'")

    @property
    def cs(self) -> float:
        if self.c_s is not None:
            return self.c_s
        if self.c is not None:
            return self.c * self.S0
        return DEFAULTS["cs"] * self.S0 / DEFAULTS["S0"]

    @property
    def c_value(self) -> float:
        return self.c if self.c is not None else self.cs / self.S0

    @property
    def beta_start(self) -> float:
        return self.K if self.beta0 is None else self.beta0

    def params(self, **changes) -> EpidemicParams:
        base = dict(c=self.c_value, gamma=self.gamma, alpha=self.alpha, u=self.u, epsilon=self.epsilon)
        base.update(changes)
        return EpidemicParams(**base)

    def integrator(self, floor=0.0) -> IntegratorConfig:
        return IntegratorConfig(
            method=self.method,
            dt=self.dt,
            rtol=self.rtol,
            atol=self.atol,
            max_steps=self.max_steps,
            positivity_floor=floor,
        )


# ---------------------------------------------------------------------------
# output helpers


def _fmt(v):
    if isinstance(v, str):
        return v
    if v is None or (isinstance(v, float) and math.isnan(v)):
        return ""
    return format(float(v), ".17g")


def write_table(path, columns: dict, fmt: str, meta: dict | None = None):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    names = list(columns)
    if fmt == "json":
        payload = {"columns": {k: [None if _isnan(x) else x for x in _tolist(v)] for k, v in columns.items()}}
        if meta:
            payload["metadata"] = meta
        path.write_text(json.dumps(payload, indent=1), encoding="utf-8")
        return
    n = len(next(iter(columns.values())))
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(names)
        for i in range(n):
            w.writerow([_fmt(columns[k][i]) for k in names])


def _tolist(v):
    return [x if isinstance(x, str) else float(x) for x in v]


def _isnan(x):
    return isinstance(x, float) and math.isnan(x)


def write_json(path, obj):
    text = json.dumps(obj, indent=2, default=_json_default)
    if path is None:
        print(text)
        return
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text + "\n", encoding="utf-8")


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, complex):
        return [o.real, o.imag]
    raise TypeError(f"cannot serialise {type(o)}")


# ---------------------------------------------------------------------------
# simulate


def simulate_columns(cfg: RunConfig, model: str) -> dict:
    """Daily samples of the chosen model as a column dict."""
    law = MonodLaw(cfg.K)
    horizon = cfg.horizon
    if model == "closed-form-monod":
        params = cfg.params()
        S0t = cfg.epsilon * cfg.S0
        if not S0t > dynamics.monod_threshold(params, cfg.K):
            raise AssumptionError("closed form needs S_tilde(0) above S* = gamma / (c_tilde K)")
        t = np.arange(0, math.floor(horizon) + 1, dtype=float)
        return {
            "t": t,
            "S_tilde": dynamics.monod_closed_form_susceptibles(t, S0t, params, cfg.K),
            "I": dynamics.monod_closed_form_infectives(t, S0t, params, cfg.K),
        }

    params = cfg.params()
    if model == "full":
        f = dynamics.full_field(params, law)
        x0 = [cfg.S0, cfg.I0, cfg.R0, cfg.beta_start]
        floor = 0.0
    elif model == "fast":
        f = dynamics.fast_field(params, law, cfg.cs)
        x0 = [cfg.I0, cfg.beta_start]
        floor = 0.0
    elif model == "log-fast":
        if not cfg.I0 > 0:
            raise ConfigError("log-fast model needs I0 > 0")
        f = dynamics.log_fast_field(params, law, cfg.cs)
        x0 = [math.log(cfg.I0), cfg.beta_start]
        floor = None
    elif model == "slow":
        f = dynamics.slow_field(params, law, fast_time=True)
        x0 = [cfg.epsilon * cfg.S0]
        floor = 0.0
    else:
        raise ConfigError(f"unknown model {model!r}; choose from {MODELS}")

    if horizon > 0:
        traj = sample_daily(integrate(f, x0, (0.0, horizon), cfg.integrator(floor)))
        t, X = traj.times, traj.states
    else:
        t, X = np.array([0.0]), np.array([x0], dtype=float)

    if model == "full":
        S, I, R, b = X.T
        return {"t": t, "S": S, "I": I, "R": R, "beta": b, "y": params.c * b * S * I, "total": S + I + R}
    if model == "fast":
        I, b = X.T
        return {"t": t, "I": I, "beta": b, "y": cfg.cs * b * I}
    if model == "log-fast":
        p, b = X.T
        I = np.exp(p)
        return {"t": t, "p": p, "beta": b, "I": I, "y": cfg.cs * b * I}
    St = X[:, 0]
    I_q, b_q = [], []
    for s in St:
        c_s = params.c_tilde * s
        ss = analysis.endemic_state(law, params, c_s) if c_s > 0 else None
        if ss is None:
            I_q.append(0.0)
            b_q.append(law.K)
        else:
            I_q.append(ss.I)
            b_q.append(ss.beta)
    return {"t": t, "S_tilde": St, "I_qss": np.array(I_q), "beta_qss": np.array(b_q)}


def cmd_simulate(args) -> int:
    cfg = RunConfig.from_sources(args.params, horizon=args.horizon)
    cols = simulate_columns(cfg, args.model)
    write_table(args.out, cols, args.format, meta={"model": args.model, "config": dataclasses.asdict(cfg)})
    return EXIT_OK


# ---------------------------------------------------------------------------
# analyze


def analyze_report(cfg: RunConfig, seed: int = 0) -> dict:
    law = MonodLaw(cfg.K)
    params = cfg.params()
    c_s = cfg.cs
    rep = analysis.check_assumptions(law, params, c_s)
    report = {
        "params": {"gamma": cfg.gamma, "alpha": cfg.alpha, "K": cfg.K, "u": cfg.u, "c_s": c_s},
        "threshold_c_s": cfg.gamma / cfg.K,
        "assumptions": {"a1": rep.a1, "a2": rep.a2, "a3": rep.a3, "a4": rep.a4, "margins": rep.margins},
        "steady_states": [],
    }
    dfs = analysis.disease_free_state(law, params, c_s)
    end = analysis.endemic_state(law, params, c_s)
    for ss in (dfs, end):
        if ss is not None:
            report["steady_states"].append(ss.as_dict())
    beta_ref = dfs.beta if dfs is not None else cfg.beta_start
    report["R0"] = analysis.r0(c_s * beta_ref, 1.0, cfg.gamma)

    if end is not None:
        rng = np.random.default_rng(seed)
        p_e = math.log(end.I)
        ps = p_e + rng.uniform(-5, 5, cfg.lyapunov_samples)
        bs = end.beta * np.exp(rng.uniform(-3, 3, cfg.lyapunov_samples))
        samples = [analysis.lyapunov(p, b, law, params, c_s) for p, b in zip(ps, bs)]
        report["lyapunov"] = {
            "samples": len(samples),
            "min_V": min(s.V for s in samples),
            "max_Vdot": max(s.Vdot for s in samples),
            "V_at_equilibrium": analysis.lyapunov(p_e, end.beta, law, params, c_s).V,
        }
        I_max = 5 * end.I
    else:
        report["lyapunov"] = None
        I_max = 5.0 / cfg.u
    b_max = 2 * max(cfg.K, cfg.gamma / c_s)
    I_pts = np.linspace(0.0, I_max, cfg.nullcline_points)
    report["nullclines"] = {
        "I_nullcline": {"I": 0.0, "beta": cfg.gamma / c_s},
        "beta_nullcline": [[I, law.g_inverse(law.h(cfg.u * I))] for I in I_pts],
    }
    field_pts = []
    for I in np.linspace(0.0, I_max, cfg.grid):
        for b in np.linspace(0.0, b_max, cfg.grid):
            d = dynamics.rhs_fast((I, b, c_s), params, law)
            # scale each axis by the plot range before normalising
            vx, vy = d.I / I_max, d.beta / b_max
            norm = math.hypot(vx, vy)
            field_pts.append([I, b, vx / norm if norm else 0.0, vy / norm if norm else 0.0])
    report["vector_field"] = {"columns": ["I", "beta", "dI_scaled", "dbeta_scaled"], "points": field_pts}
    return report


def cmd_analyze(args) -> int:
    cfg = RunConfig.from_sources(args.params)
    write_json(args.out, analyze_report(cfg, args.seed))
    return EXIT_OK


# ---------------------------------------------------------------------------
# fit


def cmd_fit(args) -> int:
    cfg = RunConfig.from_sources(args.params)
    if args.data is None:
        raise ConfigError("--data is required")
    series = fitting.load_incidence(args.data, cumulative=args.cumulative)
    S_tilde = cfg.S_tilde
    if S_tilde is None:
        if cfg.population is None:
            raise ConfigError("fit needs S_tilde or population in the params file")
        S_tilde = cfg.population * cfg.epsilon
    problem = fitting.FitProblem(
        series,
        S_tilde,
        window=tuple(cfg.window) if cfg.window else None,
        bounds={k: tuple(v) for k, v in cfg.bounds.items()},
        loss_space=cfg.loss_space,
    )
    result = fitting.fit(problem, seeds=cfg.seeds, rng=args.seed)
    out = Path(args.out)
    payload = result.to_dict()
    payload["S_tilde"] = S_tilde
    payload["origin_date"] = series.dates[result.origin].isoformat()
    payload["window"] = list(problem.window)
    payload["loss_space"] = problem.loss_space
    write_json(out, payload)

    y = fitting.simulate_fit_output(result.params, result.init, S_tilde, problem.model_days)
    sm = fitting.moving_average(y, series.window)
    n = len(series)
    model_daily = np.full(n, np.nan)
    model_sm = np.full(n, np.nan)
    model_daily[problem.origin : problem.origin + len(y)] = y
    a, b = problem.window
    model_sm[a : b + 1] = sm
    write_table(
        out.with_name(out.stem + "_curve.csv"),
        {
            "date": [d.isoformat() for d in series.dates],
            "cases": series.raw,
            "smoothed": series.smoothed,
            "model": model_daily,
            "model_smoothed": model_sm,
        },
        "csv",
    )
    return EXIT_OK


# ---------------------------------------------------------------------------
# sweep


def sweep_case(cfg: RunConfig, N: float) -> dict:
    """Full model at population ``N`` with ``c * S(0)`` held at ``cfg.cs``."""
    cs = cfg.cs
    law = MonodLaw(cfg.K)
    c = cs / N
    params = cfg.params(c=c, epsilon=1.0 / N)
    traj = integrate(
        dynamics.full_field(params, law),
        [N - cfg.I0, cfg.I0, 0.0, cfg.beta_start],
        (0.0, cfg.horizon),
        cfg.integrator(),
    )
    end = analysis.endemic_state(law, params, cs)
    if end is None:
        raise AssumptionError(f"no endemic state at c S(0) = {cs}")
    S_T, I_T = traj.final[0], traj.final[1]
    moving = analysis.endemic_state(law, params, c * S_T)
    return {
        "population": N,
        "c": c,
        "terminal_I": I_T,
        "terminal_S": S_T,
        "qss_I": end.I,
        "deviation": I_T / end.I - 1.0,
        "moving_qss_I": moving.I if moving else 0.0,
        "moving_deviation": (I_T / moving.I - 1.0) if moving else math.inf,
        "peak_I": float(np.max(traj.states[:, 1])),
        "trajectory": traj,
    }


def cmd_sweep(args) -> int:
    cfg = RunConfig.from_sources(args.params, horizon=args.horizon)
    pops = _parse_pops(args.populations) if args.populations else cfg.populations
    if not pops:
        raise ConfigError("--populations is required")
    out = Path(args.out)
    cases = [sweep_case(cfg, float(N)) for N in pops]
    out.mkdir(parents=True, exist_ok=True)
    summary = []
    for case in cases:
        traj = sample_daily(case.pop("trajectory"))
        S, I, R, b = traj.states.T
        write_table(
            out / f"population_{case['population']:.6g}.{args.format}",
            {"t": traj.times, "S": S, "I": I, "R": R, "beta": b},
            args.format,
        )
        summary.append(case)
    write_table(out / f"summary.{args.format}", {k: [c[k] for c in summary] for k in summary[0]}, args.format)
    return EXIT_OK


def _parse_pops(text):
    try:
        pops = [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise ConfigError(f"cannot parse populations {text!r}")
    if not pops or any(not (p > 1) for p in pops):
        raise ConfigError("populations must be numbers > 1")
    return pops


# ---------------------------------------------------------------------------
# assign


def cmd_assign(args) -> int:
    cfg = RunConfig.from_sources(args.params)
    if args.istar is None or not args.istar > 0:
        raise ConfigError("--istar must be a positive number")
    law = MonodLaw(cfg.K)
    params = cfg.params()
    u = analysis.assign_u(args.istar, law, params, cfg.cs)
    end = analysis.endemic_state(law, params, cfg.cs, u=u)
    write_json(args.out, {"I_star": args.istar, "u": u, "endemic": end.as_dict()})
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="regsir", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, out_required=True):
        p.add_argument("--params", help="JSON file with RunConfig fields")
        p.add_argument("--out", required=out_required, help="output path")
        p.add_argument("--format", choices=("csv", "json"), default="csv")
        p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("simulate", help="integrate one of the model variants")
    common(p)
    p.add_argument("--model", choices=MODELS, default="fast")
    p.add_argument("--horizon", type=float, help="days")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("analyze", help="steady states, stability and phase-plane data")
    common(p, out_required=False)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("fit", help="fit the normalised model to daily incidence")
    common(p)
    p.add_argument("--data", help="CSV with date,cases columns")
    p.add_argument("--cumulative", action="store_true", help="cases column is cumulative")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("sweep", help="population-size sweep of the full model")
    common(p)
    p.add_argument("--populations", help="comma-separated population sizes")
    p.add_argument("--horizon", type=float, help="days")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("assign", help="perception gain u that places the QSS at --istar")
    common(p, out_required=False)
    p.add_argument("--istar", type=float)
    p.set_defaults(func=cmd_assign)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except AssumptionError as exc:
        print(f"regsir: model assumption failed: {exc}", file=sys.stderr)
        return EXIT_ASSUMPTION
    except (IntegrationError, ModelEvaluationError, FitError, ArithmeticError) as exc:
        print(f"regsir: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ConfigError, DataError, DomainError, OSError, ValueError, TypeError) as exc:
        print(f"regsir: invalid input: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
