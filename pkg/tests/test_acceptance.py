"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

The lines are collected in ``RESULTS`` and echoed in the terminal summary
(see ``conftest.py``) so they show up even when output capture is on.
"""
import math
import time
from pathlib import Path

import numpy as np
import pytest

from regsir import fitting
from regsir.analysis import (
    PRECISE,
    adaptation_experiment,
    disease_free_state,
    endemic_state,
    fcd_experiment,
    identifiability_rank,
    lyapunov_along,
    slowest_rate,
    tikhonov_sweep,
)
from regsir.cli import RunConfig, sweep_case
from regsir.dynamics import (
    EpidemicParams,
    MonodLaw,
    fast_field,
    monod_closed_form_infectives,
    monod_closed_form_susceptibles,
    rhs_fast,
    slow_field,
)
from regsir.solver import IntegratorConfig, integrate

from . import oracles as O
from . import synthetic as syn

RESULTS = []
BUNDLED_NY = Path(__file__).resolve().parents[1] / "data" / "new_york_daily.csv"


def record(n, ok, detail):
    line = f"criterion {n:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
    RESULTS.append(line)
    print(line)
    assert ok, line


def reference_setup():
    law = MonodLaw(O.K)
    params = EpidemicParams(c=O.CS / 80e6, gamma=O.GAMMA, alpha=O.ALPHA, u=O.U)
    return law, params


def test_criterion_01_endemic_formula():
    law, params = reference_setup()
    I_e = endemic_state(law, params, O.CS).I
    analytic = (O.CS * O.K / O.GAMMA - 1) / O.U
    rel = abs(I_e - analytic) / analytic
    oracle_rel = abs(I_e - O.ENDEMIC_I) / O.ENDEMIC_I
    reported = abs(O.REPORTED_QSS_I - I_e) / I_e
    ok = rel <= 1e-9 and oracle_rel <= 1e-9 and reported <= 2e-3
    record(1, ok, f"I_e={I_e:.10g} rel={rel:.1e}; reported 4271 off by {reported:.2%} (<=0.2%)")


def test_criterion_02_full_model_reaches_qss():
    t0 = time.perf_counter()
    case = sweep_case(RunConfig(horizon=200.0), 80e6)
    elapsed = time.perf_counter() - t0
    ok = abs(case["deviation"]) <= 2e-3 and elapsed < 5
    record(2, ok, f"I(200)={case['terminal_I']:.6g} deviation={case['deviation']:+.3%} in {elapsed:.1f}s")


def test_criterion_03_population_sweep_shape():
    t0 = time.perf_counter()
    cfg = RunConfig(horizon=200.0)
    pops = [80e6, 10e6, 5e6, 2e6, 1e6, 0.5e6]
    devs = {N: sweep_case(cfg, N)["deviation"] for N in pops}
    elapsed = time.perf_counter() - t0
    large_ok = all(abs(devs[N]) <= 0.02 for N in pops if N >= 1e6)
    small_below = devs[0.5e6] < 0
    summary = ", ".join(f"{N:.2g}:{d:+.2%}" for N, d in devs.items())
    record(3, large_ok and small_below and elapsed < 30, f"deviations {summary} in {elapsed:.1f}s")


def _random_draw(rng):
    gamma = rng.uniform(0.05, 0.3)
    alpha = rng.uniform(0.01, 0.3)
    K = rng.uniform(0.005, 0.05)
    u = 10 ** rng.uniform(-5, -3)
    c_s = gamma / K * rng.uniform(1.2, 10.0)
    params = EpidemicParams(c=1e-7, gamma=gamma, alpha=alpha, u=u)
    return MonodLaw(K), params, c_s


def test_criterion_04_global_stability():
    rng = np.random.default_rng(2024)
    t0 = time.perf_counter()
    worst_err, worst_rise = 0.0, -math.inf
    for _ in range(50):
        law, params, c_s = _random_draw(rng)
        ss = endemic_state(law, params, c_s)
        I0 = ss.I * 10 ** rng.uniform(-2, 2)
        b0 = ss.beta * 10 ** rng.uniform(-0.7, 0.7)
        horizon = 40.0 / slowest_rate(law, params, c_s)
        traj = integrate(fast_field(params, law, c_s), [I0, b0], (0.0, horizon), PRECISE)
        I_T, b_T = traj.final
        worst_err = max(worst_err, abs(I_T / ss.I - 1), abs(b_T / ss.beta - 1))
        V = lyapunov_along(traj, law, params, c_s)
        worst_rise = max(worst_rise, float(np.max(np.diff(V))))
    elapsed = time.perf_counter() - t0
    slack = 10 * PRECISE.atol
    ok = worst_err <= 1e-3 and worst_rise <= slack and elapsed < 60
    record(
        4, ok,
        f"50 draws: max rel error {worst_err:.1e}, max V increase {worst_rise:.1e} "
        f"(slack {slack:.0e}) in {elapsed:.1f}s",
    )


def _fd_jacobian(I, beta, law, params, c_s, scale_I):
    J = np.empty((2, 2))
    for j, h in enumerate((1e-6 * scale_I, 1e-6 * beta)):
        up = [I, beta]
        dn = [I, beta]
        up[j] += h
        dn[j] -= h
        fu = rhs_fast((*up, c_s), params, law)
        fd = rhs_fast((*dn, c_s), params, law)
        J[:, j] = [(fu.I - fd.I) / (2 * h), (fu.beta - fd.beta) / (2 * h)]
    return J


def _eig_mismatch(analytic, numeric):
    a = sorted(analytic, key=lambda z: (z.real, z.imag))
    b = sorted(np.linalg.eigvals(numeric), key=lambda z: (z.real, z.imag))
    return max(abs(x - y) / abs(x) for x, y in zip(a, b))


def test_criterion_05_disease_free_instability():
    rng = np.random.default_rng(7)
    unstable, worst = 0, 0.0
    for _ in range(50):
        law, params, c_s = _random_draw(rng)
        ss = endemic_state(law, params, c_s)
        df = disease_free_state(law, params, c_s)
        unstable += max(e.real for e in df.eigenvalues) > 0
        worst = max(
            worst,
            _eig_mismatch(df.eigenvalues, _fd_jacobian(0.0, df.beta, law, params, c_s, ss.I)),
            _eig_mismatch(ss.eigenvalues, _fd_jacobian(ss.I, ss.beta, law, params, c_s, ss.I)),
        )
    ok = unstable == 50 and worst <= 1e-6
    record(5, ok, f"{unstable}/50 disease-free states unstable; eigenvalue mismatch {worst:.1e}")


def test_criterion_06_fold_change_detection():
    law, params = reference_setup()
    worst_b, worst_id = 0.0, 0.0
    for q in (2.0, 10.0):
        for u1, u2 in ((1e-5, 1e-3), (1e-4, 1e-2)):
            res = fcd_experiment(params, law, O.CS, q, u1, u2)
            worst_b = max(worst_b, res.max_deviation)
            worst_id = max(worst_id, res.max_identity_deviation)
    ok = worst_b <= 1e-6 and worst_id <= 1e-6
    record(6, ok, f"sup |beta_1 - beta_2| = {worst_b:.1e}, sup |u1 I1 - u2 I2| = {worst_id:.1e}")


def test_criterion_07_adaptation():
    law, params = reference_setup()
    res = adaptation_experiment(params, law, O.CS, O.U, 10 * O.U)
    err = abs(res.terminal_beta - res.beta_target)
    ok = math.isfinite(res.settling_time) and err <= 1e-6 * res.beta_target
    record(7, ok, f"settles in 1% band after {res.settling_time:.0f} d; terminal error {err:.1e}")


def test_criterion_08_tikhonov():
    t0 = time.perf_counter()
    law = MonodLaw(1.0)
    params = EpidemicParams(c=2e-4, gamma=1.0, alpha=1.0, u=1.0, epsilon=1e-4)
    res = tikhonov_sweep(params, law, 1.0, [1e-4, 5e-5, 2.5e-5], 0.5, 0.1, 0.8)
    elapsed = time.perf_counter() - t0
    ratios = {k: res.ratios(k) for k in ("S", "I", "beta")}
    ok = all(np.all((r >= 0.3) & (r <= 0.8)) for r in ratios.values()) and elapsed < 60
    text = "; ".join(f"{k} {np.round(r, 3).tolist()}" for k, r in ratios.items())
    record(8, ok, f"error ratios per halving: {text} in {elapsed:.1f}s")


def test_criterion_09_monod_closed_forms():
    worst = 0.0
    for eps in (1e-6, 1e-3):
        law = MonodLaw(O.K)
        params = EpidemicParams(c=O.CS / 80.0 * eps, gamma=O.GAMMA, alpha=O.ALPHA, u=O.U, epsilon=eps)
        S0 = 80.0
        traj = integrate(
            slow_field(params, law, fast_time=True), [S0], (0.0, 400.0),
            IntegratorConfig(rtol=1e-12, atol=1e-13),
        )
        t, S_num = traj.times, traj.states[:, 0]
        I_num = np.array(
            [law.h_inverse(law.g(O.GAMMA / (params.c_tilde * s))) / O.U for s in S_num]
        )
        S_cf = monod_closed_form_susceptibles(t, S0, params, O.K)
        I_cf = monod_closed_form_infectives(t, S0, params, O.K)
        worst = max(worst, np.max(np.abs(S_num / S_cf - 1)), np.max(np.abs(I_num / I_cf - 1)))
    record(9, worst <= 1e-6, f"sup relative error of S and I over 400 d: {worst:.1e}")


def _relative_errors(res):
    got = np.array([*res.params, *res.init])
    return np.abs(got / syn.truth_vector() - 1)


def test_criterion_10_synthetic_recovery():
    t0 = time.perf_counter()
    clean = fitting.FitProblem(syn.series(syn.clean_incidence()), syn.S_TILDE)
    clean_err = _relative_errors(fitting.fit(clean, rng=0)).max()
    rng = np.random.default_rng(99)
    worst = []
    for draw in range(20):
        data = syn.series(syn.noisy_incidence(rng))
        prob = fitting.FitProblem(data, syn.S_TILDE, loss_space="log")
        worst.append(_relative_errors(fitting.fit(prob, rng=draw)).max())
    elapsed = time.perf_counter() - t0
    inside = sum(w <= 0.15 for w in worst)
    ok = clean_err <= 1e-2 and inside == 20 and elapsed < 300
    record(
        10, ok,
        f"noiseless max error {clean_err:.1e}; 5% noise: {inside}/20 draws within 15% "
        f"(worst {max(worst):.1%}) in {elapsed:.0f}s",
    )


def test_criterion_10_bundled_series_rms():
    if not BUNDLED_NY.exists():
        record("10b", False, f"bundled New York series missing ({BUNDLED_NY.name}); rms ratio not computable")
    series = fitting.load_incidence(BUNDLED_NY, region="New York")
    S_tilde = 19.45
    prob = fitting.FitProblem(series, S_tilde, window=(3, 196))
    res = fitting.fit(prob, rng=0)
    # the published initial state is not given, so fit I0 and beta0 for the reference
    ny = O.NY_FIT
    ref = (ny["gamma"], ny["alpha"], ny["K"], ny["u"])
    ref_prob = fitting.FitProblem(
        series, S_tilde, window=(3, 196),
        bounds={k: (v * (1 - 1e-9), v * (1 + 1e-9)) for k, v in ny.items()},
    )
    ref_res = fitting.fit(ref_prob, rng=0, check_identifiability=False)
    ratio = res.rms_error / ref_res.rms_error
    record("10b", ratio <= 1.25, f"rms(fit) / rms(reference parameters) = {ratio:.3f}")


def test_criterion_11_identifiability():
    base = identifiability_rank(O.NY_FIT, 19.45, 100.0, O.NY_FIT["K"], 199.0)
    aug = identifiability_rank(O.NY_FIT, 19.45, 100.0, O.NY_FIT["K"], 199.0, include_c_tilde=True)
    ratio7 = aug.singular_values[-1] / aug.singular_values[0]
    ok = base.rank == 6 and aug.rank == 6
    record(11, ok, f"rank {base.rank}; with c_tilde column rank {aug.rank} (7th sv ratio {ratio7:.1e})")
