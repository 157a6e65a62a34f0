"""Compare the compiled and pure-Python kernels on the fitting hot path.

    python benchmarks/bench_kernels.py [--repeat 20] [--fit]

Times one 200-day output simulation (the unit of work inside every loss
evaluation) and, with ``--fit``, a reduced multi-start fit on synthetic data.
"""
import argparse
import datetime as dt
import statistics
import time

import numpy as np

from regsir import kernels
from regsir.fitting import FitProblem, IncidenceSeries, fit, simulate_fit_output

PARAMS = (0.071, 0.0575, 0.0104, 0.8e-4)
INIT = (100.0, 0.0104)
S_TILDE = 19.45


def use(backend):
    kernels.monod_fast_rk4 = kernels.get_backend(backend).monod_fast_rk4


def time_simulation(repeat):
    samples = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        simulate_fit_output(PARAMS, INIT, S_TILDE, 200)
        samples.append(time.perf_counter() - t0)
    return statistics.median(samples)


def time_fit():
    y = simulate_fit_output(PARAMS, INIT, S_TILDE, 200)
    dates = [dt.date(2020, 3, 1) + dt.timedelta(days=k) for k in range(len(y))]
    prob = FitProblem(IncidenceSeries(tuple(dates), y), S_TILDE)
    t0 = time.perf_counter()
    res = fit(prob, seeds=2, polish=1, max_evals=1500)
    return time.perf_counter() - t0, res.evaluations


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=20)
    ap.add_argument("--fit", action="store_true", help="also time a reduced fit")
    args = ap.parse_args()

    backends = ["python"] + (["cython"] if kernels.compiled_available() else [])
    if len(backends) == 1:
        print("compiled extension not built; timing the pure-Python kernel only")
    ref = None
    rows = []
    for name in backends:
        use(name)
        out = simulate_fit_output(PARAMS, INIT, S_TILDE, 200)
        if ref is None:
            ref = out
        drift = float(np.max(np.abs(out - ref) / ref))
        row = [name, time_simulation(args.repeat) * 1e3, drift]
        if args.fit:
            row += list(time_fit())
        rows.append(row)

    print(f"{'backend':<8} {'sim [ms]':>10} {'max rel diff':>13}" + ("  fit [s]  evals" if args.fit else ""))
    for row in rows:
        line = f"{row[0]:<8} {row[1]:>10.3f} {row[2]:>13.1e}"
        if args.fit:
            line += f"  {row[3]:>7.2f}  {row[4]:>5d}"
        print(line)
    if len(rows) == 2:
        print(f"speed-up: {rows[0][1] / rows[1][1]:.0f}x")


if __name__ == "__main__":
    main()
