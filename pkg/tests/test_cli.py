import csv
import json

import numpy as np
import pytest

from regsir.cli import RunConfig, main

from . import oracles as O
from . import synthetic as syn


def read_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return {k: np.array([_num(r[k]) for r in rows]) for k in rows[0] if k != "date"}


def _num(text):
    return float(text) if text != "" else np.nan


def write_params(path, **kw):
    path.write_text(json.dumps(kw))
    return str(path)


@pytest.mark.parametrize("model", ["full", "fast", "log-fast", "slow", "closed-form-monod"])
def test_simulate_every_model(tmp_path, model):
    out = tmp_path / "traj.csv"
    assert main(["simulate", "--model", model, "--horizon", "30", "--out", str(out)]) == 0
    cols = read_csv(out)
    np.testing.assert_array_equal(cols["t"], np.arange(31.0))


def test_full_model_total_is_conserved(tmp_path):
    out = tmp_path / "full.csv"
    assert main(["simulate", "--model", "full", "--horizon", "200", "--out", str(out)]) == 0
    cols = read_csv(out)
    total = cols["S"] + cols["I"] + cols["R"]
    np.testing.assert_allclose(cols["total"], total, rtol=1e-15)
    np.testing.assert_allclose(total, total[0], rtol=1e-12)


def test_zero_horizon_is_initial_state(tmp_path):
    p = write_params(tmp_path / "p.json", I0=12.5, beta0=0.01, c_s=3.0)
    out = tmp_path / "z.csv"
    assert main(["simulate", "--model", "fast", "--params", p, "--horizon", "0", "--out", str(out)]) == 0
    cols = read_csv(out)
    assert len(cols["t"]) == 1
    assert (cols["I"][0], cols["beta"][0], cols["y"][0]) == (12.5, 0.01, 3.0 * 0.01 * 12.5)


def test_csv_round_trips_doubles(tmp_path):
    out = tmp_path / "f.csv"
    main(["simulate", "--model", "fast", "--horizon", "5", "--out", str(out)])
    text = out.read_text().splitlines()[3].split(",")
    assert float(text[1]) == float(repr(float(text[1])))
    assert len(text[1].replace(".", "").lstrip("0")) >= 15


def test_json_output(tmp_path):
    out = tmp_path / "f.json"
    assert main(["simulate", "--model", "fast", "--horizon", "3", "--format", "json", "--out", str(out)]) == 0
    data = json.loads(out.read_text())
    assert data["columns"]["t"] == [0.0, 1.0, 2.0, 3.0]
    assert data["metadata"]["model"] == "fast"


def test_fast_model_reaches_endemic_state(tmp_path):
    out = tmp_path / "f.csv"
    main(["simulate", "--model", "fast", "--horizon", "600", "--out", str(out)])
    assert read_csv(out)["I"][-1] == pytest.approx(O.ENDEMIC_I, rel=1e-6)


def test_analyze_report(tmp_path, capsys):
    assert main(["analyze", "--seed", "3"]) == 0
    report = json.loads(capsys.readouterr().out)
    kinds = [s["kind"] for s in report["steady_states"]]
    assert kinds == ["disease-free", "endemic"]
    assert report["steady_states"][1]["I"] == pytest.approx(O.ENDEMIC_I, rel=1e-12)
    assert report["assumptions"]["a4"] is True
    assert report["R0"] == pytest.approx(O.R0, rel=1e-12)
    assert report["lyapunov"]["max_Vdot"] <= 0
    assert len(report["nullclines"]["beta_nullcline"]) == 200
    assert len(report["vector_field"]["points"]) == 15 * 15


def test_analyze_is_deterministic(tmp_path):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    main(["analyze", "--seed", "5", "--out", str(a)])
    main(["analyze", "--seed", "5", "--out", str(b)])
    assert a.read_text() == b.read_text()


def test_analyze_below_threshold(tmp_path, capsys):
    p = write_params(tmp_path / "p.json", c_s=2.0)
    assert main(["analyze", "--params", p]) == 0
    report = json.loads(capsys.readouterr().out)
    assert [s["kind"] for s in report["steady_states"]] == ["disease-free"]
    assert report["lyapunov"] is None


def test_assign(capsys):
    assert main(["assign", "--istar", "4267.1"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["u"] == pytest.approx(0.0008, rel=1e-4)
    assert out["endemic"]["I"] == pytest.approx(4267.1, rel=1e-12)


def test_assumption_failure_exit_code(tmp_path):
    p = write_params(tmp_path / "p.json", c_s=2.0)
    assert main(["assign", "--params", p, "--istar", "100"]) == 4
    low = write_params(tmp_path / "low.json", S0=1e6)
    assert main(["simulate", "--model", "closed-form-monod", "--params", low, "--out", str(tmp_path / "x.csv")]) == 4


def test_invalid_input_exit_codes(tmp_path):
    out = tmp_path / "fit.json"
    assert main(["fit", "--data", str(tmp_path / "missing.csv"), "--out", str(out)]) == 2
    assert not out.exists()
    assert main(["simulate", "--params", str(tmp_path / "nope.json"), "--out", str(out)]) == 2
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert main(["simulate", "--params", str(bad), "--out", str(out)]) == 2
    assert main(["simulate", "--params", write_params(tmp_path / "u.json", zeta=1), "--out", str(out)]) == 2
    assert main(["simulate", "--params", write_params(tmp_path / "g.json", gamma=-1), "--out", str(out)]) == 2
    assert main(["sweep", "--populations", "abc", "--out", str(tmp_path / "sw")]) == 2
    assert main(["assign", "--istar", "-5"]) == 2


def test_numerical_failure_exit_code(tmp_path):
    p = write_params(tmp_path / "p.json", max_steps=3)
    assert main(["simulate", "--params", p, "--out", str(tmp_path / "x.csv")]) == 3


def test_sweep_outputs(tmp_path):
    out = tmp_path / "sweep"
    assert main(["sweep", "--populations", "80e6,2e6", "--out", str(out)]) == 0
    summary = read_csv(out / "summary.csv")
    np.testing.assert_array_equal(summary["population"], [80e6, 2e6])
    assert abs(summary["deviation"][0]) < 2e-3
    assert summary["deviation"][1] < summary["deviation"][0]
    case = read_csv(out / "population_8e+07.csv")
    assert len(case["t"]) == 201


def test_fit_round_trip_from_simulated_output(tmp_path):
    t = syn.TRUTH
    p = write_params(
        tmp_path / "sim.json", c_s=syn.S_TILDE, gamma=t["gamma"], alpha=t["alpha"], K=t["K"],
        u=t["u"], I0=t["I0"], beta0=t["beta0"], rtol=1e-11, atol=1e-9,
    )
    sim = tmp_path / "sim.csv"
    assert main(["simulate", "--model", "fast", "--params", p, "--horizon", "199", "--out", str(sim)]) == 0
    data = tmp_path / "cases.csv"
    syn.write_csv(data, read_csv(sim)["y"])
    fp = write_params(tmp_path / "fit.json", S_tilde=syn.S_TILDE)
    out = tmp_path / "result.json"
    assert main(["fit", "--data", str(data), "--params", fp, "--out", str(out), "--seed", "1"]) == 0
    res = json.loads(out.read_text())
    got = [*res["params"].values(), res["init"]["I0"], res["init"]["beta0"]]
    np.testing.assert_allclose(got, syn.truth_vector(), rtol=1e-2)
    curve = read_csv(tmp_path / "result_curve.csv")
    assert np.nanmax(np.abs(curve["model_smoothed"] - curve["smoothed"]) / curve["smoothed"]) < 1e-3


def test_run_config_defaults():
    cfg = RunConfig()
    assert cfg.cs == pytest.approx(O.CS, rel=1e-15)
    assert cfg.beta_start == cfg.K
