import csv
import json

import pytest

from aebmc import cli
from aebmc.backends import ResultArrays
from aebmc.config import FIELDS, OUTPUT_DIR_ENV, ConfigError, build_config, load_file


def run(*argv):
    return cli.main([str(a) for a in argv])


def files(d):
    return {p.name: p.read_bytes() for p in sorted(d.iterdir())}


@pytest.fixture(autouse=True)
def _clean_env(monkeypatch):
    monkeypatch.delenv(OUTPUT_DIR_ENV, raising=False)


def test_defaults_match_nominal():
    cfg = build_config()
    assert (cfg.sim.dt, cfg.sim.t_max, cfg.sim.a_brake_cmd) == (0.001, 10.0, -6.0)
    assert (cfg.geom.cg_height, cfg.geom.wheelbase, cfg.geom.tau) == (0.5, 2.7, 0.15)
    u = cfg.uncertainty
    assert (u.v0_mean, u.v0_sd, u.mu_mean, u.mu_sd, u.theta_mean, u.theta_sd) == (30, 2, 0.8, 0.1, 0, 0.05)
    assert (u.mass_mean, u.mass_sd, u.c_d_mean, u.c_d_sd, u.seed) == (1500, 100, 0.3, 0.05, 42)
    assert cfg.execution.samples == 12_000


def test_precedence(tmp_path):
    file_values = {"outputs": {"out_dir": "from_file"}, "uncertainty": {"seed": 3}}
    env = {OUTPUT_DIR_ENV: "from_env"}
    assert build_config(file_values, None, env).outputs.out_dir == "from_env"
    cfg = build_config(file_values, {"outputs": {"out_dir": "from_flag"}}, env)
    assert cfg.outputs.out_dir == "from_flag" and cfg.uncertainty.seed == 3


@pytest.mark.parametrize(
    "values, path",
    [
        ({"scenario": {"dt": 0}}, "scenario.dt"),
        ({"scenario": {"wheelbase": "long"}}, "scenario.wheelbase"),
        ({"uncertainty": {"mu_sd": -1}}, "uncertainty.mu_sd"),
        ({"uncertainty": {"seed": 1.5}}, "uncertainty.seed"),
        ({"execution": {"executor": "gpu"}}, "execution.executor"),
        ({"execution": {"samples": 0}}, "execution.samples"),
        ({"outputs": {"formats": "csv,pdf"}}, "outputs.formats"),
        ({"scenario": {"warp": 9}}, "scenario.warp"),
        ({"physics": {}}, "physics"),
    ],
)
def test_field_path_errors(values, path):
    with pytest.raises(ConfigError, match=f"^{path}"):
        build_config(values, environ={})


def test_load_file_rejects_non_mapping(tmp_path):
    p = tmp_path / "c.yaml"
    p.write_text("- 1\n- 2\n")
    with pytest.raises(ConfigError):
        load_file(p)


def test_help_documents_every_field(capsys):
    with pytest.raises(SystemExit):
        run("run", "--help")
    text = " ".join(capsys.readouterr().out.split())
    for f in FIELDS:
        assert f"--{f.name.replace('_', '-')}" in text
        assert f"[{f.unit}]" in text
    assert "(default: 0.15)" in text and "(default: 1500.0)" in text


def test_run_writes_artifacts(tmp_path, capsys):
    assert run("run", "--samples", 500, "--out-dir", tmp_path) == 0
    assert set(files(tmp_path)) == {"summary.json", "results.csv", "histogram.svg"}
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert summary["summary"]["n"] == 500
    assert "wall_time_s" not in json.dumps(summary)
    with open(tmp_path / "results.csv", newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["index", "d_stop_m", "t_stop_s", "horizon_flag"] and len(rows) == 501
    assert "km/h" in capsys.readouterr().out


def test_run_formats_subset(tmp_path):
    assert run("run", "--samples", 10, "--formats", "csv", "--out-dir", tmp_path) == 0
    assert set(files(tmp_path)) == {"results.csv"}


def test_run_idempotent(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for d in (a, b):
        assert run("run", "--samples", 1, "--seed", 7, "--out-dir", d) == 0
    assert files(a)["results.csv"] == files(b)["results.csv"]


def test_config_file_and_env(tmp_path, monkeypatch):
    cfg = tmp_path / "c.yaml"
    cfg.write_text("uncertainty:\n  seed: 9\nexecution:\n  samples: 20\noutputs:\n  out_dir: nowhere\n")
    monkeypatch.setenv(OUTPUT_DIR_ENV, str(tmp_path / "env_out"))
    assert run("run", "--config", cfg) == 0
    summary = json.loads((tmp_path / "env_out" / "summary.json").read_text())
    assert summary["config"]["uncertainty"]["seed"] == 9 and summary["summary"]["n"] == 20


def test_exit_config_error(tmp_path, capsys):
    assert run("run", "--dt", -1, "--out-dir", tmp_path) == 1
    assert "scenario.dt" in capsys.readouterr().err
    assert run("run", "--no-such-flag") == 1
    assert run("run", "--samples", "many") == 1
    bad = tmp_path / "bad.yaml"
    bad.write_text("scenario: [unclosed\n")
    assert run("run", "--config", bad) == 1


def test_exit_io_error(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    assert run("run", "--samples", 5, "--out-dir", blocker / "sub") == 2
    assert run("run", "--config", tmp_path / "missing.yaml") == 2


@pytest.mark.parametrize("workers", [1, 2, 4])
def test_verify_pass(tmp_path, workers):
    assert run("verify", "--samples", 1000, "--workers", workers, "--out-dir", tmp_path) == 0
    v = json.loads((tmp_path / "consistency.json").read_text())
    assert v["passed"] and v["max_abs_deviation_m"] == 0.0 and v["bitwise_equal"]


def test_verify_negative_control(tmp_path):
    assert run("run", "--samples", 300, "--executor", "sequential", "--out-dir", tmp_path) == 0
    good = tmp_path / "results.csv"
    assert run("verify", "--samples", 300, "--compare-csv", good, "--out-dir", tmp_path) == 0
    res = ResultArrays.read_csv(good, 0.001)
    res.d_stop[123] += 1e-9
    bad = tmp_path / "perturbed.csv"
    res.to_csv(bad)
    assert run("verify", "--samples", 300, "--compare-csv", bad, "--out-dir", tmp_path) == 3
    v = json.loads((tmp_path / "consistency.json").read_text())
    assert not v["passed"] and v["runs"][0]["first_mismatch"] == 123


def test_verify_worker_sweep(tmp_path, capsys):
    assert run("verify", "--samples", 500, "--worker-sweep", "1,2,4,max", "--out-dir", tmp_path) == 0
    v = json.loads((tmp_path / "consistency.json").read_text())
    assert {r["worker_count"] for r in v["runs"]} >= {1, 2, 4}
    assert all(r["passed"] for r in v["runs"])
    assert run("verify", "--worker-sweep", "0", "--out-dir", tmp_path) == 1


def test_converge(tmp_path):
    assert run("converge", "--n-list", "1000,12000,13000", "--out-dir", tmp_path) == 0
    lines = (tmp_path / "convergence.csv").read_text().splitlines()
    assert lines[0] == "n,mean_m,sd_m,delta_mean_m,delta_sd_m" and len(lines) == 4
    n, mean, sd, dm, ds = lines[2].split(",")
    assert n == "12000" and float(dm) == 0.0 and float(ds) == 0.0
    assert run("converge", "--n-list", "1000,4000", "--out-dir", tmp_path) == 1


def test_risk(tmp_path):
    assert run("risk", "--samples", 2000, "--out-dir", tmp_path) == 0
    out = files(tmp_path)
    assert {"risk_curve.csv", "risk_thresholds.csv", "risk.json", "risk_curve.svg"} <= set(out)
    svg = out["risk_curve.svg"].decode()
    assert svg.count('stroke-dasharray="6,4"') == 3
    data = json.loads(out["risk.json"])
    assert [t["risk"] for t in data["thresholds"]] == [0.05, 0.01, 0.001]
    assert all(abs(t["ttc_s"] - t["min_safe_headway_m"] / 30.0) < 1e-12 for t in data["thresholds"])
    assert run("risk", "--samples", 100, "--risk-levels", "0.5,1.5", "--out-dir", tmp_path) == 1


def test_feasibility(tmp_path):
    assert run("feasibility", "--n-cap", 300, "--repeats", 1, "--budget-total", 5000, "--out-dir", tmp_path) == 0
    rep = json.loads((tmp_path / "timing.json").read_text())
    assert rep["mc_budget_ms"] == 5000 - 120 - 50 and rep["max_n_within_budget"] == 300
    assert run("feasibility", "--budget-total", 100, "--out-dir", tmp_path) == 1


def test_bench(tmp_path):
    assert run("bench", "--bench-n", "100,200,400", "--repeats", 1, "--out-dir", tmp_path) == 0
    rep = json.loads((tmp_path / "bench.json").read_text())
    assert [p["n"] for p in rep["points"]] == [100, 200, 400]
    assert {"t_overhead_s", "t_per_sample_s"} <= set(rep["fit"]) and "fit_unweighted" in rep
    assert run("bench", "--bench-n", "100,200", "--out-dir", tmp_path) == 1


def test_subcommands_idempotent(tmp_path):
    for sub, extra in (("run", ()), ("verify", ()), ("risk", ()), ("converge", ("--n-list", "500,12000"))):
        a, b = tmp_path / sub / "a", tmp_path / sub / "b"
        for d in (a, b):
            assert run(sub, "--samples", 1000, *extra, "--out-dir", d) == 0
        assert files(a) == files(b), sub
