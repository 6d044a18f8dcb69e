"""Config parsing, replicated experiments, reference tables, and the CLI."""

import numpy as np
import pytest

from banknet.cli import main
from banknet.harness import (
    ConfigError,
    ExperimentConfig,
    ReportRow,
    TableReport,
    compare_theory_mc,
    config_hash,
    load_config,
    reproduce_table,
    run_experiment,
    write_experiment,
)
from banknet.model import MarketParams

DEMO = """\
# interior-attractor demo configuration
w = 100
alpha = 0.1
r_s = 0.17
r_b = 0.19
u = 0.2
d = -0.1
delta = 0.95
v = 40          # taxes
kind = average
eps0 = 0.5
n0 = 200
T = 2000
stride = 100
replications = 3
master_seed = 11
"""


def write_demo(tmp_path, text=DEMO, name="demo.cfg"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


def test_load_config_roundtrip(tmp_path):
    config = load_config(write_demo(tmp_path))
    assert config.params == MarketParams(w=100.0, alpha=0.1, r_s=0.17,
                                         r_b=0.19, u=0.2, d=-0.1, delta=0.95,
                                         v=40.0)
    assert config.kind == "average"
    assert config.eps0 == 0.5
    assert (config.n0, config.T, config.stride) == (200, 2000, 100)
    assert config.replications == 3
    assert config.master_seed == 11
    # defaults for everything not mentioned
    assert config.finite is False
    assert config.n_cap == 5000
    assert config.budget_s is None
    assert config.out is None


def test_load_config_accepts_scientific_counts(tmp_path):
    config = load_config(write_demo(tmp_path, DEMO.replace("T = 2000",
                                                           "T = 2e6")))
    assert config.T == 2_000_000 and isinstance(config.T, int)


def test_load_config_reports_missing_keys(tmp_path):
    path = write_demo(tmp_path, "w = 100\nalpha = 0.1\n")
    with pytest.raises(ConfigError, match="missing required key"):
        load_config(path)
    with pytest.raises(ConfigError, match="r_b"):
        load_config(path)


def test_load_config_rejects_unknown_and_duplicate_keys(tmp_path):
    path = write_demo(tmp_path, DEMO + "mystery = 3\n")
    with pytest.raises(ConfigError, match=r"17: unknown key 'mystery'"):
        load_config(path)
    path = write_demo(tmp_path, DEMO + "w = 7\n")
    with pytest.raises(ConfigError, match=r"duplicate key 'w'"):
        load_config(path)


def test_load_config_surfaces_invariant_violations(tmp_path):
    with pytest.raises(ConfigError, match="delta"):
        load_config(write_demo(tmp_path, DEMO.replace("delta = 0.95",
                                                      "delta = 1.5")))
    with pytest.raises(ConfigError, match="replications"):
        load_config(write_demo(tmp_path, DEMO.replace("replications = 3",
                                                      "replications = 0")))
    with pytest.raises(ConfigError, match="kind"):
        load_config(write_demo(tmp_path, DEMO.replace("kind = average",
                                                      "kind = drifty")))
    with pytest.raises(ConfigError, match="invalid value"):
        load_config(write_demo(tmp_path, DEMO.replace("T = 2000",
                                                      "T = soon")))
    with pytest.raises(ConfigError, match="cannot read config"):
        load_config(str(tmp_path / "absent.cfg"))


def test_config_hash_tracks_content(tmp_path):
    a = load_config(write_demo(tmp_path))
    b = load_config(write_demo(tmp_path, name="copy.cfg"))
    c = load_config(write_demo(tmp_path, DEMO.replace("v = 40", "v = 41"),
                               name="other.cfg"))
    assert config_hash(a) == config_hash(b)
    assert config_hash(a) != config_hash(c)
    assert len(config_hash(a)) == 12


def demo_config(**overrides):
    base = dict(
        params=MarketParams(w=100.0, alpha=0.1, r_s=0.17, r_b=0.19, u=0.2,
                            d=-0.1, delta=0.95, v=40.0),
        kind="average", eps0=0.5, n0=200, T=2000, stride=100,
        replications=3, master_seed=11)
    base.update(overrides)
    return ExperimentConfig(**base)


def test_run_experiment_is_reproducible_and_parallel_safe():
    config = demo_config()
    serial = run_experiment(config)
    again = run_experiment(config)
    threaded = run_experiment(config, jobs=3)
    assert np.array_equal(serial.eps_final, again.eps_final)
    assert np.array_equal(serial.eps_final, threaded.eps_final)
    assert len(serial.trajectories) == 3
    # replications differ from each other
    assert len(set(serial.eps_final.tolist())) == 3
    assert serial.clause == "1c"
    assert serial.theory_eps_star == pytest.approx(1 / 3, abs=1e-5)
    # endpoints gather near the interior attractor
    assert abs(serial.eps_final_mean - 1 / 3) < 0.05


def test_write_experiment_emits_trajectories_and_summary(tmp_path):
    config = demo_config(replications=2)
    result = run_experiment(config)
    write_experiment(result, tmp_path / "out")
    files = sorted(p.name for p in (tmp_path / "out").iterdir())
    assert files == ["summary.csv", "trajectory_000.csv", "trajectory_001.csv"]
    lines = (tmp_path / "out" / "summary.csv").read_text().strip().splitlines()
    assert lines[0] == ("config_hash,kind,finite,replications,"
                       "eps_star_theory,eps_final_mean,eps_final_std")
    cells = lines[1].split(",")
    assert cells[0] == config_hash(config)
    assert cells[1] == "average" and cells[2] == "0" and cells[3] == "2"
    assert float(cells[4]) == pytest.approx(1 / 3, abs=1e-4)
    # the two trajectory headers carry distinct replication seeds
    t0 = (tmp_path / "out" / "trajectory_000.csv").read_text()
    t1 = (tmp_path / "out" / "trajectory_001.csv").read_text()
    seed0 = [ln for ln in t0.splitlines() if ln.startswith("# seed")]
    seed1 = [ln for ln in t1.splitlines() if ln.startswith("# seed")]
    assert seed0 != seed1


def test_closed_form_reference_tables_pass():
    t1 = reproduce_table(1)
    t2 = reproduce_table(2)
    t3 = reproduce_table(3)
    assert t1.passed and len(t1.rows) == 10
    assert t2.passed and len(t2.rows) == 10
    assert t3.passed and len(t3.rows) == 8
    assert all("clause 1b" in r.note for r in t1.rows[::2])
    assert all("clause 1a" in r.note for r in t3.rows[::2])
    text = t2.to_text()
    assert text.startswith("table 2") and text.endswith("result: pass")


def test_reproduce_table_rejects_bad_index():
    with pytest.raises(ConfigError, match="table"):
        reproduce_table(9)


def test_stochastic_reference_table_light():
    report = reproduce_table(4, replications=2)
    assert len(report.rows) == 16
    assert report.passed, "\n" + report.to_text()


def test_compare_theory_mc_asymptotic():
    report = compare_theory_mc(demo_config(replications=4))
    assert report.passed
    row = report.rows[0]
    assert row.kind == "average" and not row.finite
    assert row.clause == "1c"
    assert row.replications == 4
    assert abs(row.mc_mean - 1 / 3) < 0.05


def test_compare_theory_mc_finite_classifies_basin():
    config = demo_config(replications=2, n0=60, T=200, stride=50,
                         finite=True, n_cap=60)
    report = compare_theory_mc(config)
    assert report.passed
    assert report.rows[0].finite


def test_cli_simulate_writes_output(tmp_path, capsys):
    cfg = write_demo(tmp_path)
    out = tmp_path / "runs"
    assert main(["simulate", "--config", cfg, "--out", str(out),
                 "--replications", "2", "--seed", "3"]) == 0
    captured = capsys.readouterr()
    assert "final eps mean=" in captured.out
    assert sorted(p.name for p in out.iterdir()) == [
        "summary.csv", "trajectory_000.csv", "trajectory_001.csv"]


def test_cli_equilibria_and_predict(tmp_path, capsys):
    cfg = write_demo(tmp_path)
    out = tmp_path / "eq"
    assert main(["equilibria", "--config", cfg, "--out", str(out)]) == 0
    assert main(["predict", "--config", cfg, "--out", str(out)]) == 0
    assert main(["predict", "--config", cfg, "--kind", "random"]) == 0
    captured = capsys.readouterr()
    assert "mixed" in captured.out
    assert "rule 1c" in captured.out
    assert "rule 2c" in captured.out
    eq_lines = (out / "equilibria.csv").read_text().strip().splitlines()
    assert len(eq_lines) == 4  # header + three equilibria
    pr = (out / "predict.csv").read_text().strip().splitlines()
    assert pr[0] == "kind,rule,eps_star,equilibrium_kind,approx_eps_star"
    assert pr[1].startswith("average,1c,")


def test_cli_table_closed_form(tmp_path, capsys):
    out = tmp_path / "tables"
    assert main(["table", "2", "--out", str(out)]) == 0
    assert "result: pass" in capsys.readouterr().out
    assert (out / "table2.csv").exists()


def test_cli_table_reports_failure_with_exit_2(monkeypatch, capsys):
    bad = TableReport(1, (ReportRow("broken", 1.0, None, 0.1, False, ""),))
    monkeypatch.setattr("banknet.cli.reproduce_table",
                        lambda *a, **kw: bad)
    assert main(["table", "1"]) == 2
    assert "FAIL" in capsys.readouterr().out


def test_cli_compare(tmp_path, capsys):
    cfg = write_demo(tmp_path)
    assert main(["compare", "--config", cfg]) == 0
    assert "1c" in capsys.readouterr().out


def test_cli_rejects_broken_configs(tmp_path, capsys):
    missing = str(tmp_path / "nope.cfg")
    assert main(["simulate", "--config", missing]) == 1
    bad = write_demo(tmp_path, DEMO.replace("delta = 0.95", "delta = 2"))
    assert main(["simulate", "--config", bad]) == 1
    err = capsys.readouterr().err
    assert "config error" in err
