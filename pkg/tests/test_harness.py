"""Config parsing, sweep persistence, determinism, and the CLI."""

import csv
import json

import numpy as np
import pytest

from ctxopt import cli, diagnostics, engine, harness, seeding
from ctxopt.errors import ConfigurationError

def _rows_without_wall_ms(path):
    # wall_ms is measured time and is the one legitimately nondeterministic
    # column; everything else must reproduce exactly.
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    for row in rows:
        row.pop("wall_ms")
    return rows


SMALL_CONFIG = """\
problem.name = BT
run.gamma = 2
run.alpha = 0.05
run.schedule = FixedHorizon
run.seed = 7
sweep = 1
replications = 1
lambda = 1
c1 = 2.24
c2 = 0.21875
output_dir = {out}
"""


def test_parse_config_full():
    text = """\
# comment
problem.name = LG(3)
problem.seed = 4
run.gamma = 20
run.alpha = auto
run.schedule = Anytime
run.seed = 99
run.init_beta = 0.1,0.2,0.3
sweep = 8, 16, 32
replications = 5
lambda = 2.5
output_dir = somewhere
ledger.estimate = true
ledger.M = 0.5
workers = 2
"""
    config = harness.parse_config(text)
    assert config.problem_name == "LG(3)"
    assert config.problem_params == {"seed": "4"}
    assert config.alpha is None
    assert config.schedule is engine.Schedule.ANYTIME
    assert config.seed == 99
    assert config.init_beta == [0.1, 0.2, 0.3]
    assert config.sweep == [8, 16, 32]
    assert config.replications == 5
    assert config.lam == 2.5 and config.c1 is None
    assert config.estimate_ledger is True
    assert config.ledger_overrides == {"M": 0.5}
    assert config.workers == 2


def test_parse_config_rejects_unknown_keys_and_bad_sweep():
    with pytest.raises(ConfigurationError):
        harness.parse_config("problem.name=BT\nrun.gamma=1\nsweep=4\nbogus=1\n")
    with pytest.raises(ConfigurationError):
        harness.parse_config("problem.name=BT\nrun.gamma=1\nsweep=8,4\n")
    with pytest.raises(ConfigurationError):
        harness.parse_config("run.gamma=1\nsweep=4\n")


def test_smallest_run_writes_single_row(tmp_path, bt):
    config = harness.parse_config(SMALL_CONFIG.format(out=tmp_path / "out"))
    result = harness.run_experiment(config)
    with open(result["results"], newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 1
    row = rows[0]
    assert list(row) == harness.RESULT_COLUMNS
    assert int(row["N"]) == 1
    assert int(row["S"]) == 0  # the only admissible stopping index
    assert int(row["samples_used"]) == 1  # exact diagnostics draw nothing
    # V at S=0 is V(z^0) with the configured weights
    q0, _ = diagnostics.tracking_error_Q(bt.spec, np.zeros(1), np.zeros(2))
    g0, _ = diagnostics.grad_G(bt.spec, np.zeros(1))
    assert float(row["V_at_S"]) == pytest.approx(
        2.24 * q0 + 0.21875 * float(g0 @ g0), abs=1e-12)


def test_rerun_is_byte_identical(tmp_path):
    text = """\
problem.name = BT
run.gamma = 2
run.alpha = 0.05
run.seed = 11
sweep = 4,8
replications = 3
lambda = 1
c1 = 1
c2 = 1
output_dir = {out}
"""
    a = harness.run_experiment(harness.parse_config(text.format(out=tmp_path / "a")))
    b = harness.run_experiment(harness.parse_config(text.format(out=tmp_path / "b")))
    assert _rows_without_wall_ms(tmp_path / "a" / "results.csv") == \
        _rows_without_wall_ms(tmp_path / "b" / "results.csv")
    assert (tmp_path / "a" / "summary.csv").read_bytes() == \
        (tmp_path / "b" / "summary.csv").read_bytes()
    assert a["summary_rows"] == b["summary_rows"]


def test_worker_pool_matches_serial(tmp_path, monkeypatch):
    text = """\
problem.name = BT
run.gamma = 2
run.alpha = 0.05
run.seed = 13
sweep = 4,8
replications = 2
lambda = 1
c1 = 1
c2 = 1
output_dir = {out}
workers = {workers}
"""
    monkeypatch.delenv("CTXOPT_WORKERS", raising=False)
    harness.run_experiment(harness.parse_config(
        text.format(out=tmp_path / "serial", workers=1)))
    harness.run_experiment(harness.parse_config(
        text.format(out=tmp_path / "pool", workers=2)))
    assert _rows_without_wall_ms(tmp_path / "serial" / "results.csv") == \
        _rows_without_wall_ms(tmp_path / "pool" / "results.csv")


def test_seed_mixing_per_replication(tmp_path):
    config = harness.parse_config(
        "problem.name=BT\nrun.gamma=2\nrun.alpha=0.05\nrun.seed=21\n"
        f"sweep=2,4\nreplications=2\nlambda=1\nc1=1\nc2=1\noutput_dir={tmp_path}\n")
    result = harness.run_experiment(config)
    with open(result["results"], newline="") as fh:
        rows = list(csv.DictReader(fh))
    seeds = {(int(r["N"]), int(r["replication"])): int(r["seed"]) for r in rows}
    for (n, r), seed in seeds.items():
        assert seed == seeding.mix(21, n, r)
    assert len(set(seeds.values())) == len(seeds)


def test_manifest_contents(tmp_path):
    config = harness.parse_config(SMALL_CONFIG.format(out=tmp_path))
    result = harness.run_experiment(config)
    manifest = json.loads(result["manifest"].read_text())
    assert manifest["problem"] == "BT"
    assert set(manifest["ledger"]) == {"L_g", "L_hess_g", "Lbar_f", "C_f",
                                       "Lbar_grad_f", "Lbar_psi", "C_psi",
                                       "Lbar_grad_psi", "M"}
    assert manifest["derived"]["c1"] == 2.24
    assert len(manifest["config_sha256"]) == 64


def test_read_summary_round_trip(tmp_path):
    config = harness.parse_config(
        "problem.name=BT\nrun.gamma=2\nrun.alpha=0.05\nrun.seed=1\n"
        f"sweep=2,4\nreplications=2\nlambda=1\nc1=1\nc2=1\noutput_dir={tmp_path}\n")
    result = harness.run_experiment(config)
    rows = harness.read_summary(result["summary"])
    assert [n for n, _ in rows] == [2, 4]
    assert rows[0][1] == pytest.approx(result["summary_rows"][0]["mean_V"])


def test_cli_check_worked_example(capsys):
    status = cli.main(["check", "BT", "--unit-ledger", "--lambda", "3",
                       "--gamma", "20"])
    out = capsys.readouterr().out
    assert status == 0
    assert "COMPLIANT" in out
    assert "cap_C" in out and "8" in out


def test_cli_check_gamma_boundary(capsys):
    status = cli.main(["check", "BT", "--unit-ledger", "--lambda", "3",
                       "--gamma", "16.5"])
    out = capsys.readouterr().out
    assert status == 1
    assert "gamma" in out and "NON-COMPLIANT" in out


def test_cli_check_lambda_floor(capsys):
    status = cli.main(["check", "BT", "--unit-ledger", "--lambda", "1",
                       "--gamma", "20"])
    out = capsys.readouterr().out
    assert status == 1
    assert "floor" in out


def _write_summary(path, rows):
    with open(path, "w") as fh:
        fh.write("N,mean_V,stderr_V,replications\n")
        for n, v in rows:
            fh.write(f"{n},{float(v)!r},0.0,30\n")


def test_cli_rate_synthetic_laws(tmp_path, capsys):
    ns = [64, 256, 1024, 4096]
    good = tmp_path / "good.csv"
    _write_summary(good, [(n, 2.0 / np.sqrt(n)) for n in ns])
    assert cli.main(["rate", str(good)]) == 0
    out = capsys.readouterr().out
    assert "slope" in out

    bad = tmp_path / "bad.csv"
    _write_summary(bad, [(n, 2.0 / n) for n in ns])
    assert cli.main(["rate", str(bad)]) == 1

    short = tmp_path / "short.csv"
    _write_summary(short, [(n, 1.0 / n) for n in ns[:3]])
    assert cli.main(["rate", str(short)]) == 2
    capsys.readouterr()


def test_cli_gradcheck(capsys):
    assert cli.main(["gradcheck", "BT", "--probes", "20"]) == 0
    out = capsys.readouterr().out
    assert "ok" in out


def test_cli_run_smoke(tmp_path, capsys):
    config_path = tmp_path / "exp.cfg"
    config_path.write_text(SMALL_CONFIG.format(out=tmp_path / "out"))
    assert cli.main(["run", str(config_path)]) == 0
    out = capsys.readouterr().out
    assert "results.csv" in out
    assert (tmp_path / "out" / "summary.csv").exists()


def test_cli_reports_config_errors(tmp_path, capsys):
    config_path = tmp_path / "broken.cfg"
    config_path.write_text("problem.name = BT\nsweep = 4\n")
    assert cli.main(["run", str(config_path)]) == 1
    assert "error" in capsys.readouterr().err
