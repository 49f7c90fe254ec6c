import csv
import io

import numpy as np
import pytest

from bhatt import classical, cli, quantum, scenarios
from bhatt.evaluation import estimator_moments
from bhatt.model import evaluate_stack, write_model_file
from helpers import qubit_stack


def run(capsys, *argv):
    code = cli.main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture(autouse=True)
def no_env_config(monkeypatch):
    monkeypatch.delenv("BHATT_CONFIG", raising=False)


@pytest.fixture
def quad2_file(tmp_path):
    path = tmp_path / "quad2.tsv"
    write_model_file(evaluate_stack(scenarios.quadratic_two_point(), 0.6, 2), path)
    return path


def table_rows(out):
    rows = {}
    for line in out.splitlines():
        parts = line.split()
        if parts and parts[0].isdigit():
            rows[int(parts[0])] = parts
    return rows


class TestBounds:
    def test_qubit(self, capsys):
        code, out, err = run(capsys, "bounds", "--scenario", "qubit", "--lambda", "0.25", "--theta0", "0.1", "--order", "2")
        assert code == 0 and err == ""
        rows = table_rows(out)
        assert rows[1][1:4] == ["QCRB", "25", "finite"]
        assert float(rows[2][2]) > 25
        assert "max_nontrivial_order: 2" in out

    def test_bernoulli_order_two_is_trivial(self, capsys):
        code, out, _ = run(capsys, "bounds", "--scenario", "bernoulli", "--theta0", "0.5", "--order", "2")
        rows = table_rows(out)
        assert code == 0
        assert rows[1][2] == rows[2][2] == "0.25"
        assert rows[2][4] == "1"

    def test_model_file_strict_divergent(self, capsys, quad2_file):
        code, out, _ = run(capsys, "bounds", "--model-file", str(quad2_file), "--order", "2", "--strict")
        assert code == 2
        assert table_rows(out)[2][3] == "divergent"
        code, _, _ = run(capsys, "bounds", "--model-file", str(quad2_file), "--order", "2")
        assert code == 0

    def test_csv_output_matches_library(self, capsys, tmp_path):
        out_path = tmp_path / "b.csv"
        code, _, _ = run(capsys, "bounds", "--scenario", "binomial3", "--theta0", "0.4", "--order", "3", "--out", str(out_path))
        assert code == 0
        rows = list(csv.DictReader(out_path.open()))
        reps = classical.bound_hierarchy(evaluate_stack(scenarios.binomial(3), 0.4, 3), 3)
        for row, rep in zip(rows, reps):
            assert float(row["value"]) == rep.value
            assert row["status"] == rep.status

    def test_density_file(self, capsys, tmp_path):
        path = tmp_path / "rho.txt"
        quantum.write_density_file(qubit_stack(0.25, 0.1, 3), path)
        code, out, _ = run(capsys, "bounds", "--density-file", str(path), "--order", "3", "--strict")
        assert code == 2
        rows = table_rows(out)
        assert rows[1][2] == "25" and rows[3][3] == "divergent"

    def test_mach_zehnder_alias(self, capsys):
        code, out, _ = run(capsys, "bounds", "--scenario", "mz", "--order", "2")
        assert code == 0
        assert table_rows(out)[1][2] == "2e-08"

    def test_out_of_regime_warning(self, capsys):
        code, _, err = run(capsys, "bounds", "--scenario", "mach-zehnder", "--r", "100", "--theta0", "0.6", "--order", "1")
        assert code == 0
        assert "tested small-angle regime" in err


class TestExists:
    def test_qubit_solvable(self, capsys):
        code, out, _ = run(capsys, "exists", "--scenario", "qubit", "--order", "2", "--strict")
        assert code == 0
        assert "order 2: solvable" in out

    def test_quadratic_unsolvable(self, capsys):
        code, out, _ = run(capsys, "exists", "--scenario", "quad2", "--order", "2", "--strict")
        assert code == 2
        assert "order 2: unsolvable" in out and "witness=" in out

    @pytest.mark.parametrize("scenario", ["bernoulli", "cubic", "qubit", "qutrit"])
    def test_order_zero(self, capsys, scenario):
        code, out, _ = run(capsys, "exists", "--scenario", scenario, "--order", "0")
        assert code == 0
        assert "order 0: solvable" in out

    @pytest.mark.parametrize("scenario", ["bernoulli", "quad2", "binomial2", "cubic", "skip2", "qubit", "qutrit"])
    def test_verdicts_match_bounds(self, capsys, scenario):
        _, out_b, _ = run(capsys, "bounds", "--scenario", scenario, "--order", "4")
        _, out_e, _ = run(capsys, "exists", "--scenario", scenario, "--order", "4")
        statuses = {k: v[3] for k, v in table_rows(out_b).items()}
        for line in out_e.splitlines():
            if line.startswith("order ") and not line.startswith("order 0"):
                k = int(line.split()[1].rstrip(":"))
                solvable = line.split()[2] == "solvable"
                assert solvable == (statuses[k] == "finite")


class TestScan:
    def test_mach_zehnder_csv(self, capsys, tmp_path):
        out = tmp_path / "mz.csv"
        gp = tmp_path / "mz.gp"
        code, stdout, _ = run(capsys, "scan", "--scenario", "mach-zehnder", "--order", "2", "--out", str(out), "--gnuplot", str(gp))
        assert code == 0
        rows = list(csv.DictReader(out.open()))
        assert {r["estimator"] for r in rows} == {"crb", "bhb2"}
        assert len(rows) == 2 * 401
        assert stdout.count("delta=") == 10
        assert str(out) in gp.read_text()

    def test_singleton_grid(self, capsys):
        code, out, _ = run(capsys, "scan", "--scenario", "binomial3", "--order", "2", "--grid", "0.35:0.35:1")
        assert code == 0
        lines = out.strip().splitlines()
        assert len(lines) == 3

    def test_divergent_order_skipped(self, capsys):
        code, out, err = run(capsys, "scan", "--scenario", "quad2", "--order", "2", "--strict")
        assert code == 2
        assert "order 2 bound diverges" in err
        assert "bhb2" not in out

    def test_threads_do_not_change_output(self, capsys, tmp_path):
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        run(capsys, "scan", "--scenario", "qubit", "--order", "2", "--out", str(a))
        run(capsys, "scan", "--scenario", "qubit", "--order", "2", "--out", str(b), "--threads", "3")
        assert a.read_bytes() == b.read_bytes()

    def test_numbers_reproducible_from_library(self, capsys):
        code, out, _ = run(capsys, "scan", "--scenario", "binomial3", "--order", "1", "--grid", "0.3:0.5:3")
        rows = list(csv.DictReader(io.StringIO(out)))
        stack = evaluate_stack(scenarios.binomial(3), 0.4, 1)
        est = classical.bhatt_estimator(stack, classical.bhatt_matrix(stack, 1))
        for row, theta in zip(rows, np.linspace(0.3, 0.5, 3)):
            m = estimator_moments(scenarios.binomial(3), est, theta)
            assert float(row["mse"]) == m.mse

    def test_scan_needs_scenario(self, capsys, quad2_file):
        code, _, err = run(capsys, "scan", "--model-file", str(quad2_file))
        assert code == 3 and "scenario" in err


class TestConfig:
    def test_env_config_and_flag_precedence(self, capsys, tmp_path, monkeypatch):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("scenario = qubit\nlambda = 0.1\ntheta0 = 0.2\norder = 3  # comment\n")
        monkeypatch.setenv("BHATT_CONFIG", str(cfg))
        code, out, _ = run(capsys, "bounds", "--order", "1")
        assert code == 0
        rows = table_rows(out)
        assert list(rows) == [1]
        Q = scenarios.qubit_q_closed_form(0.1, 0.2)
        assert float(rows[1][2]) == pytest.approx(1 / Q[0, 0], rel=1e-5)

    def test_explicit_config_overrides_env(self, capsys, tmp_path, monkeypatch):
        env_cfg = tmp_path / "env.cfg"
        env_cfg.write_text("scenario = quad2\n")
        flag_cfg = tmp_path / "flag.cfg"
        flag_cfg.write_text("scenario = bernoulli\ntheta0 = 0.5\n")
        monkeypatch.setenv("BHATT_CONFIG", str(env_cfg))
        code = cli.main(["bounds", "--config", str(flag_cfg), "--order", "1"])
        out, _ = capsys.readouterr()
        assert code == 0 and "model: bernoulli" in out

    @pytest.mark.parametrize(
        "argv",
        [
            ["bounds"],
            ["bounds", "--scenario", "nope"],
            ["bounds", "--scenario", "qubit", "--order", "0"],
            ["bounds", "--scenario", "qubit", "--model-file", "x.tsv"],
            ["bounds", "--scenario", "bernoulli", "--theta0", "1.5"],
            ["bounds", "--scenario", "qubit", "--lambda", "2"],
            ["scan", "--scenario", "qubit", "--grid", "1:0:5"],
            ["scan", "--scenario", "qubit", "--grid", "bad"],
            ["bounds", "--model-file", "/nonexistent/file.tsv"],
            ["bounds", "--scenario", "qubit", "--threads", "0"],
        ],
    )
    def test_invalid_config_exits_3(self, capsys, argv):
        code, out, err = run(capsys, *argv)
        assert code == 3
        assert out == "" and err.startswith("bhatt:")

    @pytest.mark.parametrize("argv", [["frobnicate"], ["bounds", "--order", "two"], []])
    def test_argparse_errors_exit_3(self, capsys, argv):
        with pytest.raises(SystemExit) as exc:
            cli.main(argv)
        assert exc.value.code == 3
        capsys.readouterr()

    def test_unknown_config_key(self, capsys, tmp_path):
        cfg = tmp_path / "bad.cfg"
        cfg.write_text("scenario = qubit\nbogus = 1\n")
        code = cli.main(["bounds", "--config", str(cfg)])
        _, err = capsys.readouterr()
        assert code == 3 and "bogus" in err

    def test_stdout_empty_on_failure(self, capsys):
        code = cli.main(["bounds", "--scenario", "bernoulli", "--theta0", "1.5"])
        out, err = capsys.readouterr()
        assert code == 3 and out == "" and "outside domain" in err
