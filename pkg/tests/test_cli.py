import csv
import json
import subprocess
import sys
from pathlib import Path

import pytest

from tarskimfg.cli import main

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def run(tmp_path, *args):
    return main([*args, "--out", str(tmp_path)])


def write_config(tmp_path, data, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(data))
    return str(path)


class TestSolve:
    def test_markov_benchmark(self, tmp_path, capsys):
        assert run(tmp_path, "solve", "--config", str(CONFIGS / "markov_benchmark.json")) == 0
        report = json.loads((tmp_path / "report.json").read_text())
        up, down = report["chains"]["up"], report["chains"]["down"]
        assert up["converged"] and down["converged"]
        assert up["terminal_mass"] == 0.0
        assert down["terminal_mass"] == pytest.approx(0.8, abs=1e-9)
        assert report["meta"]["prng"] == "numpy.PCG64" and report["meta"]["seed"] == 0
        with open(tmp_path / "trace_up.csv") as fh:
            rows = list(csv.DictReader(fh))
        assert list(rows[0]) == ["iteration", "residual", "F_value", "monotone_ok"]

    def test_stopping_benchmark(self, tmp_path):
        assert run(tmp_path, "solve", "--config", str(CONFIGS / "stopping_benchmark.json")) == 0
        report = json.loads((tmp_path / "report.json").read_text())
        up = report["chains"]["up"]
        assert up["converged"] and up["monotone"]
        assert [len(flags) for flags in up["rule"]] == [1, 4, 16, 64]
        assert all(up["rule"][-1])

    def test_direction_flag(self, tmp_path):
        assert run(tmp_path, "solve", "--config", str(CONFIGS / "markov_benchmark.json"), "--direction", "up") == 0
        report = json.loads((tmp_path / "report.json").read_text())
        assert list(report["chains"]) == ["up"]

    def test_reports_are_deterministic(self, tmp_path):
        cfg = str(CONFIGS / "markov_benchmark.json")
        a, b = tmp_path / "a", tmp_path / "b"
        assert main(["solve", "--config", cfg, "--out", str(a), "--seed", "7"]) == 0
        assert main(["solve", "--config", cfg, "--out", str(b), "--seed", "7"]) == 0
        assert (a / "report.json").read_bytes() == (b / "report.json").read_bytes()
        assert (a / "trace_down.csv").read_bytes() == (b / "trace_down.csv").read_bytes()

    def test_decreasing_psi_is_structural(self, tmp_path, capsys):
        assert run(tmp_path, "solve", "--config", str(CONFIGS / "markov_decreasing_psi.json")) == 2
        assert "not monotone" in capsys.readouterr().err

    def test_nonconvergence_is_structural(self, tmp_path):
        assert run(tmp_path, "solve", "--config", str(CONFIGS / "markov_benchmark.json"), "--max-iter", "1") == 2

    def test_resource_error(self, tmp_path):
        cfg = write_config(tmp_path, {"model": "markov", "markov": {"T": 6, "control_grid": {"uniform": 11}}})
        assert run(tmp_path, "enumerate", "--config", cfg) == 3


class TestConfigErrors:
    def test_malformed_json_reports_position(self, tmp_path, capsys):
        path = tmp_path / "bad.json"
        path.write_text('{"model": "markov",\n  "markov": {,}}')
        assert run(tmp_path, "solve", "--config", str(path)) == 1
        assert ":2:14:" in capsys.readouterr().err

    def test_unknown_model(self, tmp_path):
        assert run(tmp_path, "solve", "--config", write_config(tmp_path, {"model": "queue"})) == 1

    def test_missing_file(self, tmp_path):
        assert run(tmp_path, "solve", "--config", str(tmp_path / "absent.json")) == 1

    def test_bad_tolerance(self, tmp_path):
        cfg = write_config(tmp_path, {"model": "markov", "tolerance": -1})
        assert run(tmp_path, "solve", "--config", cfg) == 1

    def test_bad_model_parameters(self, tmp_path):
        cfg = write_config(tmp_path, {"model": "markov", "markov": {"transitions": {"two_state": {"p": 2.0}}}})
        assert run(tmp_path, "solve", "--config", cfg) == 1


class TestVerify:
    def test_markov_benchmark_passes(self, tmp_path):
        assert run(tmp_path, "verify", "--config", str(CONFIGS / "markov_benchmark.json")) == 0
        report = json.loads((tmp_path / "verify.json").read_text())
        assert report["passed"] and [s["suite"] for s in report["suites"]] == [
            "lattice", "submodularity", "directedness", "oracle"]

    def test_stopping_benchmark_passes(self, tmp_path):
        assert run(tmp_path, "verify", "--config", str(CONFIGS / "stopping_benchmark.json")) == 0

    def test_decreasing_psi_names_probe(self, tmp_path, capsys):
        code = run(tmp_path, "verify", "--config", str(CONFIGS / "markov_decreasing_psi.json"),
                   "--suite", "submodularity")
        assert code == 2
        assert "submodularity probe" in capsys.readouterr().err

    def test_empty_suite(self, tmp_path):
        assert run(tmp_path, "verify", "--config", str(CONFIGS / "markov_benchmark.json"), "--suite", "") == 1

    def test_unknown_suite(self, tmp_path):
        assert run(tmp_path, "verify", "--config", str(CONFIGS / "markov_benchmark.json"), "--suite", "nope") == 1


class TestOtherCommands:
    def test_enumerate_markov(self, tmp_path):
        cfg = write_config(tmp_path, {"model": "markov", "markov": {"control_grid": [0, 0.5, 1]}})
        assert run(tmp_path, "enumerate", "--config", cfg) == 0
        report = json.loads((tmp_path / "enumerate.json").read_text())
        assert report["terminal_masses"] == [0.0, 0.4, 0.8]

    def test_trace_writes_csv(self, tmp_path):
        assert run(tmp_path, "trace", "--config", str(CONFIGS / "markov_benchmark.json")) == 0
        assert (tmp_path / "trace_up.csv").exists() and (tmp_path / "trace_down.csv").exists()

    def test_module_entry_point(self, tmp_path):
        proc = subprocess.run(
            [sys.executable, "-m", "tarskimfg", "solve", "--config", str(CONFIGS / "markov_benchmark.json"),
             "--out", str(tmp_path)],
            capture_output=True, text=True, env={"MFG_LOG": "debug", "PATH": ""},
        )
        assert proc.returncode == 0
        assert "up step 1" in proc.stderr
