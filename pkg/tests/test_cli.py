import json

import pytest

from qocad import cli, io

QT = """
seed = 1
[problem]
builtin = "qubit-transfer"
[optimizer]
method = "lbfgs"
max_iterations = {iters}
"""


def write(tmp_path, text, name="run.toml"):
    path = tmp_path / name
    path.write_text(text)
    return path


def test_run_writes_outputs(tmp_path, capsys):
    cfg = write(tmp_path, QT.format(iters=300))
    out = tmp_path / "out"
    assert cli.main(["run", str(cfg), "--out-dir", str(out)]) == cli.EXIT_OK
    assert sorted(p.name for p in out.iterdir()) == ["populations.csv", "pulses.csv", "report.json", "trace.jsonl"]
    trace = io.read_trace(out / "trace.jsonl")
    assert [r["iteration"] for r in trace] == list(range(1, len(trace) + 1))
    report = json.loads((out / "report.json").read_text())
    assert report["termination"] == "fidelity_reached" and report["fidelity"] >= 0.999
    assert report["iterations"] == len(trace)
    assert "fidelity_reached" in capsys.readouterr().out


def test_run_is_deterministic(tmp_path):
    cfg = write(tmp_path, QT.format(iters=15))
    a, b = tmp_path / "a", tmp_path / "b"
    assert cli.main(["run", str(cfg), "--out-dir", str(a)]) == cli.EXIT_NOT_CONVERGED
    assert cli.main(["run", str(cfg), "--out-dir", str(b)]) == cli.EXIT_NOT_CONVERGED
    assert (a / "pulses.csv").read_bytes() == (b / "pulses.csv").read_bytes()
    assert (a / "populations.csv").read_bytes() == (b / "populations.csv").read_bytes()


def test_resume_from_pulses(tmp_path):
    cfg = write(tmp_path, QT.format(iters=300))
    first = tmp_path / "first"
    cli.main(["run", str(cfg), "--out-dir", str(first)])
    # top-level keys must precede the first table header
    resumed = write(tmp_path, f'initial_pulses = "{first / "pulses.csv"}"\n' + QT.format(iters=5), "resume.toml")
    out = tmp_path / "second"
    assert cli.main(["run", str(resumed), "--out-dir", str(out)]) == cli.EXIT_OK
    assert len(io.read_trace(out / "trace.jsonl")) == 1


def test_malformed_config(tmp_path, capsys):
    cfg = write(tmp_path, "[problem\nbuiltin = 'x'")
    out = tmp_path / "never"
    assert cli.main(["run", str(cfg), "--out-dir", str(out)]) == cli.EXIT_ERROR
    assert "line" in capsys.readouterr().err
    assert not out.exists()


def test_missing_config(tmp_path):
    assert cli.main(["run", str(tmp_path / "nope.toml")]) == cli.EXIT_ERROR


def test_unknown_command_and_help():
    assert cli.main(["frobnicate"]) == cli.EXIT_ERROR
    assert cli.main(["--help"]) == cli.EXIT_OK


def test_describe(capsys):
    assert cli.main(["describe", "cat"]) == cli.EXIT_OK
    out = capsys.readouterr().out
    assert "154" in out and "Omega_x" in out
    assert cli.main(["describe", "qubit-transfer"]) == cli.EXIT_OK
    assert "300 MHz" in capsys.readouterr().out
    assert cli.main(["describe", "unknown"]) == cli.EXIT_ERROR


def test_grad_check_command(tmp_path, capsys):
    text = """
[problem]
builtin = "spin-chain"
params = { n_qubits = 1, target = "ghz", steps = 20, total_time = 1.0 }
[[costs]]
kind = "variation"
weight = 0.1
"""
    cfg = write(tmp_path, text)
    assert cli.main(["grad-check", str(cfg)]) == cli.EXIT_OK
    out = capsys.readouterr().out
    assert out.strip().endswith("PASS")
    assert cli.main(["grad-check", str(cfg), "--corrupt-gradient"]) == cli.EXIT_ERROR
    assert "FAIL" in capsys.readouterr().out


def test_grad_check_refuses_large_problems(tmp_path, capsys):
    cfg = write(tmp_path, QT.format(iters=1))
    assert cli.main(["grad-check", str(cfg)]) == cli.EXIT_ERROR
    assert "variables" in capsys.readouterr().err


def test_bench_small(tmp_path, capsys):
    out = tmp_path / "bench.csv"
    code = cli.main(["bench", "--dims", "2,4", "--steps", "10", "--scaling-dim", "4", "--out", str(out)])
    lines = out.read_text().splitlines()
    assert lines[0] == "dim,mode,ms_per_iter" and len(lines) == 5
    assert {l.split(",")[1] for l in lines[1:]} == {"unitary", "state"}
    assert code in (cli.EXIT_OK, cli.EXIT_ERROR)  # timing ratio at tiny sizes is noisy
    assert "time(2N)/time(N)" in capsys.readouterr().out


def test_bench_rejects_bad_dims(capsys):
    assert cli.main(["bench", "--dims", "3"]) == cli.EXIT_ERROR
    assert cli.main(["bench", "--dims", "4096"]) == cli.EXIT_ERROR
