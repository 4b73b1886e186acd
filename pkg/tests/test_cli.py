"""End-to-end tests of the command-line interface (in-process)."""

import json
import subprocess
import sys

import numpy as np
import pytest

from h2tau.cli import main


def test_example_lists_tags(capsys):
    assert main(["example"]) == 0
    out = capsys.readouterr().out
    for tag in ("conv-sys", "rdde-1", "ndde-2"):
        assert tag in out


def test_example_dump_and_reload(tmp_path, capsys):
    path = tmp_path / "sys.json"
    assert main(["example", "--example", "rdde-2", "--out", str(path)]) == 0
    capsys.readouterr()  # drain
    data = json.loads(path.read_text())
    assert "E" in data and "A" in data and "parameters" in data

    # the dumped file evaluates to the same norm as the built-in system
    assert main(["norm", "--system", str(path), "--degree", "30"]) == 0
    from_file = capsys.readouterr().out
    assert main(["norm", "--example", "rdde-2", "--degree", "30"]) == 0
    from_tag = capsys.readouterr().out
    assert from_file == from_tag


def test_check_exit_codes():
    assert main(["check", "--example", "rdde-1"]) == 0
    assert main(["check", "--example", "intro-feedthrough"]) == 1
    assert main(["check", "--example", "conv-sys", "--degree", "12"]) == 1


def test_input_error_exit_codes(tmp_path, capsys):
    assert main(["norm", "--example", "not-a-system"]) == 2
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert main(["check", "--system", str(bad)]) == 2
    # conv-sys switches on a non-conv-sys source
    assert main(["norm", "--example", "rdde-1", "--delta", "1,0,0,0"]) == 2
    assert main(["sweep", "--example", "rdde-2", "--degrees", "8:0:16"]) == 2
    assert main(["sweep", "--example", "rdde-2", "--degrees", "16:2:8"]) == 2


def test_norm_output_and_json(tmp_path, capsys):
    out = tmp_path / "norm.json"
    assert main(["norm", "--example", "ndde-2", "--out", str(out)]) == 0
    printed = capsys.readouterr().out
    assert "3.228" in printed
    payload = json.loads(out.read_text())
    assert abs(payload["h2"] - 3.228) < 1e-3
    assert abs(payload["h2_squared"] - payload["h2"] ** 2) < 1e-9
    assert payload["degree"] == 40
    assert payload["flipped_poles"] == []


def test_norm_set_override(capsys):
    # overriding the feedback gains moves the norm to the synthesized value
    assert (
        main(
            [
                "norm",
                "--example",
                "ndde-1",
                "--set",
                "p1=-0.272608",
                "--set",
                "p2=-1.50054",
            ]
        )
        == 0
    )
    out = capsys.readouterr().out
    assert "0.6595" in out


def test_set_unknown_parameter_is_input_error(capsys):
    assert main(["norm", "--example", "ndde-1", "--set", "zz=1.0"]) == 2
    assert main(["norm", "--example", "ndde-1", "--set", "p1:0.5"]) == 2


def test_oracle_agrees_with_norm(capsys):
    assert main(["oracle", "--example", "rdde-2", "--tol", "1e-8"]) == 0
    oracle_out = capsys.readouterr().out
    value = float(oracle_out.split(":")[1].split()[0])
    assert abs(value - 0.42768) < 1e-4


def test_sweep_csv_deterministic(tmp_path, monkeypatch):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    args = ["sweep", "--example", "rdde-2", "--degrees", "8:4:24", "--reference", "oracle"]
    monkeypatch.setenv("H2TAU_WORKERS", "1")
    assert main(args + ["--out", str(a)]) == 0
    monkeypatch.setenv("H2TAU_WORKERS", "3")
    assert main(args + ["--out", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()
    lines = a.read_text().strip().split("\n")
    assert lines[0] == "N,h2,abs_error,mode"
    assert len(lines) == 1 + len(range(8, 25, 4))


def test_sweep_reports_fit(capsys):
    code = main(
        ["sweep", "--example", "conv-sys", "--delta", "1,1,0,0", "--degrees", "8:4:32"]
    )
    assert code == 0
    captured = capsys.readouterr()
    # CSV on stdout, fit summary and notes on stderr
    assert captured.out.startswith("N,h2,abs_error,mode")
    assert "algebraic order" in captured.err
    # unstable family: evaluation continues with reflected poles, noted too
    assert "reflected" in captured.err


def test_grad_table(capsys):
    assert main(["grad", "--example", "ndde-1", "--degree", "20", "--step", "1e-5"]) == 0
    out = capsys.readouterr().out
    assert "p1" in out and "p2" in out
    assert "max relative error" in out


def test_synth_subset_and_bounds(tmp_path, capsys):
    trace = tmp_path / "trace.csv"
    code = main(
        [
            "synth",
            "--example",
            "ndde-1",
            "--params",
            "p1,p2",
            "--bound",
            "p1=-2:2",
            "--trace",
            str(trace),
        ]
    )
    assert code == 0
    out = capsys.readouterr().out
    assert "converged" in out
    assert "0.6595" in out
    header = trace.read_text().split("\n", 1)[0]
    assert header == "iter,fval,gnorm,step,accepted"


def test_synth_infeasible_start_exits_one(capsys):
    assert main(["synth", "--example", "intro-feedthrough"]) == 1


def test_module_entry_point_runs():
    proc = subprocess.run(
        [sys.executable, "-m", "h2tau.cli", "example"],
        capture_output=True,
        text=True,
        timeout=120,
    )
    assert proc.returncode == 0
    assert "rdde-1" in proc.stdout
