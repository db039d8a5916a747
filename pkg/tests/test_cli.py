import json

import pytest

from mcflab import cli
from mcflab.report import CriterionResult, emit_report


def test_config_layering(tmp_path):
    p = tmp_path / "c.toml"
    p.write_text("dt = 1e-3\nseed = 4\nstop.time = 0.5\n")
    cfg = cli.resolve_config(str(p), {"seed": 7}, environ={"MCFLAB_DT": "2e-3",
                                                          "MCFLAB_STOP__TIME": "0.25"})
    assert cfg["dt"] == 2e-3 and cfg["seed"] == 7 and cfg["stop.time"] == 0.25
    assert cli.flow_config(cfg).max_time == 0.25


def test_kernel_command(tmp_path):
    code, man = cli.run_command(["kernel", "--check", "log-profile", "--r", "1e-3",
                                 "--out", str(tmp_path)])
    assert code == 0
    body = json.loads((tmp_path / "kernel.json").read_text())
    assert body["ratio"] == pytest.approx(1.0585631, rel=1e-6)
    assert body["schema_version"] == 1
    assert all((tmp_path / o).exists() or __import__("os").path.exists(o) for o in man["outputs"])


def test_evolve_and_rescale(tmp_path):
    code, man = cli.run_command(["evolve", "--primitive", "sphere:3", "--dt", "1e-3",
                                 "--max-time", "0.2", "--out", str(tmp_path)])
    assert code == 0
    trace = tmp_path / "trace.csv"
    code, _ = cli.run_command(["rescale", "--trace", str(trace), "--out", str(tmp_path / "r")])
    T = json.loads((tmp_path / "r" / "extinction.json").read_text())["T_hat"]
    assert code == 0 and abs(T - 0.25) < 0.01


def test_stage_error_sets_exit_code(tmp_path):
    code, man = cli.run_command(["decompose", "--primitive", "plane", "--eps", "0.01", "--R", "1",
                                 "--out", str(tmp_path)])
    assert code == 2 and man["error"]["stage"] == "decompose"
    assert json.loads((tmp_path / "manifest.json").read_text())["exit_code"] == 2


def test_missing_input(tmp_path):
    code, man = cli.run_command(["analyze", "--mesh", str(tmp_path / "nope.obj"),
                                 "--out", str(tmp_path)])
    assert code == 2


def test_unknown_flag():
    with pytest.raises(SystemExit) as exc:
        cli.run_command(["kernel", "--bogus"])
    assert exc.value.code == 2


def test_verify_subset_is_deterministic(tmp_path):
    outs = []
    for k in range(2):
        d = tmp_path / str(k)
        code, man = cli.run_command(["verify-all", "--suite", "desk", "--only", "12,16,17",
                                     "--seed", "3", "--out", str(d)])
        assert code == 0 and man["tallies"] == {"passed": 3, "failed": 0}
        outs.append(((d / "acceptance.csv").read_bytes(), (d / "acceptance.json").read_bytes()))
    assert outs[0] == outs[1]
    assert outs[0][0].splitlines()[0] == b"criterion,expected,measured,tolerance,pass"


def test_emit_report_rejects_empty(tmp_path):
    with pytest.raises(ValueError):
        emit_report([], "csv", str(tmp_path / "a.csv"))
    r = CriterionResult(1, "x", "1", "1", "0", True)
    with pytest.raises(ValueError):
        emit_report([r], "xml", str(tmp_path / "a.xml"))
