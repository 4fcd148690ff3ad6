import json
import subprocess
import sys

from intermittent.cli import main


def test_traces_list(capsys):
    assert main(["traces", "list"]) == 0
    out = capsys.readouterr().out
    assert "strong" in out and "weak" in out


def test_run_writes_outputs(tmp_path, capsys):
    cfg = tmp_path / "exp.ini"
    cfg.write_text("[experiment]\nscheme = ours\ntrace = weak\nduration_ms = 2000\n")
    sched = tmp_path / "crash.txt"
    sched.write_text("ctx_switch 4\n")
    out = tmp_path / "out"
    assert main(["run", "--config", str(cfg), "--seed", "3", "--crash-schedule", str(sched),
                 "--out", str(out)]) == 0
    text = capsys.readouterr().out
    assert "OURS on weak" in text and "digest" in text
    rep = json.loads((out / "report.json").read_text())
    assert rep["crashes"] == 1 and rep["seed"] == 3
    assert (out / "events.ndjson").stat().st_size > 0


def test_run_json(capsys):
    assert main(["run", "--duration-ms", "300", "--json"]) == 0
    assert json.loads(capsys.readouterr().out)["duration_ms"] == 300


def test_config_errors_exit_2(tmp_path, capsys):
    cfg = tmp_path / "bad.ini"
    cfg.write_text("[experiment]\nscheme = nope\nduration_ms = -1\n")
    assert main(["run", "--config", str(cfg)]) == 2
    err = capsys.readouterr().err
    assert err.count("error:") == 2


def test_compare(capsys):
    assert main(["compare", "--schemes", "ours,log", "--duration-ms", "1000"]) == 0
    out = capsys.readouterr().out
    assert "OURS/LOG(20ms)" in out


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "intermittent", "traces", "list"],
                          capture_output=True, text=True, check=True)
    assert "stable" in proc.stdout
