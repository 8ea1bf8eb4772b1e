from __future__ import annotations

import csv
import io
import json
import subprocess
import sys

import pytest

from recdigits.cli import main


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr().out
    return code, out


def run_json(capsys, *argv):
    code, out = run(capsys, *argv)
    return code, json.loads(out)


def test_analyze_real_pair(capsys):
    code, rep = run_json(capsys, "analyze", "--poly", "14,-8,1", "--k", "0")
    assert code == 0
    assert rep["spec"]["B"] == 11 and rep["spec"]["p"] == 2
    assert rep["version"] and rep["config"]["poly"] == "14,-8,1"


def test_analyze_multiple_roots(capsys):
    code, rep = run_json(capsys, "analyze", "--poly", "4,-4,1", "--k", "0")
    assert code == 2 and rep["error"] == "MultipleRoots"


def test_analyze_exponent_offset(capsys):
    code, rep = run_json(capsys, "analyze", "--poly", "-2,1", "--k", "1")
    assert code == 0 and rep["spec"]["D"] == 2


def test_orbit_digit_window(capsys):
    code, rep = run_json(capsys, "orbit", "--poly", "-2,1", "--k", "0", "--init", "1/2", "--digits", "-2..4")
    assert code == 0 and rep["digits"]["values"] == "0 1 -1 0 0 0"


def test_orbit_lambda_counts(capsys):
    code, rep = run_json(capsys, "orbit", "--poly", "-1,-1,1", "--k", "0", "--init", "1",
                         "--lambda", "I=-1/8:1/8", "--N", "10")
    assert code == 0 and rep["lambda"][0]["count_in"] == 6
    code, rep = run_json(capsys, "orbit", "--init", "0", "--lambda", "I=0:1/2", "--N", "5")
    assert code == 0 and rep["lambda"][0]["count_in"] == 5


def test_orbit_stream_path_agrees(capsys):
    args = ["orbit", "--poly", "-1,-1,1", "--init", "2/7", "--lambda", "I=-1/4:1/8", "--N", "300"]
    _, a = run_json(capsys, *args)
    _, b = run_json(capsys, *args, "--path", "stream")
    assert a["lambda"][0]["count_in"] == b["lambda"][0]["count_in"]


def test_profile_csv_schema(capsys):
    code, out = run(capsys, "orbit", "--init", "1/3", "--path", "stream", "--profile", "3",
                    "--checkpoints", "50,100", "--format", "csv")
    assert code == 0
    rows = list(csv.DictReader(io.StringIO(out)))
    assert list(rows[0]) == ["N", "interval_id", "ratio", "deviation", "uncertain"]
    assert len(rows) == 6


def test_goodness_report(capsys):
    code, rep = run_json(capsys, "orbit", "--init", "0", "--good", "1", "--N", "100")
    assert code == 0 and rep["good"]["good"] is False


def test_bad_usage_exits_2(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["reduce", "--stages", "0"])
    assert exc.value.code == 2
    with pytest.raises(SystemExit) as exc:
        main(["orbit", "--digits", "5..1"])
    assert exc.value.code == 2


def test_seed_rejection_exit_code(capsys):
    code, rep = run_json(capsys, "reduce", "--seed-source", "zero", "--horizon", "1000")
    assert code == 4 and rep["error"] == "SeedRejected"


def test_horizon_exceeded_exit_code(capsys):
    code, rep = run_json(capsys, "reduce", "--beta", "linear", "--stages", "6")
    assert code == 4 and rep["error"] == "HorizonExceeded"


def test_reduce_divergent(capsys):
    code, rep = run_json(capsys, "reduce", "--poly", "-2,1", "--beta", "const:2", "--mode", "demo",
                         "--K", "4", "--stages", "3", "--verify", "divergent")
    assert code == 0
    assert rep["verification"]["ell"] == 6 and rep["verification"]["status"] == "pass"
    assert rep["schedule"]["tables"]["V"][-1] == "1290575"


def test_config_file_and_precedence(tmp_path, capsys):
    cfg = tmp_path / "run.json"
    cfg.write_text(json.dumps({"poly": "-1,-1,1", "init": "1", "lambda": "I=-1/8:1/8", "N": 10}))
    code, rep = run_json(capsys, "orbit", "--config", str(cfg))
    assert code == 0 and rep["lambda"][0]["count_in"] == 6
    code, rep = run_json(capsys, "orbit", "--config", str(cfg), "--N", "5")
    assert rep["config"]["N"] == 5


def test_out_file_is_deterministic(tmp_path, capsys):
    out = tmp_path / "report.json"
    argv = ["reduce", "--stages", "2", "--verify", "divergent", "--out", str(out)]
    assert main(argv) == 0
    first = out.read_bytes()
    assert main(argv) == 0
    assert out.read_bytes() == first
    assert not [p for p in tmp_path.iterdir() if p.name.startswith(".recdigits-")]


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "recdigits", "analyze", "--poly", "-1,-1,1"],
                         capture_output=True, text=True, check=False)
    assert res.returncode == 0
    assert json.loads(res.stdout)["spec"]["D"] == 2
