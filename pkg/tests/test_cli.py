import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from beliefsum.cli import main


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def _simulate(tmp_path, name, *extra):
    out = tmp_path / name
    assert main(["simulate", "--config", "person", "--output", str(out), *extra]) == 0
    return out


def test_learn_then_detect_finds_event(tmp_path, capsys):
    train = _simulate(tmp_path, "train.csv", "--seed", "1", "--day", "--horizon", "2000")
    cfg = tmp_path / "model.json"
    assert main(["learn", "--input", str(train), "--output", str(cfg), "--report-sum"]) == 0
    model = json.loads(cfg.read_text())
    assert model["n_normal"] == 5
    assert np.allclose(model["rates"][1:6], [5, 10, 15, 20, 25], rtol=0.2)
    assert model["provenance"]["n_counts"] == 2000

    test = _simulate(tmp_path, "test.csv", "--seed", "4", "--day", "--horizon", "150",
                     "--event-start", "100")
    traj = tmp_path / "traj.csv"
    capsys.readouterr()
    assert main(["detect", "--config", str(cfg), "--input", str(test),
                 "--output", str(traj)]) == 0
    err = capsys.readouterr().err
    report = dict(line.split(": ", 1) for line in err.splitlines())
    assert report["stream"] == "test"
    alarm = int(report["alarm_step"])
    assert 100 < alarm <= 120
    rows = _rows(traj)
    assert len(rows) == 150
    assert list(rows[0]) == ["step", "count", "statistic", "q_low", "q_high"]


def test_detect_zero_stream_with_reference_ladder(tmp_path, capsys):
    src = tmp_path / "zeros.csv"
    src.write_text("timestamp,count\n" + "".join(f"{t},0\n" for t in range(50)))
    assert main(["detect", "--config", "person", "--input", str(src)]) == 0
    out = capsys.readouterr().out.splitlines()
    last = out[-1].split(",")
    assert len(out) == 51
    assert float(last[3]) == pytest.approx(1.0, abs=1e-12)
    assert float(last[2]) == pytest.approx(0.5, abs=1e-12)  # alpha = 0.5 weighting


def test_detect_row_count_follows_binning(tmp_path):
    src = tmp_path / "s.csv"
    src.write_text("timestamp,count\n" + "".join(f"{t},1\n" for t in range(20)))
    out = tmp_path / "t.csv"
    assert main(["detect", "--config", "person", "--input", str(src), "--output",
                 str(out), "--bin-width", "6"]) == 0
    rows = _rows(out)
    assert [r["count"] for r in rows] == ["6", "6", "6"]


def test_detect_stop_mode_truncates(tmp_path):
    src = tmp_path / "s.csv"
    src.write_text("timestamp,count\n" + "".join(f"{t},0\n" for t in range(10)))
    out = tmp_path / "t.csv"
    assert main(["detect", "--config", "person", "--input", str(src), "--output",
                 str(out), "--alpha", "1.0", "--threshold", "0.5", "--mode", "stop"]) == 0
    assert len(_rows(out)) == 1


def test_detect_directory_and_summed_streams(tmp_path, capsys):
    d = tmp_path / "cams"
    d.mkdir()
    for name, c in (("a.csv", 10), ("b.csv", 12)):
        (d / name).write_text("timestamp,count\n" + "".join(f"{t},{c}\n" for t in range(30)))
    out = tmp_path / "out"
    assert main(["detect", "--config", "person", "--input", str(d),
                 "--output", str(out)]) == 0
    assert sorted(p.name for p in out.iterdir()) == ["a.csv", "alarms.txt", "b.csv"]
    text = (out / "alarms.txt").read_text()
    assert "stream: a" in text and "stream: b" in text

    summed = tmp_path / "sum.csv"
    assert main(["detect", "--config", "person", "--input", str(d / "a.csv"),
                 "--sum-inputs", str(d / "b.csv"), "--output", str(summed)]) == 0
    assert {r["count"] for r in _rows(summed)} == {"22"}


def test_simulate_is_reproducible(tmp_path):
    a = _simulate(tmp_path, "a.csv", "--seed", "9")
    b = _simulate(tmp_path, "b.csv", "--seed", "9")
    c = _simulate(tmp_path, "c.csv", "--seed", "10")
    assert a.read_bytes() == b.read_bytes()
    assert a.read_bytes() != c.read_bytes()


def test_solve_zero_false_alarm_cost(tmp_path, capsys):
    policy = tmp_path / "policy.csv"
    assert main(["solve", "--config", "person", "--c-f", "0", "--grid", "20",
                 "--output", str(policy)]) == 0
    report = dict(line.split(": ", 1) for line in capsys.readouterr().out.splitlines())
    assert report["stop_everywhere"] == "true"
    assert report["a_star"] == "-inf"
    rows = _rows(policy)
    assert len(rows) == 231 and {r["action"] for r in rows} == {"stop"}


def test_solve_report_file(tmp_path, capsys):
    rep = tmp_path / "r.txt"
    assert main(["solve", "--config", "person", "--grid", "30", "--a", "0.5",
                 "--report", str(rep)]) == 0
    fields = dict(line.split(": ", 1) for line in rep.read_text().splitlines())
    assert fields["a_low"] == "0.5" and fields["converged"] == "true"
    assert fields["stop_everywhere"] == "false"


def test_eval_writes_operating_points(tmp_path, capsys):
    out = tmp_path / "eval.csv"
    assert main(["eval", "--config", "person", "--seed", "3", "--trials", "200",
                 "--thresholds", "0.5,0.8,0.95", "--output", str(out)]) == 0
    rows = _rows(out)
    assert [float(r["threshold"]) for r in rows] == [0.5, 0.8, 0.95]
    fa = [float(r["false_alarm_fraction"]) for r in rows]
    assert fa == sorted(fa, reverse=True)
    assert "trials: 200" in capsys.readouterr().err


@pytest.mark.parametrize("argv", [
    ["detect", "--config", "nope.json", "--input", "x.csv"],
    ["detect", "--config", "person", "--input", "missing.csv"],
    ["solve", "--config", "person", "--c-f", "-1", "--grid", "5"],
])
def test_errors_exit_nonzero(argv, capsys):
    assert main(argv) == 2
    assert "error:" in capsys.readouterr().err


def test_invalid_config_file_exits_nonzero(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"rates": [5, 1, 9], "n_normal": 1}))
    src = tmp_path / "s.csv"
    src.write_text("timestamp,count\n0,1\n")
    assert main(["detect", "--config", str(bad), "--input", str(src)]) == 2


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "beliefsum", "--version"],
                         capture_output=True, text=True)
    assert res.returncode == 0 and res.stdout.strip() == "0.1.0"
