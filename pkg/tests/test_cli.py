import json

import numpy as np
import pytest
import yaml

from vtolftc.cli import main
from vtolftc.scenario import read_csv


def test_run_writes_echo_metrics_and_csv(tmp_path, capsys):
    doc = tmp_path / "short.yaml"
    doc.write_text("name: short\nduration: 3 s\nfaults:\n  - {time: 1 s, actuator: 1b, effectiveness: 0}\n")
    assert main(["run", str(doc), "--out-dir", str(tmp_path), "--csv", "--no-realloc"]) == 0
    out = capsys.readouterr().out
    assert "max_altitude_dev_m" in out
    echo = yaml.safe_load((tmp_path / "short-noca.scenario.yaml").read_text())
    assert echo["reallocation"] is False and echo["faults"][0]["actuator"] == "thr_1b"
    tr = read_csv(tmp_path / "short-noca.csv")
    assert len(tr) == 301


def test_compare_from_csv(tmp_path, capsys):
    doc = tmp_path / "c.yaml"
    doc.write_text("name: c\nduration: 3 s\nfaults:\n  - {time: 1 s, actuator: 2b, effectiveness: 0}\n")
    main(["run", str(doc), "--out-dir", str(tmp_path), "--csv"])
    main(["run", str(doc), "--out-dir", str(tmp_path), "--csv", "--no-realloc"])
    capsys.readouterr()
    rc = main(["compare", str(tmp_path / "c.csv"), str(tmp_path / "c-noca.csv"),
               "--out-dir", str(tmp_path), "--csv"])
    assert rc == 0
    text = capsys.readouterr().out
    assert "ratio c-noca/c" in text
    rows = (tmp_path / "comparison.csv").read_text().splitlines()
    assert rows[0].startswith("run,") and len(rows) == 3


def test_analyze_writes_report(tmp_path, capsys):
    assert main(["analyze", "--out-dir", str(tmp_path), "--steps", "3"]) == 0
    assert "robustly stable" in capsys.readouterr().out
    data = np.loadtxt(tmp_path / "stability.csv", delimiter=",", skiprows=1)
    assert data.shape == (81, 5) and np.all(data[:, 4] < 0)


def test_tune_with_overrides(tmp_path, capsys):
    loops = tmp_path / "loops.yaml"
    loops.write_text("yaw:\n  omega_b: 0.8 rad/s\n")
    assert main(["tune", str(loops), "--out-dir", str(tmp_path), "--seed", "1"]) == 0
    gains = yaml.safe_load((tmp_path / "gains.yaml").read_text())
    assert set(gains) == {"altitude", "roll", "pitch", "yaw"}
    assert main(["analyze", str(tmp_path / "gains.yaml"), "--out-dir", str(tmp_path)]) == 0


@pytest.mark.parametrize("text,kind", [
    ("duration: 10 s\nfaults:\n  - {time: 70 s, actuator: 2, effectiveness: 0}\n", "validation"),
    ("mission:\n  hover_altitude: 3 kg\n", "validation"),
])
def test_errors_are_machine_readable(tmp_path, capsys, text, kind):
    doc = tmp_path / "bad.yaml"
    doc.write_text(text)
    assert main(["run", str(doc), "--out-dir", str(tmp_path)]) == 2
    err = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert err["error"] == kind


def test_missing_file_is_io_error(tmp_path, capsys):
    assert main(["run", str(tmp_path / "nope.yaml")]) == 4
    assert json.loads(capsys.readouterr().err)["error"] == "io"
