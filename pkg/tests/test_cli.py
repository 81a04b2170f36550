import json
import subprocess
import sys
from pathlib import Path

import pytest

from robust_spc.cli import main
from robust_spc import config as cfgmod


def write(path: Path, text: str) -> Path:
    path.write_text(text)
    return path


def test_missing_config(tmp_path, capsys):
    assert main(["simulate", "--config", str(tmp_path / "none.yaml")]) == 2


def test_unknown_key_reports_line(tmp_path, capsys):
    cfg = write(tmp_path / "c.yaml", "chart: {family: shewhart_mean}\nreplications: 10\nbogus: 1\n")
    out = tmp_path / "out.json"
    assert main(["simulate", "--config", str(cfg), "--out", str(out)]) == 2
    assert ":3:" in capsys.readouterr().err
    assert not out.exists()


def test_bad_parameter_reports_line(tmp_path, capsys):
    cfg = write(tmp_path / "c.yaml", "replications: 10\nchart:\n  family: ewma_mean\n  lam: 3\n")
    assert main(["simulate", "--config", str(cfg)]) == 2
    assert "c.yaml:3" in capsys.readouterr().err


def test_duplicate_key(tmp_path):
    with pytest.raises(cfgmod.ConfigFileError) as err:
        cfgmod.loads("seed: 1\nseed: 2\n", "x.yaml")
    assert err.value.line == 2


def test_simulate_json_and_determinism(tmp_path):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    base = ["simulate", "--config", "shewhart_mean", "--replications", "400"]
    assert main(base + ["--out", str(a), "--workers", "1"]) == 0
    assert main(base + ["--out", str(b), "--workers", "3"]) == 0
    assert a.read_bytes() == b.read_bytes()
    doc = json.loads(a.read_text())
    assert doc["summary"]["replications"] == 400


def test_simulate_truncation_exit(tmp_path):
    cfg = write(tmp_path / "c.yaml",
                "chart: {family: shewhart_mean, limit: 9}\nreplications: 20\ncap: 50\n")
    assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "o.json")]) == 3
    assert (tmp_path / "o.json").exists()


def test_calibrate_budget_exit_writes_partial(tmp_path):
    cfg = write(tmp_path / "c.yaml",
                "chart: {family: shewhart_mean, limit: 2.0}\nbudget: 2\nschedule: [300]\n"
                "tolerance: 0.0001\n")
    out = tmp_path / "cal.yaml"
    assert main(["calibrate", "--config", str(cfg), "--out", str(out)]) == 4
    doc = cfgmod.load(str(out))
    assert doc["calibration"]["limit"]["success"] is False


def test_calibrate_output_round_trips(tmp_path):
    cfg = write(tmp_path / "c.yaml",
                "chart: {family: shewhart_mean, limit: 3.0}\nschedule: [2000]\ntolerance: 0.06\n")
    out = tmp_path / "cal.yaml"
    assert main(["calibrate", "--config", str(cfg), "--out", str(out)]) == 0
    again = tmp_path / "sim.json"
    assert main(["simulate", "--config", str(out), "--replications", "50", "--out", str(again)]) == 0


def test_compare_writes_tables(tmp_path):
    cfg = write(tmp_path / "c.yaml", """\
replications: 100
shifts: [0.0, 1.5]
charts:
  Shewhart X-bar: {family: shewhart_mean, limit: 3.09}
  Cusum X-bar: {family: cusum_mean, delta0: 0.15, limit: 4.0}
cusum_convention: observation/full
""")
    out = tmp_path / "out"
    assert main(["compare", "--config", str(cfg), "--out", str(out), "--format", "csv"]) == 0
    rarl = (out / "rarl.csv").read_text().splitlines()
    assert rarl[0] == "chart,delta_0.0,delta_1.5"
    assert all(line.split(",")[1] == "500.0" for line in rarl[1:])
    assert (out / "reference_comparison.csv").exists()


def test_compare_requires_resolved_convention(tmp_path):
    assert main(["compare", "--config", "study_printed", "--replications", "10"]) == 2


def _observations(path: Path, n_groups: int, hot: int | None = None):
    lines = ["subgroup_id,value"]
    for g in range(1, n_groups + 1):
        value = 5.0 if g == hot else 0.0
        lines += [f"g{g},{value}"] * 5
    path.write_text("\n".join(lines) + "\n")
    return path


def test_monitor_signal(tmp_path, capsys):
    data = _observations(tmp_path / "d.csv", 12, hot=12)
    trace = tmp_path / "trace.csv"
    assert main(["monitor", "--config", "shewhart_mean", "--data", str(data),
                 "--out", str(trace)]) == 0
    assert "inspection 12" in capsys.readouterr().out
    rows = trace.read_text().splitlines()
    assert len(rows) == 13 and rows[-1].endswith(",1")


def test_monitor_no_signal_and_replay(tmp_path, capsys):
    data = _observations(tmp_path / "d.csv", 20)
    t1, t2 = tmp_path / "t1.csv", tmp_path / "t2.csv"
    assert main(["monitor", "--config", "cusum_median", "--data", str(data), "--out", str(t1)]) == 0
    assert "no signal" in capsys.readouterr().out
    assert main(["monitor", "--config", "cusum_median", "--data", str(data), "--out", str(t2)]) == 0
    assert t1.read_bytes() == t2.read_bytes()
    assert len(t1.read_text().splitlines()) == 21


def test_monitor_bad_rows(tmp_path, capsys):
    bad = write(tmp_path / "d.csv", "subgroup_id,value\n1,0\n1,x\n")
    out = tmp_path / "t.csv"
    assert main(["monitor", "--config", "shewhart_mean", "--data", str(bad), "--out", str(out)]) == 2
    assert "row 3" in capsys.readouterr().err
    assert not out.exists()
    short = write(tmp_path / "s.csv", "subgroup_id,value\n1,0\n1,0\n")
    assert main(["monitor", "--config", "shewhart_mean", "--data", str(short)]) == 2


def test_presets_load():
    for name in cfgmod.preset_names():
        cfgmod.load(name)


def test_module_entry_point():
    r = subprocess.run([sys.executable, "-m", "robust_spc", "--help"], capture_output=True, text=True)
    assert r.returncode == 0 and "simulate" in r.stdout
