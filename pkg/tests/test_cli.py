import subprocess
import sys

import pytest

from metathreshold.harness.cli import main
from metathreshold.harness.config import default_config_text

SMALL = default_config_text().replace("trials = 200", "trials = 20").replace(
    "n_boot = 200", "n_boot = 100").replace("seeds = 1..10", "seeds = 1").replace(
    "warmup_trials = 200", "warmup_trials = 20").replace("focus_modes = narrow, open", "focus_modes = none")


@pytest.fixture
def cfg(tmp_path):
    p = tmp_path / "small.cfg"
    p.write_text(SMALL)
    return p


def test_validate_default(capsys):
    assert main(["validate"]) == 0
    assert capsys.readouterr().out.startswith("ok default")


def test_missing_config_exit_one(tmp_path, capsys):
    out = tmp_path / "out"
    assert main(["threshold", "--config", str(tmp_path / "nope.cfg"), "--out", str(out)]) == 1
    assert not out.exists()
    assert "no such file" in capsys.readouterr().err


def test_bad_config_exit_one(tmp_path, capsys):
    p = tmp_path / "bad.cfg"
    p.write_text("[engine]\ncycle_time_ms = -5\n")
    assert main(["validate", "--config", str(p)]) == 1
    assert "engine.cycle_time_ms" in capsys.readouterr().err


def test_usage_errors_exit_one(capsys):
    assert main(["frobnicate"]) == 1
    assert main(["stages", "--bogus"]) == 1
    assert main(["stages", "--format", "json"]) == 1
    assert main([]) == 1


def test_runtime_error_exit_two(tmp_path, capsys):
    p = tmp_path / "c.cfg"
    p.write_text(SMALL.replace("[training]", "[training]\nenabled = false"))
    assert main(["stages", "--config", str(p), "--out", str(tmp_path / "o")]) == 2
    assert "runtime error" in capsys.readouterr().err


def test_threshold_to_stdout(cfg, capsys):
    assert main(["threshold", "--config", str(cfg)]) == 0
    out = capsys.readouterr().out.splitlines()
    assert out[0] == "condition,axis,midpoint,slope,threshold,ci_low,ci_high"
    assert out[1].startswith("default-seed1,duration,")


def test_seed_override_written_to_manifest(cfg, tmp_path):
    out = tmp_path / "o"
    assert main(["simulate", "--config", str(cfg), "--seed", "7", "--out", str(out)]) == 0
    manifest = (out / "manifest.txt").read_text()
    assert "seeds: 7\n" in manifest and "config_sha256: " in manifest
    assert (out / "events.csv").read_text().startswith("time_ms,kind,production_id,detail\n")


@pytest.mark.parametrize("command,files", [
    ("simulate", {"events.csv", "traces.csv"}),
    ("threshold", {"thresholds.csv", "psychometric.csv"}),
    ("stages", {"stages.csv", "trajectory.csv", "learning.csv", "thresholds.csv", "psychometric.csv"}),
    ("ablate", {"ablation.csv", "thresholds.csv", "psychometric.csv", "traces-seed1-duration.csv"}),
])
def test_outputs_byte_identical_on_rerun(cfg, tmp_path, command, files):
    dirs = [tmp_path / "a", tmp_path / "b"]
    for d in dirs:
        assert main([command, "--config", str(cfg), "--out", str(d)]) == 0
    names = {p.name for p in dirs[0].iterdir()}
    assert names == files | {"manifest.txt"}
    for name in names:
        assert (dirs[0] / name).read_bytes() == (dirs[1] / name).read_bytes(), name


def test_module_entry_point():
    r = subprocess.run([sys.executable, "-m", "metathreshold", "validate"], capture_output=True, text=True)
    assert r.returncode == 0 and r.stdout.startswith("ok")
