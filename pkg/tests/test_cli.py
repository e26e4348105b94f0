import csv
import json
import subprocess
import sys
from pathlib import Path

import pytest

from scmlink.harness.cli import main, resolve_config

CONFIGS = Path(__file__).resolve().parent.parent / "configs"

FAST_TOML = """\
[channel]
length_km = 0.0
rop_dbm = -4.0
osnr_db = 47.67

[txdsp]
payload_len = 512
"""


@pytest.fixture
def fast(tmp_path):
    p = tmp_path / "fast.toml"
    p.write_text(FAST_TOML)
    return p


def _report(path):
    d = json.loads(path.read_text())
    d["meta"].pop("elapsed_s", None)
    return d


def test_run_writes_report(fast, tmp_path, capsys):
    out = tmp_path / "o"
    assert main(["run", "--config", str(fast), "--seed", "3", "--out", str(out)]) == 0
    rep = json.loads((out / "report.json").read_text())
    assert rep["schema_version"] == 1 and len(rep["bands"]) == 7
    assert rep["meta"]["seeds"]["master"] == 3
    assert "aggregate:" in capsys.readouterr().out


def test_flags_before_subcommand(fast, tmp_path):
    out = tmp_path / "o"
    assert main(["--config", str(fast), "--out", str(out), "plan"]) == 0
    doc = json.loads((out / "plan.json").read_text())
    assert len(doc["bands"]) == 7 and doc["schema_version"] == 1


def test_staged_equals_monolithic(fast, tmp_path):
    a, b = tmp_path / "staged", tmp_path / "mono"
    common = ["--config", str(fast), "--seed", "11"]
    assert main(["tx", *common, "--out", str(a)]) == 0
    assert (a / "tx.wvfm").exists() and (a / "truth.json").exists()
    assert main(["channel", "--out", str(a)]) == 0
    assert main(["rx", "--out", str(a)]) == 0
    assert main(["run", *common, "--out", str(b)]) == 0
    assert _report(a / "report.json") == _report(b / "report.json")


def test_staged_config_mismatch(fast, tmp_path):
    out = tmp_path / "o"
    assert main(["tx", "--config", str(fast), "--out", str(out)]) == 0
    assert main(["channel", "--config", str(fast), "--seed", "99", "--out", str(out)]) == 1


def test_rx_without_inputs(tmp_path, capsys):
    assert main(["rx", "--out", str(tmp_path)]) == 1
    assert "truth.json" in capsys.readouterr().err


def test_corrupt_waveform_is_runtime_error(fast, tmp_path):
    out = tmp_path / "o"
    assert main(["tx", "--config", str(fast), "--out", str(out)]) == 0
    (out / "tx.wvfm").write_bytes(b"WVFM" + bytes(10))
    assert main(["channel", "--out", str(out)]) == 2


def test_sweep_command(fast, tmp_path):
    out = tmp_path / "o"
    assert main(["sweep", "--config", str(fast), "--axis", "osnr_db", "--values", "35,45", "--out", str(out)]) == 0
    rows = list(csv.reader((out / "sweep.csv").open()))
    assert rows[0][:4] == ["schema_version", "axis", "axis_value", "band"]
    assert len(rows) == 15
    assert json.loads((out / "sweep.json").read_text())["values"] == [35.0, 45.0]
    assert main(["sweep", "--config", str(fast), "--axis", "osnr_db", "--values", "a,b", "--out", str(out)]) == 1
    assert main(["sweep", "--config", str(fast), "--out", str(out)]) == 1


def test_papr_command(fast, tmp_path):
    out = tmp_path / "o"
    assert main(["papr", "--config", str(fast), "--out", str(out)]) == 0
    d = json.loads((out / "papr.json").read_text())
    assert {"scm_papr_db", "multicarrier_papr_db", "percentile"} <= set(d)


def test_malformed_config_exit_1(tmp_path, capsys):
    bad = tmp_path / "bad.toml"
    bad.write_text("[channel]\nlength_km = 1\nosnr_db = \"loud\"\n")
    assert main(["run", "--config", str(bad), "--out", str(tmp_path)]) == 1
    err = capsys.readouterr().err
    assert f"{bad}:3:" in err and "osnr_db" in err


def test_usage_errors_exit_1(capsys):
    assert main(["run", "--bogus"]) == 1
    assert main([]) == 1
    assert main(["run", "--preset", "nowhere"]) == 1
    assert main(["run", "--seed", "-1"]) == 1
    assert "usage" in capsys.readouterr().err


def test_help_exit_0(capsys):
    assert main(["--help"]) == 0
    assert "sweep" in capsys.readouterr().out


def test_resolve_config_precedence(fast):
    cfg = resolve_config(str(fast), "paper-50km-pcs", 5)
    assert cfg.modem.kind == "pcs"            # from the preset
    assert cfg.channel.length_km == 0.0       # file overrides preset
    assert cfg.harness.seed == 5              # flag overrides both
    assert cfg.harness.preset == "paper-50km-pcs"


def test_plan_shipped_config(tmp_path):
    out = tmp_path / "o"
    assert main(["plan", "--config", str(CONFIGS / "fiber50.toml"), "--out", str(out)]) == 0
    bands = json.loads((out / "plan.json").read_text())["bands"]
    assert [b["rolloff"] for b in bands] == [0.1, 0.1, 0.1, 0.01, 0.01, 0.01, 0.01]


@pytest.mark.slow
def test_module_entry_point_preset_run(tmp_path):
    out = tmp_path / "out"
    r = subprocess.run([sys.executable, "-m", "scmlink", "run", "--preset", "obtb-uniform", "--seed", "7",
                        "--out", str(out)], capture_output=True, text=True, timeout=600)
    assert r.returncode == 0, r.stderr
    rep = json.loads((out / "report.json").read_text())
    assert rep["meta"]["config"]["harness"]["preset"] == "obtb-uniform"
    assert all(b["ber"] == 0.0 for b in rep["bands"][1:])


def test_failed_command_leaves_no_output_dir(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    assert main(["run", "--seed", "-1"]) == 1
    assert not (tmp_path / "out").exists()
