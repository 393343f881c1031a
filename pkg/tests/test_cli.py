import csv
import subprocess
import sys

import numpy as np
import pytest

from synthtel.cli import main


@pytest.fixture
def cfg_file(tmp_path):
    path = tmp_path / "run.toml"
    path.write_text('seed = 2\nduration = 1800\noutput_dir = "%s"\n[faults]\np_anomaly = 0.3\n' % (tmp_path / "out"))
    return path


def test_generate_and_validate(cfg_file, tmp_path, capsys):
    out = tmp_path / "ds"
    assert main(["generate", "--config", str(cfg_file), "--out", str(out), "--seed", "5",
                 "--duration", "1200", "--sample-interval", "30"]) == 0
    assert "40 rows x 470 data columns" in capsys.readouterr().out
    assert main(["validate", "--dataset", str(out)]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines and all(line.startswith("[PASS]") for line in lines)


def test_generate_uses_configured_output_dir(cfg_file, tmp_path):
    assert main(["generate", "--config", str(cfg_file)]) == 0
    assert (tmp_path / "out" / "metrics.csv").exists()


def test_validate_flags_tampering(cfg_file, tmp_path, capsys):
    out = tmp_path / "ds"
    main(["generate", "--config", str(cfg_file), "--out", str(out)])
    path = out / "metrics.csv"
    rows = list(csv.reader(path.open()))
    rows[5][-1] = "1" if rows[5][-1] == "0" else "0"
    with path.open("w", newline="") as fh:
        csv.writer(fh, lineterminator="\n").writerows(rows)
    capsys.readouterr()
    assert main(["validate", "--dataset", str(out)]) == 1
    assert "[FAIL] or_law" in capsys.readouterr().out


def test_decompose(cfg_file, tmp_path):
    out = tmp_path / "dec"
    assert main(["decompose", "--config", str(cfg_file), "--out", str(out)]) == 0
    names = sorted(p.name for p in out.iterdir())
    assert names == sorted(["trend.csv", "total.csv"] + [f"{k}_{i}.csv" for k in ("seasonal", "noise")
                                                         for i in range(1, 5)])
    cols = {p.stem: np.loadtxt(p, delimiter=",", skiprows=1) for p in out.iterdir()}
    assert (tmp_path / "dec" / "total.csv").read_text().startswith("tick,value\n")
    recombined = (1 + cols["trend"][:, 1]) * 20.0
    for i in range(1, 5):
        recombined = recombined + cols[f"seasonal_{i}"][:, 1] + cols[f"noise_{i}"][:, 1]
    np.testing.assert_allclose(recombined, cols["total"][:, 1], rtol=0, atol=1e-9)
    assert cols["total"][:, 0].tolist() == list(range(1800))


def test_config_error_exit_code(tmp_path, capsys):
    bad = tmp_path / "bad.toml"
    bad.write_text("sampling_interval = 0\n")
    assert main(["generate", "--config", str(bad)]) == 2
    assert "config error" in capsys.readouterr().err


def test_io_error_exit_codes(tmp_path, cfg_file):
    assert main(["generate", "--config", str(tmp_path / "missing.toml")]) == 3
    assert main(["validate", "--dataset", str(tmp_path / "nowhere")]) == 3
    blocker = tmp_path / "blocker"
    blocker.write_text("")
    assert main(["generate", "--config", str(cfg_file), "--out", str(blocker / "x")]) == 3


def test_module_entry_point(cfg_file, tmp_path):
    res = subprocess.run([sys.executable, "-m", "synthtel.cli", "generate", "--config", str(cfg_file),
                          "--out", str(tmp_path / "m")], capture_output=True, text=True)
    assert res.returncode == 0, res.stderr
