import json
import subprocess
import sys
import time

import pytest

from cfmrx.cli import main
from cfmrx.harness import CSV_COLUMNS, ExperimentConfig, read_records_csv


def _write_config(tmp_path, **prior):
    d = ExperimentConfig().to_dict()
    d["prior"].update(prior)
    d["dataset"]["n_samples"] = 120
    d["sweep"]["output_dir"] = "results"
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(d))
    return path


def test_default_config_is_loadable(tmp_path, capsys):
    assert main(["default-config"]) == 0
    d = json.loads(capsys.readouterr().out)
    assert ExperimentConfig.from_dict(d) == ExperimentConfig()


def test_one_frame_smoke_run(tmp_path, capsys):
    cfg = _write_config(tmp_path, backend="analytic")
    t0 = time.time()
    assert main(["gen-channels", "--config", str(cfg)]) == 0
    assert (tmp_path / "artifacts" / "channels.cfmh").exists()
    assert main(["sweep", "--config", str(cfg), "--frames", "1", "--seed", "3", "-q"]) == 0
    assert time.time() - t0 < 60
    rows = read_records_csv(tmp_path / "results" / "sweep.csv")
    assert len(rows) == 2 * 5 * 7
    assert tuple(rows[0]) == CSV_COLUMNS
    assert {r["frames"] for r in rows} == {"1"} and {r["seed"] for r in rows} == {"3"}
    for name in ("sweep_plot_data.csv", "sweep_summary.txt", "sweep_config.json"):
        assert (tmp_path / "results" / name).exists()


def test_missing_weights_exit_code(tmp_path, capsys):
    cfg = _write_config(tmp_path)
    assert main(["sweep", "--config", str(cfg), "--frames", "1"]) == 2
    err = capsys.readouterr().err
    assert "train-prior" in err


def test_missing_dataset_exit_code(tmp_path, capsys):
    cfg = _write_config(tmp_path)
    assert main(["train-prior", "--config", str(cfg)]) == 2
    assert "gen-channels" in capsys.readouterr().err


def test_bad_config_exit_code(tmp_path, capsys):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({"sweep": {"frams": 1}}))
    assert main(["sweep", "--config", str(path)]) == 2
    assert "frams" in capsys.readouterr().err


def test_console_script_help():
    out = subprocess.run([sys.executable, "-m", "cfmrx.cli", "--help"], capture_output=True, text=True)
    assert out.returncode == 0
    for cmd in ("gen-channels", "train-prior", "sweep", "ablation", "validate"):
        assert cmd in out.stdout


def test_unknown_command_rejected():
    with pytest.raises(SystemExit):
        main(["frobnicate"])
