import json
import subprocess
import sys

import pytest

from spectral_lab.cli import EXIT_BUDGET, EXIT_CONFIG, EXIT_IO, EXIT_OK, ExperimentConfig, main


def _csv_rows(path):
    return path.read_text().splitlines()


def test_config_round_trip_and_hash():
    cfg = ExperimentConfig("weyl count", {"d": 2}, None, "out/a")
    again = ExperimentConfig.from_json(cfg.to_json())
    assert again == cfg
    moved = ExperimentConfig("weyl count", {"d": 2}, None, "elsewhere")
    assert moved.config_hash == cfg.config_hash
    assert ExperimentConfig("weyl count", {"d": 3}).config_hash != cfg.config_hash


def test_moi_verify(tmp_path, capsys):
    code = main(["moi", "verify", "--dim", "6", "--trials", "10", "--f", "exp", "--seed", "1", "--out", str(tmp_path)])
    assert code == EXIT_OK
    assert "max residual <= 1e-9 scale: PASS" in capsys.readouterr().out
    rows = _csv_rows(tmp_path / "moi_residuals.csv")
    assert rows[0].endswith("config_hash") and len(rows) == 11


def test_sum_diagnose_block(tmp_path, capsys):
    assert main(["sum", "diagnose", "--example", "block", "--n-max", str(2**20), "--out", str(tmp_path)]) == EXIT_OK
    out = capsys.readouterr().out
    assert "cesaro: oscillating(0.33" in out
    assert "logmean: converged(0.5" in out


def test_sum_diagnose_input_file(tmp_path, capsys):
    src = tmp_path / "in.csv"
    src.write_text("n,raw\n" + "".join(f"{k},1.0\n" for k in range(200)))
    assert main(["sum", "diagnose", "--input", str(src), "--out", str(tmp_path / "o")]) == EXIT_OK
    assert "cesaro: converged(1)" in capsys.readouterr().out


def test_spaces_and_weyl(tmp_path, capsys):
    assert main(["spaces", "analyze", "--kind", "graph", "--graph", "tree:10", "--window", "4",
                 "--out", str(tmp_path / "s")]) == EXIT_OK
    assert "fails-(C)" in capsys.readouterr().out
    assert main(["weyl", "count", "--d", "2", "--lam-max", "10000", "--out", str(tmp_path / "w"), "--svg"]) == EXIT_OK
    assert "N(10000) = 31417" in capsys.readouterr().out
    assert (tmp_path / "w" / "weyl.svg").exists()


def test_dos_and_models(tmp_path, capsys):
    assert main(["dos", "run", "--space", "lattice:1", "--radii", "100,200", "--buffer", "20",
                 "--out", str(tmp_path / "d")]) == EXIT_OK
    assert "sup-error vs arcsine law" in capsys.readouterr().out
    assert main(["qe", "run", "--kind", "circle", "--K", "32", "--fourier", "0:0.25,1:1",
                 "--out", str(tmp_path / "q")]) == EXIT_OK
    assert "truncation functional 0.25" in capsys.readouterr().out
    model = json.dumps({"kind": "toeplitz", "K": 256, "fourier": {"1": 0.5, "-1": 0.5}})
    assert main(["szego", "run", "--model", model, "--out", str(tmp_path / "z")]) == EXIT_OK
    assert "value 0.49" in capsys.readouterr().out


def test_config_file_is_honoured(tmp_path, capsys):
    cfg = ExperimentConfig("weyl count", {"d": 1, "lam_max": 100.0}, None, str(tmp_path / "w"))
    path = tmp_path / "cfg.json"
    path.write_text(cfg.to_json())
    assert main(["weyl", "count", "--config", str(path)]) == EXIT_OK
    assert "N(100) = 21" in capsys.readouterr().out
    stamp = json.loads((tmp_path / "w" / "config.json").read_text())
    assert stamp["params"] == {"d": 1, "lam_max": 100.0}


def test_identical_configs_give_identical_csv(tmp_path):
    for name in ("a", "b"):
        main(["moi", "verify", "--trials", "3", "--seed", "4", "--out", str(tmp_path / name)])
    assert (tmp_path / "a" / "moi_residuals.csv").read_bytes() == (tmp_path / "b" / "moi_residuals.csv").read_bytes()


def test_exit_codes(tmp_path):
    assert main(["moi", "verify", "--f", "nope", "--out", str(tmp_path)]) == EXIT_CONFIG
    assert main(["weyl", "count", "--d", "9", "--out", str(tmp_path)]) == EXIT_BUDGET
    assert main(["sum", "diagnose", "--input", str(tmp_path / "missing.csv"), "--out", str(tmp_path)]) == EXIT_IO
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"verb": "dos run"}))
    assert main(["weyl", "count", "--config", str(bad)]) == EXIT_CONFIG


def test_acceptance_empty_and_single(tmp_path, capsys):
    assert main(["acceptance", "--only", "", "--out", str(tmp_path / "e")]) == EXIT_OK
    assert "empty suite" in capsys.readouterr().out
    assert main(["acceptance", "--only", "12", "--out", str(tmp_path / "one")]) == EXIT_OK
    lines = [l for l in capsys.readouterr().out.splitlines() if l.startswith("[")]
    assert len(lines) == 1 and lines[0].startswith("[PASS] 12")


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "spectral_lab", "weyl", "count", "--d", "1", "--lam-max", "9",
                           "--out", str(tmp_path)], capture_output=True, text=True)
    assert proc.returncode == 0
    assert "N(9) = 7" in proc.stdout


def test_missing_verb_is_usage_error():
    with pytest.raises(SystemExit) as exc:
        main([])
    assert exc.value.code == 2
