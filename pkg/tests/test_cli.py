import json
import subprocess
import sys

import pytest

from cutprep import cli
from cutprep.errors import InvariantError, ProtocolError

CONFIG = """
mesh: {dim: 2, elements: [8, 8], origin: [0.0, 0.0], h: [0.25, 0.25], degree: 2}
geometries: ["circle 1.0 1.0 0.6"]
void: [1]
"""


@pytest.fixture
def config(tmp_path):
    p = tmp_path / "run.yaml"
    p.write_text(CONFIG)
    return p


def stats_value(text, key):
    for ln in text.splitlines():
        if ln.startswith(key + " "):
            return ln.split(None, 1)[1]
    raise KeyError(key)


def test_serial_run_with_all_exports(config, tmp_path, capsys):
    rc = cli.main(["--config", str(config), "--export-mesh", str(tmp_path / "m.vtk"),
                   "--export-clusters", str(tmp_path / "c.jsonl"), "--export-enriched", str(tmp_path / "e.txt"),
                   "--export-graphs", str(tmp_path / "g.txt")])
    assert rc == 0
    out = capsys.readouterr().out
    assert int(stats_value(out, "ranks")) == 1
    for name in ("m.vtk", "c.jsonl", "e.txt", "g.txt"):
        assert (tmp_path / name).stat().st_size > 0


def test_parallel_run_reports_same_counts(config, tmp_path, capsys):
    assert cli.main(["--config", str(config)]) == 0
    serial = capsys.readouterr().out
    assert cli.main(["--config", str(config), "--ranks", "2x2", "--stats", str(tmp_path / "s.txt")]) == 0
    par = (tmp_path / "s.txt").read_text()
    for key in ("fg_cells", "subphases", "enriched_bases", "bulk_clusters", "side_clusters", "ghost_clusters"):
        assert stats_value(serial, key) == stats_value(par, key)
    assert float(stats_value(par, "lambda_loc")) > 1


def test_dry_run_prints_plan(config, capsys):
    assert cli.main(["--config", str(config), "--ranks", "2x1", "--dry-run"]) == 0
    out = capsys.readouterr().out
    assert "rank 0: owned 32" in out and "rank 1: owned 32" in out


@pytest.mark.parametrize("argv", [["--ranks", "3x2"], ["--ranks", "zz"]])
def test_configuration_errors_exit_2(config, argv, capsys):
    assert cli.main(["--config", str(config)] + argv) == 2
    assert "error" in capsys.readouterr().err


def test_missing_inputs_exit_2(tmp_path):
    assert cli.main([]) == 2
    assert cli.main(["--config", str(tmp_path / "absent.yaml")]) == 2
    bad = tmp_path / "bad.yaml"
    bad.write_text("mesh: {dim: 2}\nunknown_key: 1\n")
    assert cli.main(["--config", str(bad)]) == 2


@pytest.mark.parametrize("err, code", [(InvariantError("x"), 3), (ProtocolError("x"), 4)])
def test_error_classes_map_to_exit_codes(config, monkeypatch, err, code):
    def boom(*a, **k):
        raise err
    monkeypatch.setattr(cli, "run_pipeline", boom)
    assert cli.main(["--config", str(config)]) == code


def test_small_experiment_emits_json(tmp_path):
    cfg = tmp_path / "exp.yaml"
    cfg.write_text("experiment: scaling\nexperiment_options: {tiles: [1, 2], elems_per_tile: 4, repeats: 1}\n")
    assert cli.main(["--config", str(cfg), "--stats", str(tmp_path / "r.json")]) == 0
    rep = json.loads((tmp_path / "r.json").read_text())
    assert [r["elements"] for r in rep["rows"]] == [16, 32]
    assert rep["doubling_factor"] > 0
    cfg.write_text("experiment: scaling\nexperiment_options: {bogus: 1}\n")
    assert cli.main(["--config", str(cfg)]) == 2


def test_module_entry_point(config):
    p = subprocess.run([sys.executable, "-m", "cutprep", "--config", str(config), "--dry-run"],
                       capture_output=True, text=True)
    assert p.returncode == 0 and "stages" in p.stdout
