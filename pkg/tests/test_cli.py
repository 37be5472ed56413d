import csv
import math

import pytest

from sdgflow.cli import ERROR_COLUMNS, RATE_COLUMNS, main


def _rows(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


def test_run_writes_outputs(tmp_path):
    out = tmp_path / "run"
    assert main(["run", "--mesh", "rect:4x4", "--k", "1", "--out", str(out)]) == 0
    rows = _rows(out / "errors.csv")
    assert len(rows) == 1 and list(rows[0]) == ERROR_COLUMNS
    assert float(rows[0]["u_L2"]) < 0.05 and rows[0]["converged"] == "1"
    vtk = (out / "solution.vtk").read_text()
    assert vtk.startswith("# vtk DataFile Version 3.0")
    assert "VECTORS velocity double" in vtk and "TENSORS gradient double" in vtk
    manifest = (out / "manifest.txt").read_text()
    assert "status = 0" in manifest and "mesh = rect:4x4" in manifest
    files = [l for l in manifest.splitlines() if l.startswith("file = ")]
    assert len(files) == len(set(files)) == 3


def test_convergence_rates(tmp_path):
    out = tmp_path / "conv"
    assert main(["convergence", "--mesh", "rect:4x4", "--levels", "3", "--out", str(out)]) == 0
    rows = _rows(out / "rates.csv")
    assert list(rows[0]) == RATE_COLUMNS
    assert [r["kind"] for r in rows] == ["mesh", "mesh", "mesh", "slope_lsq"]
    assert rows[0]["u_L2_rate"] == ""
    assert float(rows[-1]["u_L2"]) > 1.8 and float(rows[2]["u_L2_rate"]) > 1.8


def test_convergence_single_mesh(tmp_path, caplog):
    out = tmp_path / "one"
    assert main(["convergence", "--mesh", "rect:2x2", "--levels", "1", "--out", str(out)]) == 0
    rows = _rows(out / "rates.csv")
    assert [r["kind"] for r in rows] == ["mesh", "slope_lsq"]
    assert rows[1]["u_L2"] == ""
    assert "single mesh" in caplog.text


def test_missing_mesh_file_is_config_error(tmp_path, capsys):
    code = main(["run", "--case", "file", "--mesh", f"file:{tmp_path}/nope.txt", "--out", str(tmp_path)])
    assert code == 2
    assert "not found" in capsys.readouterr().err


@pytest.mark.parametrize("argv", [["run", "--mesh", "hex:3"], ["run", "--k", "0"], ["run", "--nu", "-1"],
                                  ["run", "--theta", "2"], ["convergence", "--levels", "0"]])
def test_bad_settings_exit_2(tmp_path, argv):
    assert main(argv + ["--out", str(tmp_path)]) == 2


def test_config_file_and_override(tmp_path):
    cfg = tmp_path / "case.cfg"
    cfg.write_text("# cavity on a coarse mesh\ncase = cavity\nmesh = rect:4x4\nk = 1\nre = 10\n")
    out = tmp_path / "cav"
    assert main(["cavity", "--config", str(cfg), "--out", str(out)]) == 0
    manifest = (out / "manifest.txt").read_text()
    assert "nu = 0.1" in manifest and "k = 1" in manifest
    psi = _rows(out / "streamfunction.csv")
    assert min(float(r["psi"]) for r in psi) < 0
    hist = _rows(out / "history.csv")
    assert float(hist[-1]["max_dof_change"]) <= 1e-7
    out2 = tmp_path / "cav2"
    assert main(["cavity", "--config", str(cfg), "--k", "2", "--out", str(out2)]) == 0
    assert "k = 2" in (out2 / "manifest.txt").read_text()


def test_bad_config_key(tmp_path, capsys):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("colour = red\n")
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path)]) == 2
    assert "bad.cfg:1" in capsys.readouterr().err


def test_nonconvergence_exit_3(tmp_path):
    out = tmp_path / "nc"
    assert main(["cavity", "--mesh", "rect:4x4", "--k", "1", "--re", "100", "--max-iters", "2",
                 "--out", str(out)]) == 3
    assert "status = 3" in (out / "manifest.txt").read_text()


def test_outputs_are_byte_identical_across_runs(tmp_path):
    for d in ("a", "b"):
        assert main(["run", "--mesh", "voronoi:16:4", "--k", "2", "--out", str(tmp_path / d)]) == 0
    for name in ("errors.csv", "solution.vtk"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_numbers_round_trip_exactly(tmp_path):
    out = tmp_path / "r"
    assert main(["run", "--mesh", "rect:2x2", "--out", str(out)]) == 0
    v = _rows(out / "errors.csv")[0]["u_L2"]
    assert float(v) == float(repr(float(v))) and not math.isnan(float(v))
