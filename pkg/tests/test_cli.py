import csv
import json
import math

import numpy as np
import pytest

from specpts.cli import ConfigError, emit_contour, emit_dos, emit_traj, main, resolve_config
from specpts.geometry import PointConfig, Sphere, random_config
from specpts.graphkernel import WeightFunction
from specpts.lattice import TRIANGULAR, dos


def _manifest(out):
    return json.loads((out / "manifest.json").read_text())


def test_empty_sweep_is_header_only(tmp_path):
    path = emit_contour([], tmp_path / "sweep.csv")
    assert path.read_text() == "a,b,value\n"


def test_contour_uses_full_precision(tmp_path):
    path = emit_contour([(0.1, 2 / 3, math.pi)], tmp_path / "sweep.csv")
    row = path.read_text().splitlines()[1].split(",")
    assert [float(v) for v in row] == [0.1, 2 / 3, math.pi]


def test_dos_csv_sums_to_histogram_total(tmp_path):
    hist = dos(TRIANGULAR, WeightFunction.exp(2.0), m=64, bins=30)
    with open(emit_dos(hist, tmp_path / "dos.csv")) as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 30
    assert sum(float(r["mass"]) for r in rows) == pytest.approx(hist.total, rel=1e-14)


def test_trajectory_files_round_trip(tmp_path):
    snaps = [(0, random_config(Sphere(3), 4, 0)), (10, random_config(Sphere(3), 4, 1))]
    paths = emit_traj(snaps, tmp_path, run=2)
    assert [p.name for p in paths] == ["run2_iter0.json", "run2_iter10.json"]
    for (_, cfg), p in zip(snaps, paths):
        np.testing.assert_array_equal(PointConfig.loads(p.read_text()).points, cfg.points)


def test_config_merging_and_validation():
    cfg = resolve_config("dos", {"bins": 50}, {"lattice": "square", "M": None})
    assert cfg["bins"] == 50 and cfg["lattice"] == "square" and cfg["M"] == 512
    for file_cfg, flags in [({"bogus": 1}, {}), ({"bins": "many"}, {}), ({}, {"center": 0.5}),
                            ({}, {"f": "gauss:1"}), ({}, {"lattice": "hexagon"}), ({"experiment": "moments"}, {})]:
        with pytest.raises(ConfigError):
            resolve_config("dos", file_cfg, flags)


def test_unknown_key_exits_2_with_manifest(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"n": 4, "colour": "red"}))
    out = tmp_path / "out"
    assert main(["run", "sphere-simplex", "--config", str(cfg), "--out", str(out)]) == 2
    manifest = _manifest(out)
    assert manifest["failure_stage"] == "validate" and manifest["exit_code"] == 2


def test_numerical_failure_exits_3_with_manifest(tmp_path):
    out = tmp_path / "out"
    # weights underflow to zero, so the graph is disconnected from the start
    code = main(["run", "torus-opt", "--n", "9", "--f", "exp:1000", "--objective", "rtot", "--restarts", "1",
                 "--out", str(out)])
    assert code == 3
    manifest = _manifest(out)
    assert manifest["status"] == "failed" and manifest["failure_stage"] == "compute"


def test_sphere_simplex_reports_pass(tmp_path, capsys):
    out = tmp_path / "out"
    assert main(["run", "sphere-simplex", "--n", "4", "--f", "exp:2", "--objective", "trace", "--out", str(out)]) == 0
    assert capsys.readouterr().out.strip().endswith("PASS")
    summary = json.loads((out / "summary.json").read_text())
    assert summary["pass"] and summary["max_d2_error"] < 1e-5
    manifest = _manifest(out)
    assert manifest["status"] == "ok" and manifest["seed"] == 0 and len(manifest["config_hash"]) == 64


def test_lattice_sweep_argmin_row(tmp_path):
    out = tmp_path / "out"
    assert main(["run", "lattice-sweep", "--objective", "trace", "--f", "exp:2", "--N", "10", "--grid", "11x11",
                 "--out", str(out)]) == 0
    with open(out / "sweep.csv") as fh:
        rows = [tuple(map(float, (r["a"], r["b"], r["value"]))) for r in csv.DictReader(fh)]
    a, b, _ = min(rows, key=lambda r: r[2])
    assert (a, b) == pytest.approx((0.5, math.sqrt(3) / 2), abs=1e-12)


def test_rerun_is_byte_identical(tmp_path):
    outputs = []
    for k in range(2):
        out = tmp_path / f"out{k}"
        assert main(["run", "torus-opt", "--n", "12", "--restarts", "2", "--max-iter", "40", "--snapshot-stride",
                     "20", "--seed", "3", "--out", str(out)]) == 0
        outputs.append(out)
    names = sorted(p.relative_to(outputs[0]) for p in outputs[0].rglob("*") if p.is_file())
    assert any(n.suffix == ".csv" for n in names) and any("snapshots" in str(n) for n in names)
    for name in names:
        assert (outputs[0] / name).read_bytes() == (outputs[1] / name).read_bytes()


def test_moments_and_trajectory_commands(tmp_path):
    assert main(["run", "moments", "--M", "64", "--out", str(tmp_path / "m")]) == 0
    table = json.loads((tmp_path / "m" / "moments.json").read_text())
    assert table["triangular"]["operator_norm"] < table["square"]["operator_norm"]
    assert main(["run", "trajectory", "--n", "16", "--max-iter", "20", "--snapshot-stride", "5",
                 "--out", str(tmp_path / "t")]) == 0
    files = sorted((tmp_path / "t" / "trajectory").glob("run0_iter*.json"))
    assert len(files) >= 2


def test_interval_command_improves_on_triangular(tmp_path):
    out = tmp_path / "i"
    assert main(["run", "interval", "--n", "36", "--restarts", "2", "--max-iter", "300", "--out", str(out)]) == 0
    summary = json.loads((out / "summary.json").read_text())
    assert summary["from_triangular"] < summary["triangular"]
    assert main(["run", "interval", "--n", "30", "--out", str(tmp_path / "bad")]) == 2
