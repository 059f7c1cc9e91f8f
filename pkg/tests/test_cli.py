import json
import math

import numpy as np
import pytest

from msrdl.cli import main
from msrdl.hsi import HsiCube, load_cube, quadrant_layout, save_cube, save_labels, synth_gaussian_scene
from msrdl.multiscale import against_truth, nmi, vi

SCENE_FLAGS = ["--n-neighbors", "20", "--sigma", "0.3", "--sigma0", "0.1", "--window", "3"]


@pytest.fixture
def scene(tmp_path):
    cube, truth = synth_gaussian_scene(quadrant_layout(20, 20, np.eye(4)), 20, 20,
                                       noise=0.02 * math.sqrt(2), seed=0)
    save_cube(cube, tmp_path / "cube.json", dtype="f64")
    save_labels(truth, tmp_path / "truth.csv")
    return tmp_path


def report(path):
    return json.loads((path / "report.json").read_text())


def test_convert_salinas_sized_dump(tmp_path):
    values = np.random.default_rng(0).random((83, 86, 224)).astype("<f4")
    values.tofile(tmp_path / "raw.bin")
    args = ["convert", str(tmp_path / "raw.bin"), "--rows", "83", "--cols", "86", "--bands", "224"]
    assert main(args + ["--out", str(tmp_path / "a" / "cube.json")]) == 0
    cube = load_cube(tmp_path / "a" / "cube.json")
    assert (cube.rows, cube.cols, cube.bands) == (83, 86, 224)
    np.testing.assert_array_equal(cube.values, values)
    # idempotent: a second conversion writes the same bytes
    assert main(args + ["--out", str(tmp_path / "b" / "cube.json")]) == 0
    assert (tmp_path / "a" / "cube.bin").read_bytes() == (tmp_path / "b" / "cube.bin").read_bytes()
    assert main(args[:-1] + ["225", "--out", str(tmp_path / "c.json")]) == 3


def test_convert_band_sequential(tmp_path):
    values = np.arange(24, dtype="<u2").reshape(2, 3, 4)
    values.transpose(2, 0, 1).tofile(tmp_path / "bsq.raw")
    assert main(["convert", str(tmp_path / "bsq.raw"), "--rows", "2", "--cols", "3", "--bands", "4",
                 "--raw-dtype", "u16", "--interleave", "bsq", "--out", str(tmp_path / "c.json")]) == 0
    np.testing.assert_array_equal(load_cube(tmp_path / "c.json").values, values)


def test_srdl_smoke_and_determinism(scene, capsys):
    for out in ("r1", "r2"):
        assert main(["srdl", "--data", str(scene / "cube.json"), "--out", str(scene / out), "--t", "0"]
                    + SCENE_FLAGS) == 0
    assert "K=" in capsys.readouterr().out
    rep = report(scene / "r1")
    assert rep["scales"][0]["K"] >= 1 and rep["grid"] == [0]
    assert (scene / "r1" / "labels_t0.csv").read_bytes() == (scene / "r2" / "labels_t0.csv").read_bytes()
    assert (scene / "r1" / "map_t0.png").exists()


def test_srdl_recovers_blocks(scene):
    assert main(["srdl", "--data", str(scene / "cube.json"), "--labels", str(scene / "truth.csv"),
                 "--out", str(scene / "out"), "--t", "16"] + SCENE_FLAGS) == 0
    rep = report(scene / "out")
    assert rep["scales"][0]["K"] == 4
    assert rep["metrics"]["16"]["nmi"] == 1.0


def test_msrdl_outputs(scene):
    assert main(["msrdl", "--data", str(scene / "cube.json"), "--labels", str(scene / "truth.csv"),
                 "--out", str(scene / "out"), "--threads", "2"] + SCENE_FLAGS) == 0
    rep = report(scene / "out")
    assert rep["K_star"] == 4 and rep["metrics"]["barycenter"]["nmi"] == 1.0
    assert rep["error"] is None
    for t in rep["grid"]:
        assert (scene / "out" / f"labels_t{t}.csv").exists()
        assert (scene / "out" / f"map_t{t}.png").exists()
    assert rep["parameters"]["window"] == 3 and rep["parameters"]["tau"] == 1e-5
    assert len(rep["dataset"]["sha256"]) == 64


def test_report_survives_barycenter_failure(tmp_path):
    save_cube(HsiCube(np.random.default_rng(0).random((2, 2, 3))), tmp_path / "tiny.json")
    code = main(["msrdl", "--data", str(tmp_path / "tiny.json"), "--out", str(tmp_path / "out"),
                 "--n-neighbors", "3", "--sigma", "1", "--sigma0", "1", "--window", "1"])
    assert code == 4
    rep = report(tmp_path / "out")
    assert rep["grid"] and len(rep["scales"]) == len(rep["grid"])
    assert all("K" in s for s in rep["scales"])
    assert "NoNontrivialScale" in rep["error"]


def test_no_spatial_flag(scene):
    assert main(["msrdl", "--data", str(scene / "cube.json"), "--out", str(scene / "out"),
                 "--no-spatial", "--n-neighbors", "20", "--sigma", "0.5", "--sigma0", "0.1"]) in (0, 4)
    assert report(scene / "out")["parameters"]["window"] is None


def test_exit_codes(scene, tmp_path):
    data = ["--data", str(scene / "cube.json"), "--out", str(tmp_path / "o")]
    assert main(["srdl"] + data + ["--n-neighbors", "49", "--window", "3"]) == 2
    assert main(["srdl", "--data", str(tmp_path / "missing.json"), "--out", str(tmp_path / "o")]) == 3
    # tiny window and neighbour count split the blocks into separate components
    assert main(["srdl"] + data + ["--n-neighbors", "2", "--window", "1", "--sigma", "0.3"]) == 4
    assert "error" in report(tmp_path / "o")
    with pytest.raises(SystemExit):
        main(["srdl"] + data + ["--window", "x"])


def test_metrics_command(scene, tmp_path, capsys):
    truth = str(scene / "truth.csv")
    assert main(["metrics", "--pred", truth, "--truth", truth]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["vi"] == 0.0 and out["nmi"] == 1.0

    rng = np.random.default_rng(5)
    pred = rng.integers(1, 5, (20, 20))
    np.savetxt(tmp_path / "pred.csv", pred, fmt="%d", delimiter=",")
    assert main(["metrics", "--pred", str(tmp_path / "pred.csv"), "--truth", truth,
                 "--out", str(tmp_path / "m")]) == 0
    out = json.loads(capsys.readouterr().out)
    g = np.loadtxt(truth, delimiter=",", dtype=int).ravel()
    p, t = against_truth(pred.ravel(), g)
    assert out["vi"] == vi(p, t) and out["nmi"] == nmi(p, t)
    assert json.loads((tmp_path / "m" / "metrics.json").read_text()) == out

    np.savetxt(tmp_path / "small.csv", pred[:3], fmt="%d", delimiter=",")
    assert main(["metrics", "--pred", str(tmp_path / "small.csv"), "--truth", truth]) == 3


def test_cache_env(scene, tmp_path, monkeypatch):
    monkeypatch.setenv("MSRDL_CACHE_DIR", str(tmp_path / "cache"))
    args = ["srdl", "--data", str(scene / "cube.json"), "--t", "4", "--cache"] + SCENE_FLAGS
    assert main(args + ["--out", str(tmp_path / "a")]) == 0
    assert len(list((tmp_path / "cache").glob("model-*.npz"))) == 1
    assert main(args + ["--out", str(tmp_path / "b")]) == 0
    assert (tmp_path / "a" / "labels_t4.csv").read_bytes() == (tmp_path / "b" / "labels_t4.csv").read_bytes()
