import json
import time

import numpy as np
import pytest

from panoscene.geometry import ErpGrid
from panoscene.pano_io import read_pfm, read_png, write_pfm, write_png
from panoscene.scene_export import read_ply

ERP = "64x128"


def consistent_views(tmp_path, shape=(16, 32)):
    """Dyadic depths and coefficients, so every stored float32 value is exact."""
    rng = np.random.default_rng(7)
    gt = rng.integers(8, 80, shape) / 8.0
    write_pfm(tmp_path / "coarse.pfm", gt)
    write_pfm(tmp_path / "coarse_w.pfm", np.ones(shape))
    views = tmp_path / "views"
    views.mkdir()
    for k, (m, o) in enumerate([(2.0, 0.5), (0.5, -0.25), (4.0, 1.0)], start=1):
        w = (rng.uniform(size=shape) > 0.3).astype(float)
        write_pfm(views / f"view_{k}.pfm", (gt - o) / m)
        write_pfm(views / f"weight_{k}.pfm", w)
    return gt, views


def test_convert_square_room(run_cli, fixtures_dir, tmp_path):
    out = tmp_path / "room"
    assert run_cli("convert-layout", "--layout", f"{fixtures_dir}/square_room.json", "--erp", ERP, "--out-dir", out) == 0
    for name in ("coarse_depth.pfm", "semantic_index.png", "partial.png", "mask.png", "manifest.json"):
        assert (out / name).exists(), name
    depth = read_pfm(out / "coarse_depth.pfm")
    assert depth.shape == (64, 128) and np.all(np.isfinite(depth))
    man = json.loads((out / "manifest.json").read_text())
    assert man["command"] == "convert-layout"
    assert {"version", "inputs", "outputs", "config", "timings_s", "backend"} <= set(man)
    mask = read_png(out / "mask.png")[..., 0]
    assert 0 < (mask > 0).mean() < 0.5


def test_convert_terrain_has_sky(run_cli, fixtures_dir, tmp_path):
    assert run_cli("convert-layout", "--layout", f"{fixtures_dir}/terrain.json", "--erp", ERP, "--out-dir", tmp_path) == 0
    depth = read_pfm(tmp_path / "coarse_depth.pfm")
    assert np.all(np.isinf(depth[:8]))
    assert np.all(np.isfinite(depth[-8:]))
    assert not (tmp_path / "semantic_index.png").exists()


def test_convert_missing_layout(run_cli, tmp_path):
    assert run_cli("convert-layout", "--layout", tmp_path / "nope.json", "--out-dir", tmp_path) == 3


def test_convert_schema_error(run_cli, tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"kind": "floorplan", "corners": [[0, 0], [1, 0]]}))
    assert run_cli("convert-layout", "--layout", bad, "--out-dir", tmp_path) == 2
    assert "corners" in capsys.readouterr().err


def test_convert_bad_erp_size(run_cli, fixtures_dir, tmp_path):
    assert run_cli("convert-layout", "--layout", f"{fixtures_dir}/square_room.json", "--erp", "64by128", "--out-dir", tmp_path) == 2


def test_integrate_consistent(run_cli, tmp_path):
    gt, views = consistent_views(tmp_path)
    rc = run_cli(
        "integrate", "--coarse", tmp_path / "coarse.pfm", "--coarse-weight", tmp_path / "coarse_w.pfm",
        "--views", views, "--out", tmp_path / "fused.pfm", "--report", tmp_path / "r.json",
    )
    assert rc == 0
    report = json.loads((tmp_path / "r.json").read_text())
    assert report["loss"] < 1e-10
    assert [c["view"] for c in report["coefficients"]] == ["1", "2", "3"]
    assert report["coefficients"][0]["scale"] == pytest.approx(2.0, abs=1e-6)
    np.testing.assert_allclose(read_pfm(tmp_path / "fused.pfm"), gt, rtol=1e-6)
    assert (tmp_path / "fused.manifest.json").exists()


def test_integrate_mismatched_dims(run_cli, tmp_path):
    _, views = consistent_views(tmp_path)
    write_pfm(tmp_path / "coarse.pfm", np.ones((8, 8)))
    write_pfm(tmp_path / "coarse_w.pfm", np.ones((8, 8)))
    rc = run_cli("integrate", "--coarse", tmp_path / "coarse.pfm", "--coarse-weight", tmp_path / "coarse_w.pfm",
                 "--views", views, "--out", tmp_path / "f.pfm")
    assert rc == 2


def test_integrate_singular_names_view(run_cli, tmp_path, capsys):
    _, views = consistent_views(tmp_path)
    write_pfm(views / "view_2.pfm", np.full((16, 32), 3.0))
    args = ["integrate", "--coarse", tmp_path / "coarse.pfm", "--coarse-weight", tmp_path / "coarse_w.pfm",
            "--views", views, "--out", tmp_path / "f.pfm"]
    assert run_cli(*args, "--ridge", "0") == 4
    assert "view 2" in capsys.readouterr().err
    assert run_cli(*args) == 0
    assert np.all(np.isfinite(read_pfm(tmp_path / "f.pfm")))


def test_integrate_zero_coarse_weight(run_cli, tmp_path, capsys):
    _, views = consistent_views(tmp_path)
    write_pfm(tmp_path / "coarse_w.pfm", np.zeros((16, 32)))
    rc = run_cli("integrate", "--coarse", tmp_path / "coarse.pfm", "--coarse-weight", tmp_path / "coarse_w.pfm",
                 "--views", views, "--out", tmp_path / "f.pfm")
    assert rc == 4
    assert "anchor" in capsys.readouterr().err.lower()


def test_integrate_bad_config(run_cli, tmp_path):
    _, views = consistent_views(tmp_path)
    (tmp_path / "cfg.json").write_text('{"beta": 1}')
    rc = run_cli("integrate", "--coarse", tmp_path / "coarse.pfm", "--coarse-weight", tmp_path / "coarse_w.pfm",
                 "--views", views, "--out", tmp_path / "f.pfm", "--config", tmp_path / "cfg.json")
    assert rc == 2


def test_evaluate_identical(run_cli, tmp_path, capsys):
    write_pfm(tmp_path / "d.pfm", np.arange(1, 13, dtype=float).reshape(3, 4))
    assert run_cli("evaluate", "--est", tmp_path / "d.pfm", "--gt", tmp_path / "d.pfm", "--report", tmp_path / "r.json") == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["rmse"] == 0 and doc["absrel"] == 0 and doc["valid_pixels"] == 12
    assert json.loads((tmp_path / "r.json").read_text()) == doc


def test_export_point_count_and_render(run_cli, fixtures_dir, tmp_path):
    depth = np.full((32, 64), 2.0)
    depth[:4] = np.inf
    write_pfm(tmp_path / "d.pfm", depth)
    write_png(tmp_path / "c.png", np.full((32, 64, 3), 90, np.uint8))
    rc = run_cli("export", "--rgb", tmp_path / "c.png", "--depth", tmp_path / "d.pfm", "--ply", tmp_path / "c.ply",
                 "--render", f"{fixtures_dir}/render_camera.json", "--translate", "0,0,0.5")
    assert rc == 0
    assert len(read_ply(tmp_path / "c.ply")) == 28 * 64
    for suffix in ("_render.png", "_render_depth.pfm", "_holes.png"):
        assert (tmp_path / f"c{suffix}").exists()
    assert read_png(tmp_path / "c_render.png").shape == (256, 256, 3)


def test_export_bad_translation(run_cli, fixtures_dir, tmp_path):
    write_pfm(tmp_path / "d.pfm", np.ones((4, 8)))
    write_png(tmp_path / "c.png", np.zeros((4, 8, 3), np.uint8))
    rc = run_cli("export", "--rgb", tmp_path / "c.png", "--depth", tmp_path / "d.pfm", "--ply", tmp_path / "c.ply",
                 "--render", f"{fixtures_dir}/render_camera.json", "--translate", "1,2")
    assert rc == 2


def test_synth_terrain_single_component_peak(run_cli, tmp_path):
    spec = {"height": 21, "width": 31, "cell_size": 1.0, "max_distance": 100.0,
            "components": [{"weight": 7.5, "mean": [10.0, 12.0], "cov": [[9.0, 2.0], [2.0, 4.0]]}]}
    (tmp_path / "g.json").write_text(json.dumps(spec))
    assert run_cli("synth-terrain", "--gmm", tmp_path / "g.json", "--out", tmp_path / "t.pfm") == 0
    heights = read_pfm(tmp_path / "t.pfm")
    assert heights.shape == (21, 31)
    assert heights.max() == pytest.approx(7.5, rel=1e-6)
    assert np.unravel_index(np.argmax(heights), heights.shape) == (12, 10)


def test_synth_terrain_invalid_gmm(run_cli, tmp_path):
    spec = {"height": 4, "width": 4, "components": [{"weight": 1, "mean": [1, 1], "cov": [[1, 2], [2, 1]]}]}
    (tmp_path / "g.json").write_text(json.dumps(spec))
    assert run_cli("synth-terrain", "--gmm", tmp_path / "g.json", "--out", tmp_path / "t.pfm") == 2


def test_tangent_views(run_cli, tmp_path):
    grid = ErpGrid(64, 128)
    erp = np.zeros((64, 128, 3), np.uint8)
    erp[..., 0] = np.round(127 + 120 * np.sin(grid.longitudes()))[None, :]
    write_png(tmp_path / "e.png", erp)
    assert run_cli("tangent-views", "--erp", tmp_path / "e.png", "--out-dir", tmp_path / "tv", "--size", 32) == 0
    names = sorted(p.name for p in (tmp_path / "tv").glob("view_*.png"))
    assert names == [f"view_{n:02d}.png" for n in range(1, 17)]
    rig = json.loads((tmp_path / "tv" / "rig.json").read_text())
    assert [r["pitch_deg"] for r in rig[:8]] == [45.0] * 4 + [-45.0] * 4


def test_erp_and_synth_views_round_trip(run_cli, tmp_path):
    gt = np.full((32, 64), 4.0)
    write_pfm(tmp_path / "gt.pfm", gt)
    assert run_cli("synth-views", "--gt", tmp_path / "gt.pfm", "--out-dir", tmp_path / "sv", "--seed", 3) == 0
    truth = json.loads((tmp_path / "sv" / "truth.json").read_text())
    assert len(truth) == 16
    tan = tmp_path / "tan"
    tan.mkdir()
    write_pfm(tan / "view_09.pfm", np.full((16, 16), 2.0))
    assert run_cli("erp-views", "--tangent-dir", tan, "--erp", "32x64", "--out-dir", tmp_path / "ev", "--size", 16) == 0
    est = read_pfm(tmp_path / "ev" / "view_09.pfm")
    w = read_pfm(tmp_path / "ev" / "weight_09.pfm")
    assert np.all(est[w > 0] == 2.0)


def test_integrate_sixteen_views_full_resolution(run_cli, tmp_path):
    rng = np.random.default_rng(0)
    gt = rng.uniform(1, 10, (512, 1024))
    write_pfm(tmp_path / "gt.pfm", gt)
    write_pfm(tmp_path / "w.pfm", np.ones_like(gt))
    assert run_cli("synth-views", "--gt", tmp_path / "gt.pfm", "--out-dir", tmp_path / "v") == 0
    start = time.perf_counter()
    rc = run_cli("integrate", "--coarse", tmp_path / "gt.pfm", "--coarse-weight", tmp_path / "w.pfm",
                 "--views", tmp_path / "v", "--out", tmp_path / "f.pfm")
    elapsed = time.perf_counter() - start
    assert rc == 0
    assert elapsed < 5.0
