import json

import numpy as np
import pytest
from PIL import Image

from panoscene.layout import SemanticMap
from panoscene.pano_io import (
    FormatError,
    read_pfm,
    read_png,
    read_png_gray,
    read_semantic_channels,
    semantic_index,
    write_pfm,
    write_png,
    write_semantic,
)


def test_png_round_trip(tmp_path, rng):
    img = rng.integers(0, 256, (7, 11, 3), dtype=np.uint8)
    write_png(tmp_path / "a.png", img)
    np.testing.assert_array_equal(read_png(tmp_path / "a.png"), img)


def test_png_one_pixel(tmp_path):
    img = np.array([[[1, 2, 3]]], np.uint8)
    write_png(tmp_path / "a.png", img)
    np.testing.assert_array_equal(read_png(tmp_path / "a.png"), img)


def test_png_gray(tmp_path):
    img = np.arange(12, dtype=np.uint8).reshape(3, 4)
    write_png(tmp_path / "g.png", img)
    np.testing.assert_array_equal(read_png_gray(tmp_path / "g.png"), img)


def test_png_16bit_rejected(tmp_path):
    Image.fromarray(np.full((4, 4), 40000, np.uint16)).save(tmp_path / "deep.png")
    with pytest.raises(FormatError, match="8-bit"):
        read_png(tmp_path / "deep.png")


def test_png_malformed(tmp_path):
    (tmp_path / "bad.png").write_bytes(b"\x89PNG garbage")
    with pytest.raises(FormatError):
        read_png(tmp_path / "bad.png")
    with pytest.raises(FileNotFoundError):
        read_png(tmp_path / "missing.png")


def test_pfm_round_trip_with_infinity(tmp_path, rng):
    data = rng.normal(size=(5, 9)).astype(np.float32)
    data[1, 2] = np.inf
    data[3, 0] = -0.0
    write_pfm(tmp_path / "d.pfm", data)
    back = read_pfm(tmp_path / "d.pfm")
    assert back.tobytes() == data.tobytes()


def test_pfm_header_and_row_order(tmp_path):
    write_pfm(tmp_path / "d.pfm", np.zeros((512, 512)))
    assert (tmp_path / "d.pfm").read_bytes().startswith(b"Pf\n512 512\n-1.0\n")
    write_pfm(tmp_path / "r.pfm", np.array([[1.0], [2.0]]))
    payload = (tmp_path / "r.pfm").read_bytes()[len(b"Pf\n1 2\n-1.0\n") :]
    np.testing.assert_array_equal(np.frombuffer(payload, "<f4"), [2.0, 1.0])


def test_pfm_rejections(tmp_path):
    with pytest.raises(ValueError):
        write_pfm(tmp_path / "n.pfm", np.array([[np.nan]]))
    (tmp_path / "be.pfm").write_bytes(b"Pf\n1 1\n1.0\n" + np.float32(1).astype(">f4").tobytes())
    with pytest.raises(FormatError, match="big-endian"):
        read_pfm(tmp_path / "be.pfm")
    (tmp_path / "rgb.pfm").write_bytes(b"PF\n1 1\n-1.0\n" + bytes(12))
    with pytest.raises(FormatError):
        read_pfm(tmp_path / "rgb.pfm")
    (tmp_path / "short.pfm").write_bytes(b"Pf\n2 2\n-1.0\n" + bytes(8))
    with pytest.raises(FormatError):
        read_pfm(tmp_path / "short.pfm")


def _sem(channels, dist, legend):
    return SemanticMap(np.asarray(channels, np.uint8), list(legend), np.asarray(dist, float))


def test_semantic_empty_map():
    sem = _sem(np.zeros((3, 4, 0)), np.zeros((3, 4, 0)), [])
    assert np.all(semantic_index(sem) == 0)


def test_semantic_nearest_and_ties():
    ch = np.zeros((1, 3, 2))
    d = np.full((1, 3, 2), np.inf)
    ch[0, 0] = [1, 1]
    d[0, 0] = [3.0, 2.0]
    ch[0, 1] = [1, 1]
    d[0, 1] = [2.0, 2.0]
    idx = semantic_index(_sem(ch, d, ["a", "b"]))
    np.testing.assert_array_equal(idx, [[2, 1, 0]])


def test_write_semantic_round_trip(tmp_path, rng):
    ch = (rng.uniform(size=(6, 8, 3)) > 0.5).astype(np.uint8)
    d = np.where(ch > 0, rng.uniform(1, 3, ch.shape), np.inf)
    sem = _sem(ch, d, ["table", "chair", "lamp"])
    prefix = str(tmp_path / "sem")
    paths = write_semantic(sem, prefix)
    assert paths[-1].endswith("_index.png")
    assert json.loads(open(f"{prefix}_legend.json").read()) == {"classes": ["none", "table", "chair", "lamp"]}
    back, legend = read_semantic_channels(prefix)
    assert legend == ["table", "chair", "lamp"]
    np.testing.assert_array_equal(back, ch)
    np.testing.assert_array_equal(read_png_gray(f"{prefix}_index.png"), semantic_index(sem))


def test_write_semantic_too_many_classes(tmp_path):
    n = 256
    sem = _sem(np.zeros((1, 1, n)), np.full((1, 1, n), np.inf), [f"c{k}" for k in range(n)])
    prefix = str(tmp_path / "big")
    with pytest.raises(ValueError, match="255"):
        write_semantic(sem, prefix)
    assert (tmp_path / "big_channel_256.png").exists()
