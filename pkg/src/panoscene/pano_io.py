"""Readers and writers: 8-bit PNG, single-channel little-endian PFM, semantic maps."""

from __future__ import annotations

import json
import re

import numpy as np
from PIL import Image

from .layout import SemanticMap

_EIGHT_BIT_MODES = {"1", "L", "P", "RGB", "RGBA", "LA"}


class FormatError(ValueError):
    pass


def read_png(path) -> np.ndarray:
    """Read an 8-bit PNG as (H, W, 3) uint8 RGB."""
    try:
        with Image.open(path) as im:
            if im.format != "PNG":
                raise FormatError(f"{path}: not a PNG file")
            if im.mode not in _EIGHT_BIT_MODES:
                raise FormatError(f"{path}: unsupported PNG mode {im.mode!r} (only 8-bit images)")
            return np.asarray(im.convert("RGB"), dtype=np.uint8).copy()
    except OSError as exc:
        if isinstance(exc, FileNotFoundError):
            raise
        raise FormatError(f"{path}: malformed PNG ({exc})") from None


def read_png_gray(path) -> np.ndarray:
    """Read an 8-bit PNG as (H, W) uint8 (index and mask images)."""
    with Image.open(path) as im:
        if im.mode not in {"L", "1", "P"}:
            raise FormatError(f"{path}: expected a single-channel 8-bit PNG, got {im.mode!r}")
        return np.asarray(im.convert("L") if im.mode == "1" else im, dtype=np.uint8).copy()


def write_png(path, img) -> None:
    """Write (H, W, 3) RGB or (H, W) gray uint8 data as PNG."""
    arr = np.asarray(img)
    if arr.dtype != np.uint8:
        if np.any(arr < 0) or np.any(arr > 255) or not np.all(np.isfinite(arr)):
            raise ValueError("PNG data must lie in [0, 255]")
        arr = np.round(arr).astype(np.uint8)
    if arr.ndim == 3 and arr.shape[2] == 3:
        mode = "RGB"
    elif arr.ndim == 2:
        mode = "L"
    else:
        raise ValueError(f"unsupported image shape {arr.shape}")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ValueError("image must be at least 1x1")
    Image.fromarray(np.ascontiguousarray(arr), mode=mode).save(path, format="PNG")


def write_pfm(path, data) -> None:
    """Write a 2-D float map as little-endian single-channel PFM (rows bottom-up)."""
    arr = np.asarray(data)
    if arr.ndim != 2:
        raise ValueError(f"PFM data must be 2-D, got shape {arr.shape}")
    arr = arr.astype("<f4")
    if np.any(np.isnan(arr)):
        raise ValueError("PFM data contains NaN")
    h, w = arr.shape
    with open(path, "wb") as fh:
        fh.write(f"Pf\n{w} {h}\n-1.0\n".encode("ascii"))
        fh.write(np.ascontiguousarray(arr[::-1]).tobytes())


_HEADER_TOKEN = re.compile(rb"\s*(\S+)")


def read_pfm(path) -> np.ndarray:
    """Read a single-channel little-endian PFM into a top-down float32 array."""
    with open(path, "rb") as fh:
        blob = fh.read()
    pos = 0
    tokens = []
    for _ in range(4):
        m = _HEADER_TOKEN.match(blob, pos)
        if m is None:
            raise FormatError(f"{path}: truncated PFM header")
        tokens.append(m.group(1))
        pos = m.end()
    if pos >= len(blob) or blob[pos : pos + 1] not in (b"\n", b" ", b"\r", b"\t"):
        raise FormatError(f"{path}: malformed PFM header")
    pos += 1
    tag, w, h, scale = tokens
    if tag == b"PF":
        raise FormatError(f"{path}: 3-channel PFM not supported")
    if tag != b"Pf":
        raise FormatError(f"{path}: not a PFM file")
    try:
        width, height, scale_val = int(w), int(h), float(scale)
    except ValueError:
        raise FormatError(f"{path}: malformed PFM header") from None
    if width < 1 or height < 1:
        raise FormatError(f"{path}: bad PFM dimensions {width}x{height}")
    if scale_val >= 0:
        raise FormatError(f"{path}: big-endian PFM (positive scale) not supported")
    payload = blob[pos:]
    if len(payload) != 4 * width * height:
        raise FormatError(f"{path}: expected {4 * width * height} data bytes, found {len(payload)}")
    data = np.frombuffer(payload, dtype="<f4").reshape(height, width)
    return data[::-1].astype(np.float32)


def semantic_index(sem: SemanticMap) -> np.ndarray:
    """Class index of the nearest object hit per pixel; 0 where none.

    Ties in hit distance go to the lower class index.
    """
    if len(sem.legend) > 255:
        raise ValueError(f"{len(sem.legend)} classes exceed the 255 an index PNG can hold")
    if not sem.legend:
        return np.zeros(sem.channels.shape[:2], dtype=np.uint8)
    dist = np.where(sem.channels > 0, sem.hit_distance, np.inf)
    nearest = np.argmin(dist, axis=2)
    hit = np.isfinite(np.min(dist, axis=2))
    return np.where(hit, nearest + 1, 0).astype(np.uint8)


def write_semantic(sem: SemanticMap, prefix: str) -> list[str]:
    """Write legend JSON, one binary PNG per channel, then the index PNG.

    Returns the paths written.  More than 255 classes raises after the
    channel files are on disk.
    """
    written = []
    legend_path = f"{prefix}_legend.json"
    with open(legend_path, "w", encoding="utf-8") as fh:
        json.dump({"classes": ["none", *sem.legend]}, fh, indent=2)
        fh.write("\n")
    written.append(legend_path)
    for c in range(len(sem.legend)):
        path = f"{prefix}_channel_{c + 1:03d}.png"
        write_png(path, (sem.channels[:, :, c] > 0).astype(np.uint8) * 255)
        written.append(path)
    index = semantic_index(sem)
    path = f"{prefix}_index.png"
    write_png(path, index)
    written.append(path)
    return written


def read_semantic_channels(prefix: str) -> tuple[np.ndarray, list[str]]:
    """Read back the per-channel PNGs written by :func:`write_semantic`."""
    with open(f"{prefix}_legend.json", encoding="utf-8") as fh:
        legend = json.load(fh)["classes"][1:]
    index = read_png_gray(f"{prefix}_index.png")
    chans = np.zeros(index.shape + (len(legend),), dtype=np.uint8)
    for c in range(len(legend)):
        chans[:, :, c] = read_png_gray(f"{prefix}_channel_{c + 1:03d}.png") > 0
    return chans, legend
