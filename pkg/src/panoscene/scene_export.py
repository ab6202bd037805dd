"""RGB-D panorama to point cloud, PLY files, and translated perspective renders."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .geometry import CameraSpec, ErpGrid


@dataclass
class PointCloud:
    points: np.ndarray
    colors: np.ndarray

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=np.float64).reshape(-1, 3)
        self.colors = np.asarray(self.colors, dtype=np.uint8).reshape(-1, 3)
        if len(self.points) != len(self.colors):
            raise ValueError("points and colors differ in length")
        if not np.all(np.isfinite(self.points)):
            raise ValueError("point coordinates must be finite")

    def __len__(self):
        return len(self.points)


def _check_pair(rgb, depth):
    rgb = np.asarray(rgb)
    depth = np.asarray(depth, dtype=np.float64)
    if rgb.ndim != 3 or rgb.shape[2] != 3 or rgb.shape[:2] != depth.shape:
        raise ValueError(f"rgb {rgb.shape} does not match depth {depth.shape}")
    if np.any(np.isnan(depth)):
        raise ValueError("depth contains NaN")
    if np.any(depth < 0):
        raise ValueError("depth must be nonnegative")
    return rgb, depth


def unproject(rgb, depth, grid: ErpGrid | None = None) -> PointCloud:
    """One colored point per finite-depth pixel, in row-major pixel order."""
    rgb, depth = _check_pair(rgb, depth)
    grid = grid or ErpGrid(*depth.shape)
    if grid.shape != depth.shape:
        raise ValueError("grid does not match depth")
    finite = np.isfinite(depth)
    dirs = grid.directions()[finite]
    return PointCloud(dirs * depth[finite][:, None], rgb[finite])


def render_translated(rgb, depth, cam: CameraSpec, translation=(0.0, 0.0, 0.0), grid: ErpGrid | None = None):
    """Splat the RGB-D panorama into a camera moved by ``translation``.

    One-pixel splats with a nearest-radial-distance z-buffer; ties keep the
    lower ERP pixel index.  Returns ``(image uint8, depth, hole_mask bool)``
    where the depth buffer is radial from the moved camera and +inf in holes.
    """
    pc = unproject(rgb, depth, grid)
    rel = (pc.points - np.asarray(translation, dtype=np.float64)) @ cam.rotation
    z = rel[:, 2]
    front = z > 0
    safe = np.where(front, z, 1.0)
    f = cam.focal
    x = cam.width / 2 + f * rel[:, 0] / safe
    y = cam.height / 2 - f * rel[:, 1] / safe
    cols = np.where(front, np.floor(x), -1).astype(np.int64)
    rows = np.where(front, np.floor(y), -1).astype(np.int64)
    dist = np.where(front, np.linalg.norm(rel, axis=1), np.inf)
    winner = kernels.splat_nearest(rows, cols, dist, cam.height, cam.width)
    holes = winner < 0
    image = np.zeros((cam.height, cam.width, 3), dtype=np.uint8)
    zbuf = np.full((cam.height, cam.width), np.inf)
    image[~holes] = pc.colors[winner[~holes]]
    zbuf[~holes] = dist[winner[~holes]]
    return image, zbuf, holes


_PLY_DTYPE = np.dtype(
    [("x", "<f4"), ("y", "<f4"), ("z", "<f4"), ("red", "u1"), ("green", "u1"), ("blue", "u1")]
)


def write_ply(pc: PointCloud, path) -> None:
    """Binary little-endian PLY with float32 xyz and uint8 rgb per vertex."""
    rec = np.empty(len(pc), dtype=_PLY_DTYPE)
    rec["x"], rec["y"], rec["z"] = pc.points.T.astype("<f4")
    rec["red"], rec["green"], rec["blue"] = pc.colors.T
    header = (
        "ply\n"
        "format binary_little_endian 1.0\n"
        f"element vertex {len(pc)}\n"
        "property float x\nproperty float y\nproperty float z\n"
        "property uchar red\nproperty uchar green\nproperty uchar blue\n"
        "end_header\n"
    )
    try:
        with open(path, "wb") as fh:
            fh.write(header.encode("ascii"))
            fh.write(rec.tobytes())
    except OSError as exc:
        raise OSError(f"cannot write PLY to {path}: {exc}") from exc


def read_ply(path) -> PointCloud:
    """Read back a PLY produced by :func:`write_ply`."""
    with open(path, "rb") as fh:
        blob = fh.read()
    end = blob.find(b"end_header\n")
    if not blob.startswith(b"ply\n") or end < 0:
        raise ValueError(f"{path}: not a PLY file")
    header = blob[:end].decode("ascii").splitlines()
    if "format binary_little_endian 1.0" not in header:
        raise ValueError(f"{path}: only binary little-endian PLY is supported")
    count = next(int(line.split()[2]) for line in header if line.startswith("element vertex"))
    rec = np.frombuffer(blob[end + len(b"end_header\n") :], dtype=_PLY_DTYPE, count=count)
    points = np.stack([rec["x"], rec["y"], rec["z"]], axis=1).astype(np.float64)
    colors = np.stack([rec["red"], rec["green"], rec["blue"]], axis=1)
    return PointCloud(points, colors)
