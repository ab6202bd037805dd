"""Spherical / equirectangular geometry and pinhole camera projections.

Conventions shared by the whole package:

* World frame is y-up.  Longitude ``phi = 0`` looks along +z and
  ``phi = pi/2`` along +x; latitude ``theta`` is positive upwards.
* ERP pixel (i, j) has its center at
  ``theta = pi/2 - pi (i + 0.5) / H`` and ``phi = -pi + 2 pi (j + 0.5) / W``;
  continuous coordinates follow the same formula.
* Camera frame: +z forward, +y up, +x towards increasing image column.
  Image pixel (v, u) covers ``[u, u + 1) x [v, v + 1)`` in edge coordinates,
  so the principal point sits at ``(W / 2, H / 2)``.
* All depths are radial (distance along the ray).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels


@dataclass(frozen=True)
class ErpGrid:
    height: int
    width: int

    def __post_init__(self):
        if int(self.height) != self.height or int(self.width) != self.width:
            raise ValueError("ERP dimensions must be integers")
        if self.height < 1 or self.width < 1:
            raise ValueError(f"ERP dimensions must be >= 1, got {self.height}x{self.width}")

    @property
    def shape(self) -> tuple[int, int]:
        return (self.height, self.width)

    def latitudes(self) -> np.ndarray:
        return math.pi / 2 - math.pi * (np.arange(self.height) + 0.5) / self.height

    def longitudes(self) -> np.ndarray:
        return -math.pi + 2 * math.pi * (np.arange(self.width) + 0.5) / self.width

    def directions(self) -> np.ndarray:
        """Unit ray directions of every pixel center, shape (H, W, 3)."""
        theta = self.latitudes()[:, None]
        phi = self.longitudes()[None, :]
        return angles_to_direction(
            np.broadcast_to(theta, self.shape), np.broadcast_to(phi, self.shape)
        )


def angles_to_direction(theta, phi) -> np.ndarray:
    theta = np.asarray(theta, dtype=np.float64)
    phi = np.asarray(phi, dtype=np.float64)
    c = np.cos(theta)
    return np.stack([c * np.sin(phi), np.sin(theta), c * np.cos(phi)], axis=-1)


def direction_to_angles(d) -> tuple[np.ndarray, np.ndarray]:
    d = np.asarray(d, dtype=np.float64)
    theta = np.arcsin(np.clip(d[..., 1], -1.0, 1.0))
    phi = np.arctan2(d[..., 0], d[..., 2])
    return theta, phi


def pixel_to_direction(grid: ErpGrid, i, j) -> np.ndarray:
    """Unit direction for continuous ERP coordinates (row ``i``, column ``j``).

    Rows are accepted over the span of row centers ``[0, H - 1]``, columns
    over ``[0, W]``; anything else raises ``ValueError``.
    """
    i = np.asarray(i, dtype=np.float64)
    j = np.asarray(j, dtype=np.float64)
    if np.any(~np.isfinite(i)) or np.any(i < 0) or np.any(i > grid.height - 1):
        raise ValueError(f"row coordinate outside [0, {grid.height - 1}]")
    if np.any(~np.isfinite(j)) or np.any(j < 0) or np.any(j > grid.width):
        raise ValueError(f"column coordinate outside [0, {grid.width}]")
    theta = math.pi / 2 - math.pi * (i + 0.5) / grid.height
    phi = -math.pi + 2 * math.pi * (j + 0.5) / grid.width
    return angles_to_direction(theta, phi)


def _direction_to_pixel_raw(grid: ErpGrid, d) -> tuple[np.ndarray, np.ndarray]:
    theta, phi = direction_to_angles(d)
    i = (math.pi / 2 - theta) * grid.height / math.pi - 0.5
    j = (phi + math.pi) * grid.width / (2 * math.pi) - 0.5
    return i, j


def direction_to_pixel(grid: ErpGrid, d) -> tuple[np.ndarray, np.ndarray]:
    """Continuous ERP coordinates of unit direction(s) ``d``.

    Latitude clamps to the first/last row center near the poles; the column
    is wrapped into ``[0, W)``.
    """
    d = np.asarray(d, dtype=np.float64)
    norm = np.linalg.norm(d, axis=-1)
    if np.any(np.abs(norm - 1.0) > 1e-9):
        raise ValueError("direction must be a unit vector")
    i, j = _direction_to_pixel_raw(grid, d)
    i = np.clip(i, 0.0, grid.height - 1.0)
    j = np.mod(j, grid.width)
    return i, j


def rotation_from_angles(yaw: float, pitch: float, roll: float = 0.0) -> np.ndarray:
    """Camera-to-world rotation ``R_yaw @ R_pitch @ R_roll``.

    Yaw turns about +y (yaw = pi/2 sends +z to +x), positive pitch raises the
    optical axis towards +y, roll spins about the optical axis.
    """
    cy, sy = math.cos(yaw), math.sin(yaw)
    cp, sp = math.cos(pitch), math.sin(pitch)
    cr, sr = math.cos(roll), math.sin(roll)
    r_yaw = np.array([[cy, 0.0, sy], [0.0, 1.0, 0.0], [-sy, 0.0, cy]])
    r_pitch = np.array([[1.0, 0.0, 0.0], [0.0, cp, sp], [0.0, -sp, cp]])
    r_roll = np.array([[cr, -sr, 0.0], [sr, cr, 0.0], [0.0, 0.0, 1.0]])
    return r_yaw @ r_pitch @ r_roll


@dataclass(frozen=True)
class CameraSpec:
    """Pinhole camera with square pixels.  Angles in radians."""

    yaw: float
    pitch: float
    hfov: float
    width: int
    height: int
    roll: float = 0.0

    def __post_init__(self):
        if not (0.0 < self.hfov < math.pi):
            raise ValueError(f"hfov must lie in (0, pi), got {self.hfov}")
        if self.width < 1 or self.height < 1:
            raise ValueError("camera image must be at least 1x1")

    @property
    def focal(self) -> float:
        return (self.width / 2) / math.tan(self.hfov / 2)

    @property
    def vfov(self) -> float:
        return 2 * math.atan((self.height / 2) / self.focal)

    @property
    def rotation(self) -> np.ndarray:
        return rotation_from_angles(self.yaw, self.pitch, self.roll)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.height, self.width)

    def pixel_rays(self) -> np.ndarray:
        """World-frame unit rays through every pixel center, shape (H, W, 3)."""
        v, u = np.meshgrid(
            np.arange(self.height) + 0.5, np.arange(self.width) + 0.5, indexing="ij"
        )
        f = self.focal
        cam = np.stack(
            [(u - self.width / 2) / f, -(v - self.height / 2) / f, np.ones_like(u)], axis=-1
        )
        cam /= np.linalg.norm(cam, axis=-1, keepdims=True)
        return cam @ self.rotation.T

    def project(self, world_dirs) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Edge-coordinates ``(x, y)`` and an in-frustum flag for world directions.

        ``x`` runs over ``[0, W]`` and ``y`` over ``[0, H]`` inside the image.
        """
        cam = np.asarray(world_dirs, dtype=np.float64) @ self.rotation
        z = cam[..., 2]
        front = z > 0
        safe = np.where(front, z, 1.0)
        f = self.focal
        x = self.width / 2 + f * cam[..., 0] / safe
        y = self.height / 2 - f * cam[..., 1] / safe
        inside = front & (x >= 0) & (x <= self.width) & (y >= 0) & (y <= self.height)
        return x, y, inside


def _as_channels(img) -> tuple[np.ndarray, bool]:
    arr = np.asarray(img, dtype=np.float64)
    if arr.ndim == 2:
        return arr[:, :, None], True
    return arr, False


def perspective_to_erp(img, cam: CameraSpec, grid: ErpGrid) -> tuple[np.ndarray, np.ndarray]:
    """Place a perspective image on the sphere.

    Returns the ERP image (float64, zero outside the frustum) and a float
    coverage mask with 1 inside the frustum.  2-D inputs give 2-D outputs.
    """
    arr, squeeze = _as_channels(img)
    if arr.shape[:2] != cam.shape:
        raise ValueError(f"image is {arr.shape[:2]}, camera expects {cam.shape}")
    dirs = grid.directions().reshape(-1, 3)
    x, y, inside = cam.project(dirs)
    out = np.zeros((dirs.shape[0], arr.shape[2]))
    if inside.any():
        out[inside] = kernels.sample_bilinear(arr, y[inside] - 0.5, x[inside] - 0.5, False)
    out = out.reshape(grid.height, grid.width, arr.shape[2])
    mask = inside.reshape(grid.shape).astype(np.float64)
    return (out[:, :, 0] if squeeze else out), mask


def erp_to_perspective(erp, cam: CameraSpec) -> np.ndarray:
    """Gnomonic view of an ERP image; bilinear with longitude wraparound."""
    arr, squeeze = _as_channels(erp)
    grid = ErpGrid(arr.shape[0], arr.shape[1])
    rays = cam.pixel_rays().reshape(-1, 3)
    i, j = _direction_to_pixel_raw(grid, rays)
    out = kernels.sample_bilinear(arr, i, j, True).reshape(cam.height, cam.width, arr.shape[2])
    return out[:, :, 0] if squeeze else out


RIG_SIZE = 512
RIG_HFOV = math.pi / 2


def rig_angles(n: int) -> tuple[float, float]:
    """Latitude and longitude (radians, longitude in [0, 2pi)) of rig view ``n`` (1-based)."""
    if not 1 <= n <= 16:
        raise ValueError("rig views are numbered 1..16")
    if n <= 4:
        theta = math.pi / 4
    elif n <= 8:
        theta = -math.pi / 4
    else:
        theta = 0.0
    # pi*n/2 and pi*n/4 reduced modulo 2pi with integer arithmetic
    if n <= 8:
        phi = math.pi * (n % 4) / 2
    else:
        phi = math.pi * (n % 8) / 4
    return theta, phi


def tangent_rig(size: int = RIG_SIZE) -> list[CameraSpec]:
    """The 16 tangent views: 90 degree square cameras on three latitude rings."""
    cams = []
    for n in range(1, 17):
        theta, phi = rig_angles(n)
        cams.append(CameraSpec(yaw=phi, pitch=theta, hfov=RIG_HFOV, width=size, height=size))
    return cams
