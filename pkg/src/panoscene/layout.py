"""Top-view layouts (floor plans, terrain maps) and their ERP rasterization.

Floor-plan coordinates are ``(x, z)`` meters in the top view with heights
along +y.  Terrain grids are indexed ``heights[v, u]`` with grid point
``(u, v)`` at world ``(x, z) = (u * cell_size, v * cell_size)``.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .geometry import CameraSpec, ErpGrid


class LayoutError(ValueError):
    """Invalid layout document; ``path`` names the offending field."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


@dataclass(frozen=True)
class ObserverSpec:
    position: tuple[float, float]
    eye_height: float
    camera: CameraSpec
    image: str | None = None


@dataclass(frozen=True)
class RoomObject:
    class_name: str
    bbox: tuple[tuple[float, float], tuple[float, float]]
    bottom: float
    top: float

    def box3d(self) -> np.ndarray:
        (x0, z0), (x1, z1) = self.bbox
        return np.array([x0, self.bottom, z0, x1, self.top, z1], dtype=np.float64)


@dataclass(frozen=True)
class FloorPlan:
    corners: np.ndarray
    floor_height: float
    ceiling_height: float
    objects: tuple[RoomObject, ...]
    observer: ObserverSpec

    @property
    def eye(self) -> np.ndarray:
        x, z = self.observer.position
        return np.array([x, self.observer.eye_height, z], dtype=np.float64)

    def edges(self) -> np.ndarray:
        a = self.corners
        b = np.roll(self.corners, -1, axis=0)
        return np.hstack([a, b])

    def legend(self) -> list[str]:
        seen: list[str] = []
        for obj in self.objects:
            if obj.class_name not in seen:
                seen.append(obj.class_name)
        return seen


@dataclass(frozen=True)
class TerrainMap:
    heights: np.ndarray
    cell_size: float = 1.0
    max_distance: float = 1000.0
    observer: ObserverSpec | None = None

    def height_at(self, u: float, v: float) -> float:
        """Bilinear terrain height at continuous grid coordinates (u, v)."""
        hv, hu = self.heights.shape
        u = min(max(u, 0.0), hu - 1.0)
        v = min(max(v, 0.0), hv - 1.0)
        u0 = min(int(math.floor(u)), hu - 2)
        v0 = min(int(math.floor(v)), hv - 2)
        fu, fv = u - u0, v - v0
        h = self.heights
        top = h[v0, u0] * (1 - fu) + h[v0, u0 + 1] * fu
        bot = h[v0 + 1, u0] * (1 - fu) + h[v0 + 1, u0 + 1] * fu
        return float(top * (1 - fv) + bot * fv)

    @property
    def eye(self) -> np.ndarray:
        if self.observer is None:
            raise ValueError("terrain map has no observer")
        u, v = self.observer.position
        y = self.height_at(u, v) + self.observer.eye_height
        return np.array([u * self.cell_size, y, v * self.cell_size], dtype=np.float64)


@dataclass(frozen=True)
class GmmComponent:
    weight: float
    mean: tuple[float, float]
    cov: np.ndarray


@dataclass(frozen=True)
class GmmSpec:
    height: int
    width: int
    components: tuple[GmmComponent, ...]
    cell_size: float = 1.0
    max_distance: float = 1000.0


@dataclass
class SemanticMap:
    """Binary per-class coverage plus per-class entry distance along each ray."""

    channels: np.ndarray
    legend: list[str]
    hit_distance: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.channels.ndim != 3 or self.channels.shape[2] != len(self.legend):
            raise ValueError("channel count must equal legend length")


# ---------------------------------------------------------------- validation


def polygon_area(corners: np.ndarray) -> float:
    x, z = corners[:, 0], corners[:, 1]
    return 0.5 * float(np.dot(x, np.roll(z, -1)) - np.dot(np.roll(x, -1), z))


def _segments_cross(p1, p2, q1, q2) -> bool:
    def orient(a, b, c):
        return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])

    d1, d2 = orient(q1, q2, p1), orient(q1, q2, p2)
    d3, d4 = orient(p1, p2, q1), orient(p1, p2, q2)
    if ((d1 > 0) != (d2 > 0)) and ((d3 > 0) != (d4 > 0)) and 0 not in (d1, d2, d3, d4):
        return True

    def on_seg(a, b, c):
        return (
            min(a[0], b[0]) <= c[0] <= max(a[0], b[0])
            and min(a[1], b[1]) <= c[1] <= max(a[1], b[1])
        )

    return (
        (d1 == 0 and on_seg(q1, q2, p1))
        or (d2 == 0 and on_seg(q1, q2, p2))
        or (d3 == 0 and on_seg(p1, p2, q1))
        or (d4 == 0 and on_seg(p1, p2, q2))
    )


def is_simple_polygon(corners: np.ndarray) -> bool:
    n = len(corners)
    for a in range(n):
        for b in range(a + 1, n):
            if b == a + 1 or (a == 0 and b == n - 1):
                continue
            if _segments_cross(corners[a], corners[(a + 1) % n], corners[b], corners[(b + 1) % n]):
                return False
    return True


def point_in_polygon(corners: np.ndarray, x: float, z: float) -> bool:
    """Strict interior test (points on an edge count as outside)."""
    n = len(corners)
    inside = False
    for k in range(n):
        ax, az = corners[k]
        bx, bz = corners[(k + 1) % n]
        cross = (bx - ax) * (z - az) - (bz - az) * (x - ax)
        if (
            abs(cross) <= 1e-12 * max(1.0, abs(bx - ax) + abs(bz - az))
            and min(ax, bx) <= x <= max(ax, bx)
            and min(az, bz) <= z <= max(az, bz)
        ):
            return False
        if (az > z) != (bz > z):
            xc = ax + (z - az) * (bx - ax) / (bz - az)
            if x < xc:
                inside = not inside
    return inside


def _num(doc, key, path, positive=False):
    if key not in doc:
        raise LayoutError(f"{path}.{key}", "missing required field")
    value = doc[key]
    if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
        raise LayoutError(f"{path}.{key}", f"expected a finite number, got {value!r}")
    if positive and value <= 0:
        raise LayoutError(f"{path}.{key}", f"must be > 0, got {value}")
    return float(value)


def _int(doc, key, path, default=None):
    if key not in doc:
        if default is not None:
            return default
        raise LayoutError(f"{path}.{key}", "missing required field")
    value = doc[key]
    if isinstance(value, bool) or not isinstance(value, int) or value < 1:
        raise LayoutError(f"{path}.{key}", f"expected a positive integer, got {value!r}")
    return value


def _pair(value, path) -> tuple[float, float]:
    if (
        not isinstance(value, (list, tuple))
        or len(value) != 2
        or not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in value)
        or not all(math.isfinite(v) for v in value)
    ):
        raise LayoutError(path, f"expected a pair of finite numbers, got {value!r}")
    return float(value[0]), float(value[1])


def _camera(doc, path) -> CameraSpec:
    hfov = _num(doc, "hfov_deg", path)
    if not 0 < hfov < 180:
        raise LayoutError(f"{path}.hfov_deg", f"must lie in (0, 180), got {hfov}")
    yaw = float(doc.get("yaw_deg", 0.0))
    pitch = float(doc.get("pitch_deg", 0.0))
    roll = float(doc.get("roll_deg", 0.0))
    return CameraSpec(
        yaw=math.radians(yaw),
        pitch=math.radians(pitch),
        roll=math.radians(roll),
        hfov=math.radians(hfov),
        width=_int(doc, "image_width", path, default=512),
        height=_int(doc, "image_height", path, default=512),
    )


def _observer(doc, path, pos_key, base_dir) -> ObserverSpec:
    if not isinstance(doc, dict):
        raise LayoutError(path, "expected an object")
    if pos_key not in doc:
        raise LayoutError(f"{path}.{pos_key}", "missing required field")
    position = _pair(doc[pos_key], f"{path}.{pos_key}")
    eye = _num(doc, "eye_height", path)
    image = doc.get("image")
    if image is not None:
        if not isinstance(image, str) or not image:
            raise LayoutError(f"{path}.image", "expected a file path")
        if base_dir and not os.path.isabs(image):
            image = os.path.join(base_dir, image)
    return ObserverSpec(position=position, eye_height=eye, camera=_camera(doc, path), image=image)


def _parse_floorplan(doc, base_dir) -> FloorPlan:
    corners_raw = doc.get("corners")
    if not isinstance(corners_raw, list) or len(corners_raw) < 3:
        raise LayoutError("$.corners", "expected a list of at least 3 [x, z] points")
    corners = np.array([_pair(c, f"$.corners[{k}]") for k, c in enumerate(corners_raw)])
    if abs(polygon_area(corners)) <= 1e-12:
        raise LayoutError("$.corners", "polygon has zero area")
    if not is_simple_polygon(corners):
        raise LayoutError("$.corners", "polygon is self-intersecting")
    if polygon_area(corners) < 0:
        corners = corners[::-1].copy()
    floor = _num(doc, "floor_height", "$")
    ceiling = _num(doc, "ceiling_height", "$")
    if ceiling <= floor:
        raise LayoutError("$.ceiling_height", f"must exceed floor_height ({ceiling} <= {floor})")

    objects = []
    raw_objects = doc.get("objects", [])
    if not isinstance(raw_objects, list):
        raise LayoutError("$.objects", "expected a list")
    for k, raw in enumerate(raw_objects):
        p = f"$.objects[{k}]"
        if not isinstance(raw, dict):
            raise LayoutError(p, "expected an object")
        name = raw.get("class")
        if not isinstance(name, str) or not name.strip():
            raise LayoutError(f"{p}.class", "class name must be a non-empty string")
        if name == "none":
            raise LayoutError(f"{p}.class", "'none' is reserved for background")
        bbox = raw.get("bbox")
        if not isinstance(bbox, list) or len(bbox) != 2:
            raise LayoutError(f"{p}.bbox", "expected [[xmin, zmin], [xmax, zmax]]")
        lo = _pair(bbox[0], f"{p}.bbox[0]")
        hi = _pair(bbox[1], f"{p}.bbox[1]")
        if not (hi[0] > lo[0] and hi[1] > lo[1]):
            raise LayoutError(f"{p}.bbox", "box must have positive area (max > min)")
        bottom = _num(raw, "bottom", p)
        top = _num(raw, "top", p)
        if top <= bottom:
            raise LayoutError(f"{p}.top", f"must exceed bottom ({top} <= {bottom})")
        objects.append(RoomObject(name, (lo, hi), bottom, top))

    if "observer" not in doc:
        raise LayoutError("$.observer", "missing required field")
    observer = _observer(doc["observer"], "$.observer", "position", base_dir)
    if not point_in_polygon(corners, *observer.position):
        raise LayoutError("$.observer.position", "observer must lie strictly inside the room")
    if not floor <= observer.eye_height <= ceiling:
        raise LayoutError(
            "$.observer.eye_height", f"must lie within [{floor}, {ceiling}], got {observer.eye_height}"
        )
    return FloorPlan(corners, floor, ceiling, tuple(objects), observer)


def _load_heights(value, base_dir) -> np.ndarray:
    if isinstance(value, dict):
        if set(value) != {"pfm"} or not isinstance(value["pfm"], str):
            raise LayoutError("$.heights", 'expected {"pfm": path}')
        from .pano_io import read_pfm

        path = value["pfm"]
        if base_dir and not os.path.isabs(path):
            path = os.path.join(base_dir, path)
        return read_pfm(path).astype(np.float64)
    if not isinstance(value, list) or not value or not all(isinstance(r, list) for r in value):
        raise LayoutError("$.heights", "expected a 2-D array or {\"pfm\": path}")
    width = len(value[0])
    if any(len(r) != width for r in value):
        raise LayoutError("$.heights", "rows have unequal lengths")
    try:
        return np.array(value, dtype=np.float64)
    except (TypeError, ValueError) as exc:
        raise LayoutError("$.heights", f"non-numeric entry ({exc})") from None


def _parse_terrain(doc, base_dir) -> TerrainMap:
    if "heights" not in doc:
        raise LayoutError("$.heights", "missing required field")
    heights = _load_heights(doc["heights"], base_dir)
    if heights.ndim != 2 or heights.shape[0] < 2 or heights.shape[1] < 2:
        raise LayoutError("$.heights", f"grid must be at least 2x2, got {heights.shape}")
    if not np.all(np.isfinite(heights)):
        raise LayoutError("$.heights", "all heights must be finite")
    cell = _num(doc, "cell_size", "$", positive=True)
    max_distance = _num(doc, "max_distance", "$", positive=True)
    if "observer" not in doc:
        raise LayoutError("$.observer", "missing required field")
    observer = _observer(doc["observer"], "$.observer", "grid_pos", base_dir)
    if observer.eye_height <= 0:
        raise LayoutError("$.observer.eye_height", "must be > 0 above the terrain")
    u, v = observer.position
    if not (0 <= u <= heights.shape[1] - 1 and 0 <= v <= heights.shape[0] - 1):
        raise LayoutError("$.observer.grid_pos", f"outside the {heights.shape} grid")
    return TerrainMap(heights, cell, max_distance, observer)


def parse_layout(document, base_dir: str | None = None) -> FloorPlan | TerrainMap:
    """Validate a layout document (dict or JSON text) into a layout object.

    Relative file references resolve against ``base_dir``.
    """
    if isinstance(document, (str, bytes)):
        try:
            document = json.loads(document)
        except json.JSONDecodeError as exc:
            raise LayoutError("$", f"invalid JSON ({exc})") from None
    if not isinstance(document, dict):
        raise LayoutError("$", "top level must be an object")
    kind = document.get("kind")
    if kind == "floorplan":
        return _parse_floorplan(document, base_dir)
    if kind == "terrain":
        return _parse_terrain(document, base_dir)
    raise LayoutError("$.kind", f"unknown layout kind {kind!r} (expected 'floorplan' or 'terrain')")


def load_layout(path: str) -> FloorPlan | TerrainMap:
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    return parse_layout(text, base_dir=os.path.dirname(os.path.abspath(path)))


def parse_gmm(document) -> GmmSpec:
    if isinstance(document, (str, bytes)):
        try:
            document = json.loads(document)
        except json.JSONDecodeError as exc:
            raise LayoutError("$", f"invalid JSON ({exc})") from None
    if not isinstance(document, dict):
        raise LayoutError("$", "top level must be an object")
    height = _int(document, "height", "$")
    width = _int(document, "width", "$")
    raw = document.get("components")
    if not isinstance(raw, list):
        raise LayoutError("$.components", "expected a list")
    comps = []
    for k, c in enumerate(raw):
        p = f"$.components[{k}]"
        if not isinstance(c, dict):
            raise LayoutError(p, "expected an object")
        weight = _num(c, "weight", p)
        if "mean" not in c:
            raise LayoutError(f"{p}.mean", "missing required field")
        mean = _pair(c["mean"], f"{p}.mean")
        cov = c.get("cov")
        if not isinstance(cov, list) or len(cov) != 2:
            raise LayoutError(f"{p}.cov", "expected [[a, b], [b, c]]")
        cov = np.array([_pair(cov[0], f"{p}.cov[0]"), _pair(cov[1], f"{p}.cov[1]")])
        comps.append(GmmComponent(weight, mean, cov))
    spec = GmmSpec(
        height,
        width,
        tuple(comps),
        cell_size=float(document.get("cell_size", 1.0)),
        max_distance=float(document.get("max_distance", 1000.0)),
    )
    try:
        validate_gmm(spec)
    except ValueError as exc:
        raise LayoutError("$.components", str(exc)) from None
    return spec


def validate_gmm(spec: GmmSpec) -> None:
    if not spec.components:
        raise ValueError("at least one mixture component is required")
    for k, comp in enumerate(spec.components):
        cov = np.asarray(comp.cov, dtype=np.float64)
        if cov.shape != (2, 2) or not np.all(np.isfinite(cov)):
            raise ValueError(f"component {k}: covariance must be a finite 2x2 matrix")
        if cov[0, 1] != cov[1, 0]:
            raise ValueError(f"component {k}: covariance must be symmetric")
        if cov[0, 0] <= 0 or cov[1, 1] <= 0 or np.linalg.det(cov) <= 0:
            raise ValueError(f"component {k}: covariance must be positive definite")


# ---------------------------------------------------------------- rasterization


def _grid_dirs(grid: ErpGrid) -> np.ndarray:
    return grid.directions().reshape(-1, 3)


def floorplan_ray_depth(fp: FloorPlan, dirs) -> np.ndarray:
    """Distance from the eye to the bare room (walls, floor, ceiling) along ``dirs``."""
    dirs = np.ascontiguousarray(dirs, dtype=np.float64).reshape(-1, 3)
    return kernels.cast_floorplan(fp.eye, dirs, fp.edges(), fp.floor_height, fp.ceiling_height)


def floorplan_coarse_depth(fp: FloorPlan, grid: ErpGrid) -> np.ndarray:
    """Radial depth of the unfurnished room seen from the observer, (H, W)."""
    return floorplan_ray_depth(fp, _grid_dirs(grid)).reshape(grid.shape)


def object_ray_hits(fp: FloorPlan, dirs) -> np.ndarray:
    """Entry distance into every object box along ``dirs``, shape (n, n_objects)."""
    dirs = np.ascontiguousarray(dirs, dtype=np.float64).reshape(-1, 3)
    if not fp.objects:
        return np.full((dirs.shape[0], 0), np.inf)
    boxes = np.stack([obj.box3d() for obj in fp.objects])
    return kernels.cast_boxes(fp.eye, dirs, boxes)


def floorplan_semantic_map(fp: FloorPlan, grid: ErpGrid) -> SemanticMap:
    legend = fp.legend()
    hits = object_ray_hits(fp, _grid_dirs(grid))
    dist = np.full((hits.shape[0], len(legend)), np.inf)
    for k, obj in enumerate(fp.objects):
        c = legend.index(obj.class_name)
        np.minimum(dist[:, c], hits[:, k], out=dist[:, c])
    dist = dist.reshape(grid.height, grid.width, len(legend))
    channels = np.isfinite(dist).astype(np.uint8)
    return SemanticMap(channels=channels, legend=legend, hit_distance=dist)


def floorplan_furnished_depth(fp: FloorPlan, grid: ErpGrid) -> np.ndarray:
    """Room depth with the object boxes as occluders (a synthetic ground truth)."""
    dirs = _grid_dirs(grid)
    depth = floorplan_ray_depth(fp, dirs)
    hits = object_ray_hits(fp, dirs)
    if hits.shape[1]:
        depth = np.minimum(depth, np.where(hits > 0, hits, np.inf).min(axis=1))
    return depth.reshape(grid.shape)


MARCH_STEPS_PER_CELL = 4
BISECTION_STEPS = 40


def terrain_ray_depth(tm: TerrainMap, dirs) -> np.ndarray:
    eye = tm.eye
    dirs = np.ascontiguousarray(dirs, dtype=np.float64).reshape(-1, 3)
    return kernels.march_heightfield(
        eye,
        dirs,
        tm.heights,
        tm.cell_size,
        tm.max_distance,
        tm.cell_size / MARCH_STEPS_PER_CELL,
        BISECTION_STEPS,
    )


def terrain_coarse_depth(tm: TerrainMap, grid: ErpGrid) -> np.ndarray:
    """Radial depth to the heightfield; rays without a hit are +inf."""
    if tm.observer is None:
        raise ValueError("terrain map has no observer")
    if tm.observer.eye_height <= 0:
        raise ValueError("observer eye point must lie above the terrain")
    return terrain_ray_depth(tm, _grid_dirs(grid)).reshape(grid.shape)


def gmm_heights(spec: GmmSpec) -> np.ndarray:
    """Mixture-of-Gaussians heightfield sampled at integer grid points (v, u)."""
    validate_gmm(spec)
    v, u = np.meshgrid(np.arange(spec.height), np.arange(spec.width), indexing="ij")
    out = np.zeros((spec.height, spec.width))
    for comp in spec.components:
        prec = np.linalg.inv(np.asarray(comp.cov, dtype=np.float64))
        du = u - comp.mean[0]
        dv = v - comp.mean[1]
        quad = prec[0, 0] * du * du + 2 * prec[0, 1] * du * dv + prec[1, 1] * dv * dv
        out += comp.weight * np.exp(-0.5 * quad)
    return out


def synth_terrain_gmm(spec: GmmSpec, observer: ObserverSpec | None = None) -> TerrainMap:
    return TerrainMap(gmm_heights(spec), spec.cell_size, spec.max_distance, observer)


def coarse_depth(layout: FloorPlan | TerrainMap, grid: ErpGrid) -> np.ndarray:
    if isinstance(layout, FloorPlan):
        return floorplan_coarse_depth(layout, grid)
    return terrain_coarse_depth(layout, grid)
