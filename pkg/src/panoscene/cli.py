"""Command-line pipeline: layout conversion, depth integration, evaluation, export.

Exit codes: 0 ok, 2 input contract violation, 3 I/O failure, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import re
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, kernels
from .geometry import CameraSpec, ErpGrid, erp_to_perspective, perspective_to_erp, tangent_rig
from .integration import (
    IntegrationConfig,
    IntegrationError,
    SingularSystemError,
    ViewEstimate,
    coarse_weight_floorplan,
    coarse_weight_terrain,
    erp_view_weight,
    integrate,
    tangent_estimate_to_view,
)
from .layout import (
    FloorPlan,
    LayoutError,
    coarse_depth,
    floorplan_furnished_depth,
    floorplan_semantic_map,
    load_layout,
    parse_gmm,
    synth_terrain_gmm,
)
from .metrics import evaluate
from .pano_io import FormatError, read_pfm, read_png, write_pfm, write_png, write_semantic
from .scene_export import render_translated, unproject, write_ply

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_IO = 3
EXIT_NUMERIC = 4


class InputError(ValueError):
    pass


# ----------------------------------------------------------------- helpers


def parse_erp_size(text: str) -> ErpGrid:
    m = re.fullmatch(r"\s*(\d+)\s*[xX]\s*(\d+)\s*", text)
    if not m:
        raise InputError(f"--erp expects HxW, got {text!r}")
    return ErpGrid(int(m.group(1)), int(m.group(2)))


def parse_vector(text: str) -> np.ndarray:
    try:
        vals = [float(v) for v in text.split(",")]
    except ValueError:
        raise InputError(f"expected x,y,z, got {text!r}") from None
    if len(vals) != 3 or not all(math.isfinite(v) for v in vals):
        raise InputError(f"expected three finite numbers x,y,z, got {text!r}")
    return np.array(vals)


def load_config(path: str | None, ridge: float | None = None) -> IntegrationConfig:
    doc = {}
    if path:
        with open(path, encoding="utf-8") as fh:
            try:
                doc = json.load(fh)
            except json.JSONDecodeError as exc:
                raise InputError(f"{path}: invalid JSON ({exc})") from None
        if not isinstance(doc, dict):
            raise InputError(f"{path}: config must be a JSON object")
    if ridge is not None:
        doc = {**doc, "ridge": ridge}
    return IntegrationConfig.from_dict(doc)


def load_camera(path: str) -> CameraSpec:
    with open(path, encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise InputError(f"{path}: invalid JSON ({exc})") from None
    try:
        return CameraSpec(
            yaw=math.radians(float(doc.get("yaw_deg", 0.0))),
            pitch=math.radians(float(doc.get("pitch_deg", 0.0))),
            roll=math.radians(float(doc.get("roll_deg", 0.0))),
            hfov=math.radians(float(doc["hfov_deg"])),
            width=int(doc.get("image_width", 512)),
            height=int(doc.get("image_height", 512)),
        )
    except (KeyError, TypeError) as exc:
        raise InputError(f"{path}: bad camera description ({exc})") from None


def _dump_json(path, doc) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


class Manifest:
    """Inputs, outputs, config and timings written next to a command's outputs."""

    def __init__(self, command: str):
        self.doc = {
            "tool": "panoscene",
            "version": __version__,
            "command": command,
            "backend": kernels.get_backend(),
            "inputs": {},
            "outputs": [],
            "config": {},
            "timings_s": {},
        }
        self._t0 = time.perf_counter()
        self._last = self._t0

    def stage(self, name: str) -> None:
        now = time.perf_counter()
        self.doc["timings_s"][name] = round(now - self._last, 6)
        self._last = now

    def output(self, path) -> None:
        self.doc["outputs"].append(str(path))

    def write(self, path) -> None:
        self.doc["timings_s"]["total"] = round(time.perf_counter() - self._t0, 6)
        _dump_json(path, self.doc)


def _manifest_path(out: str) -> Path:
    p = Path(out)
    return p.with_name(p.stem + ".manifest.json")


def _read_depth_pair(path_a: str, path_b: str) -> tuple[np.ndarray, np.ndarray]:
    a = read_pfm(path_a).astype(np.float64)
    b = read_pfm(path_b).astype(np.float64)
    if a.shape != b.shape:
        raise InputError(f"{path_a} is {a.shape} but {path_b} is {b.shape}")
    return a, b


# ----------------------------------------------------------------- commands


def cmd_convert_layout(args) -> int:
    man = Manifest("convert-layout")
    grid = parse_erp_size(args.erp)
    cfg = load_config(args.config)
    layout = load_layout(args.layout)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    man.doc["inputs"] = {"layout": args.layout, "erp": [grid.height, grid.width]}
    man.doc["config"] = cfg.__dict__.copy()
    man.stage("parse")

    depth = coarse_depth(layout, grid)
    write_pfm(out / "coarse_depth.pfm", depth)
    man.output(out / "coarse_depth.pfm")
    man.stage("coarse_depth")

    cam = layout.observer.camera
    region = perspective_to_erp(np.zeros(cam.shape), cam, grid)[1]
    if layout.observer.image is not None:
        img = read_png(layout.observer.image)
        if img.shape[:2] != cam.shape:
            raise InputError(
                f"partial image is {img.shape[1]}x{img.shape[0]}, layout declares "
                f"{cam.width}x{cam.height}"
            )
        partial, region = perspective_to_erp(img, cam, grid)
        write_png(out / "partial.png", np.clip(np.round(partial), 0, 255).astype(np.uint8))
        write_png(out / "mask.png", (region > 0).astype(np.uint8) * 255)
        man.output(out / "partial.png")
        man.output(out / "mask.png")
        man.stage("partial")

    if isinstance(layout, FloorPlan):
        sem = floorplan_semantic_map(layout, grid)
        for path in write_semantic(sem, str(out / "semantic")):
            man.output(path)
        weight = coarse_weight_floorplan(region, sem.channels, cfg)
        man.stage("semantic")
        if args.furnished:
            write_pfm(out / "furnished_depth.pfm", floorplan_furnished_depth(layout, grid))
            man.output(out / "furnished_depth.pfm")
            man.stage("furnished")
    else:
        weight = coarse_weight_terrain(depth, cfg)
    write_pfm(out / "coarse_weight.pfm", weight)
    man.output(out / "coarse_weight.pfm")
    man.write(out / "manifest.json")
    return EXIT_OK


_VIEW_FILE = re.compile(r"view_(\d+)\.pfm$")


def discover_views(directory: str) -> list[tuple[str, Path, Path]]:
    """``(id, estimate, weight)`` triples for every ``view_K.pfm`` with a ``weight_K.pfm``."""
    root = Path(directory)
    if not root.is_dir():
        raise FileNotFoundError(f"views directory {directory} does not exist")
    found = []
    for p in root.iterdir():
        m = _VIEW_FILE.fullmatch(p.name)
        if not m:
            continue
        w = root / f"weight_{m.group(1)}.pfm"
        if not w.exists():
            raise FileNotFoundError(f"{p} has no matching {w.name}")
        found.append((int(m.group(1)), m.group(1), p, w))
    if not found:
        raise InputError(f"no view_K.pfm / weight_K.pfm pairs in {directory}")
    found.sort()
    return [(vid, p, w) for _, vid, p, w in found]


def cmd_integrate(args) -> int:
    man = Manifest("integrate")
    cfg = load_config(args.config, args.ridge)
    d0, phi0 = _read_depth_pair(args.coarse, args.coarse_weight)
    pairs = discover_views(args.views)
    views = []
    for vid, est_path, w_path in pairs:
        est, w = _read_depth_pair(str(est_path), str(w_path))
        if est.shape != d0.shape:
            raise InputError(f"view {vid} is {est.shape}, coarse depth is {d0.shape}")
        try:
            views.append(ViewEstimate(est, w))
        except ValueError as exc:
            raise InputError(f"view {vid}: {exc}") from None
    man.doc["inputs"] = {
        "coarse": args.coarse,
        "coarse_weight": args.coarse_weight,
        "views": [[str(e), str(w)] for _, e, w in pairs],
    }
    man.doc["config"] = cfg.__dict__.copy()
    man.stage("read")
    try:
        result = integrate(d0, phi0, views, cfg)
    except SingularSystemError as exc:
        vid = pairs[exc.view - 1][0] if 1 <= exc.view <= len(pairs) else "?"
        raise SingularSystemError(exc.view, f"{exc} (file id {vid})") from None
    man.stage("integrate")
    write_pfm(args.out, result.depth)
    man.output(args.out)
    report = {
        "loss": result.loss,
        "coefficients": [
            {"view": vid, "scale": c.scale, "offset": c.offset}
            for (vid, _, _), c in zip(pairs, result.coeffs)
        ],
        "config": cfg.__dict__.copy(),
        "unresolved_pixels": int(np.sum(~np.isfinite(result.depth))),
    }
    if args.report:
        _dump_json(args.report, report)
        man.output(args.report)
    man.write(_manifest_path(args.out))
    return EXIT_OK


def cmd_evaluate(args) -> int:
    man = Manifest("evaluate")
    est, gt = _read_depth_pair(args.est, args.gt)
    rep = evaluate(est, gt)
    doc = rep.to_dict()
    man.doc["inputs"] = {"est": args.est, "gt": args.gt}
    if args.report:
        _dump_json(args.report, doc)
        man.output(args.report)
        man.write(_manifest_path(args.report))
    print(json.dumps(doc, sort_keys=True))
    return EXIT_OK


def cmd_export(args) -> int:
    man = Manifest("export")
    rgb = read_png(args.rgb)
    depth = read_pfm(args.depth).astype(np.float64)
    if rgb.shape[:2] != depth.shape:
        raise InputError(f"rgb {rgb.shape[:2]} and depth {depth.shape} differ")
    man.doc["inputs"] = {"rgb": args.rgb, "depth": args.depth}
    try:
        pc = unproject(rgb, depth)
    except ValueError as exc:
        raise InputError(str(exc)) from None
    write_ply(pc, args.ply)
    man.output(args.ply)
    man.doc["point_count"] = len(pc)
    man.stage("ply")
    if args.render:
        cam = load_camera(args.render)
        t = parse_vector(args.translate) if args.translate else np.zeros(3)
        image, zbuf, holes = render_translated(rgb, depth, cam, t)
        prefix = args.render_out or str(Path(args.ply).with_suffix(""))
        write_png(f"{prefix}_render.png", image)
        write_pfm(f"{prefix}_render_depth.pfm", zbuf)
        write_png(f"{prefix}_holes.png", holes.astype(np.uint8) * 255)
        for suffix in ("_render.png", "_render_depth.pfm", "_holes.png"):
            man.output(prefix + suffix)
        man.doc["inputs"].update(camera=args.render, translation=t.tolist())
        man.stage("render")
    man.write(_manifest_path(args.ply))
    return EXIT_OK


def cmd_synth_terrain(args) -> int:
    man = Manifest("synth-terrain")
    with open(args.gmm, encoding="utf-8") as fh:
        spec = parse_gmm(fh.read())
    terrain = synth_terrain_gmm(spec)
    write_pfm(args.out, terrain.heights)
    man.doc["inputs"] = {"gmm": args.gmm}
    man.output(args.out)
    man.write(_manifest_path(args.out))
    return EXIT_OK


def cmd_tangent_views(args) -> int:
    man = Manifest("tangent-views")
    erp = read_png(args.erp).astype(np.float64)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rig = []
    for n, cam in enumerate(tangent_rig(args.size), start=1):
        view = erp_to_perspective(erp, cam)
        path = out / f"view_{n:02d}.png"
        write_png(path, np.clip(np.round(view), 0, 255).astype(np.uint8))
        man.output(path)
        rig.append(
            {
                "view": f"{n:02d}",
                "yaw_deg": math.degrees(cam.yaw),
                "pitch_deg": math.degrees(cam.pitch),
                "hfov_deg": math.degrees(cam.hfov),
                "image_width": cam.width,
                "image_height": cam.height,
            }
        )
    _dump_json(out / "rig.json", rig)
    man.output(out / "rig.json")
    man.doc["inputs"] = {"erp": args.erp}
    man.write(out / "manifest.json")
    return EXIT_OK


def cmd_erp_views(args) -> int:
    """Tangent depth estimates (view_NN.pfm, rig order) to ERP estimate/weight pairs."""
    man = Manifest("erp-views")
    grid = parse_erp_size(args.erp)
    src = Path(args.tangent_dir)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for n, cam in enumerate(tangent_rig(args.size), start=1):
        path = src / f"view_{n:02d}.pfm"
        if not path.exists():
            continue
        depth = read_pfm(path).astype(np.float64)
        if depth.shape != cam.shape:
            cam = CameraSpec(cam.yaw, cam.pitch, cam.hfov, depth.shape[1], depth.shape[0])
        view = tangent_estimate_to_view(depth, cam, grid)
        write_pfm(out / f"view_{n:02d}.pfm", view.estimate)
        write_pfm(out / f"weight_{n:02d}.pfm", view.weight)
        man.output(out / f"view_{n:02d}.pfm")
        man.output(out / f"weight_{n:02d}.pfm")
    if not man.doc["outputs"]:
        raise InputError(f"no view_NN.pfm tangent estimates in {src}")
    man.write(out / "manifest.json")
    return EXIT_OK


def cmd_synth_views(args) -> int:
    """Affine-corrupted per-view estimates of a reference depth, for testing the fusion."""
    man = Manifest("synth-views")
    gt = read_pfm(args.gt).astype(np.float64)
    grid = ErpGrid(*gt.shape)
    rng = np.random.default_rng(args.seed)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    truth = []
    finite = np.isfinite(gt)
    for n, cam in enumerate(tangent_rig(), start=1):
        scale = float(rng.uniform(0.5, 2.0))
        offset = float(rng.uniform(-1.0, 1.0))
        weight = erp_view_weight(cam, grid) * finite
        est = np.where(weight > 0, (np.where(finite, gt, 0.0) - offset) / scale, 0.0)
        if args.noise > 0:
            est = est + np.where(weight > 0, rng.normal(0.0, args.noise, gt.shape), 0.0)
        write_pfm(out / f"view_{n:02d}.pfm", est)
        write_pfm(out / f"weight_{n:02d}.pfm", weight)
        man.output(out / f"view_{n:02d}.pfm")
        man.output(out / f"weight_{n:02d}.pfm")
        truth.append({"view": f"{n:02d}", "scale": scale, "offset": offset})
    _dump_json(out / "truth.json", truth)
    man.doc["inputs"] = {"gt": args.gt, "seed": args.seed, "noise": args.noise}
    man.write(out / "manifest.json")
    return EXIT_OK


# ----------------------------------------------------------------- entry point


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="panoscene", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"panoscene {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("convert-layout", help="rasterize a layout into ERP coarse depth / semantics")
    p.add_argument("--layout", required=True)
    p.add_argument("--erp", default="512x1024", help="ERP size HxW")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--config", help="JSON overriding integration weights")
    p.add_argument("--furnished", action="store_true", help="also write depth with object boxes")
    p.set_defaults(func=cmd_convert_layout)

    p = sub.add_parser("integrate", help="fuse coarse depth with per-view estimates")
    p.add_argument("--coarse", required=True)
    p.add_argument("--coarse-weight", required=True)
    p.add_argument("--views", required=True, help="directory of view_K.pfm + weight_K.pfm")
    p.add_argument("--out", required=True)
    p.add_argument("--report")
    p.add_argument("--config")
    p.add_argument("--ridge", type=float, help="override the relative ridge (0 disables)")
    p.set_defaults(func=cmd_integrate)

    p = sub.add_parser("evaluate", help="RMSE / AbsRel after affine alignment")
    p.add_argument("--est", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--report")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("export", help="point cloud and optional translated render")
    p.add_argument("--rgb", required=True)
    p.add_argument("--depth", required=True)
    p.add_argument("--ply", required=True)
    p.add_argument("--render", help="camera JSON for a perspective render")
    p.add_argument("--translate", help="camera translation x,y,z in meters")
    p.add_argument("--render-out", help="output prefix for render files")
    p.set_defaults(func=cmd_export)

    p = sub.add_parser("synth-terrain", help="mixture-of-Gaussians heightfield")
    p.add_argument("--gmm", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth_terrain)

    p = sub.add_parser("tangent-views", help="extract the 16 tangent views of an ERP image")
    p.add_argument("--erp", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--size", type=int, default=512)
    p.set_defaults(func=cmd_tangent_views)

    p = sub.add_parser("erp-views", help="reproject tangent depth estimates to ERP with weights")
    p.add_argument("--tangent-dir", required=True)
    p.add_argument("--erp", default="512x1024")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--size", type=int, default=512)
    p.set_defaults(func=cmd_erp_views)

    p = sub.add_parser("synth-views", help="affine-corrupted rig estimates of a reference depth")
    p.add_argument("--gt", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--noise", type=float, default=0.0)
    p.set_defaults(func=cmd_synth_views)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except IntegrationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (FormatError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (LayoutError, InputError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
