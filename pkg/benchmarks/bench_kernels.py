"""Time the kernel-backed operations under the numba and numpy backends.

    python3 benchmarks/bench_kernels.py --erp 512x1024 --repeat 3

Each operation runs once untimed per backend (JIT compile / cache load),
then ``--repeat`` times; the best wall time is reported.
"""

from __future__ import annotations

import argparse
import math
import time
from pathlib import Path

import numpy as np

from panoscene import kernels
from panoscene.geometry import CameraSpec, ErpGrid, erp_to_perspective, tangent_rig
from panoscene.integration import ViewEstimate, erp_view_weight, integrate
from panoscene.layout import floorplan_coarse_depth, floorplan_semantic_map, load_layout, terrain_coarse_depth
from panoscene.scene_export import render_translated

FIXTURES = Path(__file__).resolve().parent.parent / "fixtures"


def build_cases(grid: ErpGrid):
    room = load_layout(FIXTURES / "square_room.json")
    terrain = load_layout(FIXTURES / "terrain.json")
    rng = np.random.default_rng(0)
    gt = rng.uniform(1, 10, grid.shape)
    views = []
    for cam in tangent_rig():
        w = erp_view_weight(cam, grid)
        views.append(ViewEstimate(np.where(w > 0, 0.5 * gt + 0.1, 0.0), w))
    rgb = rng.integers(0, 256, grid.shape + (3,), dtype=np.uint8)
    cam = CameraSpec(0.0, 0.0, math.pi / 2, 512, 512)
    depth = np.full(grid.shape, 4.0)
    return {
        "floor plan depth": lambda: floorplan_coarse_depth(room, grid),
        "semantic map": lambda: floorplan_semantic_map(room, grid),
        "terrain depth": lambda: terrain_coarse_depth(terrain, grid),
        "integrate 16 views": lambda: integrate(gt, np.ones(grid.shape), views),
        "erp to perspective": lambda: erp_to_perspective(rgb, cam),
        "render translated": lambda: render_translated(rgb, depth, cam, (0.3, 0.0, 0.2)),
    }


def best_time(fn, repeat: int) -> float:
    fn()
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main(argv=None) -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--erp", default="512x1024")
    parser.add_argument("--repeat", type=int, default=3)
    args = parser.parse_args(argv)
    h, w = (int(v) for v in args.erp.lower().split("x"))
    grid = ErpGrid(h, w)
    cases = build_cases(grid)
    backends = kernels.available_backends()

    results = {}
    for name in backends:
        with kernels.use_backend(name):
            results[name] = {case: best_time(fn, args.repeat) for case, fn in cases.items()}

    print(f"ERP {h}x{w}, best of {args.repeat}")
    header = f"{'operation':<22}" + "".join(f"{b:>12}" for b in backends)
    if {"numba", "numpy"} <= set(backends):
        header += f"{'speedup':>10}"
    print(header)
    for case in cases:
        row = f"{case:<22}" + "".join(f"{results[b][case]:>11.3f}s" for b in backends)
        if {"numba", "numpy"} <= set(backends):
            row += f"{results['numpy'][case] / results['numba'][case]:>9.1f}x"
        print(row)


if __name__ == "__main__":
    main()
