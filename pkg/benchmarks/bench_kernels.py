"""Benchmark the compiled raycast kernel against the pure-numpy fallback.

Usage: python3 benchmarks/bench_kernels.py [--beams N] [--casts N]
"""

import argparse
import math
import time

import numpy as np

from rpl_racer import kernels
from rpl_racer.grid import OccupancyGrid
from rpl_racer.lidar import LidarConfig, scan


def build_scene(seed=0):
    rng = np.random.default_rng(seed)
    occ = (rng.random((400, 400)) < 0.05).astype(np.uint8)
    occ[:2, :] = occ[-2:, :] = occ[:, :2] = occ[:, -2:] = 1
    return OccupancyGrid(occupied=occ, resolution=0.05)


def bench(cast, grid, cfg, poses, repeats):
    # warmup + correctness reference capture
    out = scan(grid, poses[0], cfg, cast=cast).ranges
    t0 = time.perf_counter()
    for _ in range(repeats):
        for pose in poses:
            scan(grid, pose, cfg, cast=cast)
    dt = time.perf_counter() - t0
    return dt / (repeats * len(poses)), out


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--beams", type=int, default=1080)
    ap.add_argument("--casts", type=int, default=20,
                    help="poses per timed repetition")
    ap.add_argument("--repeats", type=int, default=5)
    args = ap.parse_args()

    grid = build_scene()
    cfg = LidarConfig(n_beams=args.beams, max_range=15.0)
    rng = np.random.default_rng(1)
    poses = [(float(rng.uniform(2, 18)), float(rng.uniform(2, 18)),
              float(rng.uniform(-math.pi, math.pi)))
             for _ in range(args.casts)]

    results = {}
    outputs = {}
    backends = [("pure", kernels.pure.cast_rays)]
    if kernels.BACKEND == "compiled":
        backends.append(("compiled", kernels.cast_rays))
    for name, cast in backends:
        per_scan, out = bench(cast, grid, cfg, poses, args.repeats)
        results[name] = per_scan
        outputs[name] = out
        print(f"{name:>9}: {per_scan * 1e3:8.3f} ms / scan "
              f"({args.beams} beams)")

    if len(results) == 2:
        if np.array_equal(outputs["pure"], outputs["compiled"]):
            print("outputs: bit-identical")
        else:
            print("outputs: MISMATCH")
        print(f"speedup: {results['pure'] / results['compiled']:.1f}x")
    else:
        print("compiled backend unavailable; benchmarked the fallback only")


if __name__ == "__main__":
    main()
