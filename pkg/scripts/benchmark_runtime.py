"""Time M-SRDL on a synthetic cube with the Salinas A footprint (83 x 86 x 224).

The scene is a smooth left-to-right blend of six spectra plus a little
noise, so the graph stays connected under the default parameters.

    python scripts/benchmark_runtime.py [--threads N] [--skip-baseline]
"""

import argparse
import os
import time

import numpy as np

from msrdl.hsi import HsiCube
from msrdl.labeling import SRDLConfig
from msrdl.multiscale import msrdl


def blended_scene(rows=83, cols=86, bands=224, seed=0):
    rng = np.random.default_rng(seed)
    base = rng.random((6, bands))
    base /= np.linalg.norm(base, axis=1, keepdims=True)
    w = np.clip(1 - np.abs(np.arange(cols)[:, None] * 5 / (cols - 1) - np.arange(6)[None, :]), 0, 1)
    vals = np.broadcast_to((w @ base)[None] * 0.02, (rows, cols, bands))
    return HsiCube(vals + 3e-4 * rng.standard_normal((rows, cols, bands)))


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--threads", type=int, default=os.cpu_count() or 1)
    ap.add_argument("--skip-baseline", action="store_true")
    args = ap.parse_args()

    cube = blended_scene()
    print(f"cube {cube.rows}x{cube.cols}x{cube.bands}, threads={args.threads}")
    configs = [("spatial R=12", SRDLConfig())]
    if not args.skip_baseline:
        configs.append(("non-spatial", SRDLConfig().non_spatial()))
    for name, cfg in configs:
        t0 = time.perf_counter()
        res = msrdl(cube, cfg, tau=1e-5, threads=args.threads)
        total = time.perf_counter() - t0
        print(f"{name:>13}: {total:6.1f} s total, {len(res.grid)} scales, "
              f"per-scale {min(res.runtimes_ms) / 1e3:.2f}-{max(res.runtimes_ms) / 1e3:.2f} s, "
              f"K per scale {res.Ks}")


if __name__ == "__main__":
    main()
