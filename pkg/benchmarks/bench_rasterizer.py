"""Rasterizer backend benchmark: compiled extension vs pure-Python kernels.

Times the forward pass and the gradient pass over a grid of primitive
counts and resolutions, reports per-render latency and throughput for
each backend, and cross-checks that both produce bitwise-identical
images before timing anything.

Usage:
    python3 benchmarks/bench_rasterizer.py [--threads N] [--repeats K]
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from textsplat import splat
from textsplat.geometry import CameraPose, intrinsics_from_fov
from textsplat.splat import RenderSettings, rasterize, rasterize_gradients

CASES = [
    # (primitives, width, height, forward repeats)
    (1_000, 176, 128, 20),
    (10_000, 176, 128, 10),
    (10_000, 352, 256, 5),
    (50_000, 704, 512, 2),
]
GRAD_CASES = [
    (1_000, 176, 128, 5),
    (5_000, 176, 128, 3),
]


def make_cloud(n: int, seed: int) -> splat.GaussianCloud:
    rng = np.random.default_rng(seed)
    centers = np.column_stack(
        [rng.uniform(-3, 3, n), rng.uniform(-2, 2, n), rng.uniform(4, 10, n)]
    )
    log_scales = np.log(rng.uniform(0.02, 0.15, (n, 3)))
    q = rng.normal(size=(n, 4))
    q /= np.linalg.norm(q, axis=1, keepdims=True)
    return splat.GaussianCloud(
        centers,
        log_scales,
        q,
        rng.uniform(-1.0, 2.0, n),
        rng.uniform(0.0, 1.0, (n, 3)),
        np.zeros(n, dtype=np.int64),
    )


def time_forward(cloud, pose, intr, repeats: int) -> float:
    settings = RenderSettings()
    rasterize(cloud, pose, intr, settings)  # warm up
    t0 = time.perf_counter()
    for _ in range(repeats):
        rasterize(cloud, pose, intr, settings)
    return (time.perf_counter() - t0) / repeats


def time_gradients(cloud, pose, intr, repeats: int) -> float:
    settings = RenderSettings()
    grads = np.full((intr.height, intr.width, 3), 1e-3)
    rasterize_gradients(cloud, pose, intr, settings, grads)  # warm up
    t0 = time.perf_counter()
    for _ in range(repeats):
        rasterize_gradients(cloud, pose, intr, settings, grads)
    return (time.perf_counter() - t0) / repeats


def check_backends_agree(pose) -> None:
    cloud = make_cloud(500, 3)
    intr = intrinsics_from_fov(55.0, 176, 128)
    images = {}
    for backend in ("python", "compiled"):
        splat.set_backend(backend)
        images[backend] = rasterize(cloud, pose, intr, RenderSettings()).image.values
    gap = float(np.max(np.abs(images["python"] - images["compiled"])))
    if gap >= 1e-12:
        raise SystemExit(f"backend outputs disagree by {gap:.2e}; refusing to benchmark")
    print(f"backend agreement: max pixel gap {gap:.2e} on 500-primitive probe\n")


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--threads", type=int, default=1)
    parser.add_argument("--repeats", type=int, default=1, help="multiplier on per-case repeats")
    args = parser.parse_args()

    if not splat.compiled_available():
        raise SystemExit("compiled extension not built; nothing to compare")
    splat.set_num_threads(args.threads)
    pose = CameraPose(np.eye(3), np.zeros(3))
    check_backends_agree(pose)

    header = f"{'pass':9s} {'prims':>7s} {'size':>9s} {'python':>12s} {'compiled':>12s} {'speedup':>8s}"
    print(header)
    print("-" * len(header))
    for n, w, h, repeats in CASES:
        cloud = make_cloud(n, seed=n)
        intr = intrinsics_from_fov(55.0, w, h)
        times = {}
        for backend in ("python", "compiled"):
            splat.set_backend(backend)
            times[backend] = time_forward(cloud, pose, intr, repeats * args.repeats)
        print(
            f"{'forward':9s} {n:>7d} {f'{w}x{h}':>9s} "
            f"{times['python'] * 1e3:>10.1f}ms {times['compiled'] * 1e3:>10.1f}ms "
            f"{times['python'] / times['compiled']:>7.1f}x"
        )
    for n, w, h, repeats in GRAD_CASES:
        cloud = make_cloud(n, seed=n + 1)
        intr = intrinsics_from_fov(55.0, w, h)
        times = {}
        for backend in ("python", "compiled"):
            splat.set_backend(backend)
            times[backend] = time_gradients(cloud, pose, intr, repeats * args.repeats)
        print(
            f"{'gradient':9s} {n:>7d} {f'{w}x{h}':>9s} "
            f"{times['python'] * 1e3:>10.1f}ms {times['compiled'] * 1e3:>10.1f}ms "
            f"{times['python'] / times['compiled']:>7.1f}x"
        )

    splat.set_backend("compiled")
    cloud = make_cloud(10_000, seed=9)
    intr = intrinsics_from_fov(55.0, 176, 128)
    per = time_forward(cloud, pose, intr, 20 * args.repeats)
    print(f"\ncompiled sustained rate at 176x128 / 10k primitives: {1.0 / per:.1f} renders/s")


if __name__ == "__main__":
    main()
