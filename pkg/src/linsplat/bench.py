"""Forward/backward wall-time benchmark on a seeded random scene."""
from __future__ import annotations

import time

import numpy as np

from . import rasterizer as rz
from .geometry import Camera, Scene, look_at, logit
from .gradients import backward, render_scene
from .kernel import KernelSpec
from .sh import rgb_to_sh


def bench_scene(n: int, seed: int = 0) -> Scene:
    """``n`` small primitives filling a unit ball, seen by :func:`bench_camera`."""
    rng = np.random.default_rng(seed)
    d = rng.normal(size=(n, 3))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    means = d * rng.random(n)[:, None] ** (1 / 3)
    q = rng.normal(size=(n, 4))
    q /= np.linalg.norm(q, axis=1, keepdims=True)
    sh = rgb_to_sh(rng.uniform(0.1, 0.9, (n, 3)))[:, None, :]
    return Scene(means, np.log(rng.uniform(0.005, 0.02, (n, 3))), q,
                 logit(rng.uniform(0.2, 0.9, n)), sh)


def bench_camera(size: int = 256) -> Camera:
    f = 1.5 * size
    return Camera(look_at([0.0, 0.0, -3.5], [0.0, 0.0, 0.0]), f, f, size / 2, size / 2, size, size)


def _median_time(fn, repeats: int) -> float:
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return float(np.median(times))


def run_bench(n_splats: int = 100_000, kernels=("gaussian", "linear"), size: int = 256,
              repeats: int = 5, seed: int = 0, settings: rz.RenderSettings | None = None) -> list[dict]:
    """Median forward (project + rasterize) and backward times per kernel.

    Each kernel is warmed up once first so compilation is not timed.
    """
    settings = settings or rz.RenderSettings()
    scene = bench_scene(n_splats, seed)
    cam = bench_camera(size)
    d_image = np.random.default_rng(seed).normal(size=(size, size, 3)) * 1e-3
    rows = []
    for k in kernels:
        spec = k if isinstance(k, KernelSpec) else KernelSpec.named(k)
        out, splats, cache = render_scene(scene, cam, spec, settings)
        backward(out, d_image, splats, scene, cache, spec, settings)
        fwd = _median_time(lambda: render_scene(scene, cam, spec, settings), repeats)
        bwd = _median_time(lambda: backward(out, d_image, splats, scene, cache, spec, settings), repeats)
        rows.append({"kernel": spec.family.cli_name, "lambda": spec.lam, "splats": n_splats,
                     "size": size, "tile_entries": int(len(out.bins.entries)),
                     "forward_s": fwd, "backward_s": bwd, "fps_forward": 1.0 / fwd})
    return rows
