"""Optimization harnesses: 2D pattern fitting, toy 3D multi-view fitting, kernel study."""
from __future__ import annotations

import csv
import math
import os
import time
from dataclasses import asdict, dataclass, field, replace

import numpy as np
from scipy.spatial import cKDTree

from . import io as lio
from . import rasterizer as rz
from .densify import (DensifySchedule, DensifyThresholds, densify_and_prune, reset_opacity,
                      scene_extent)
from .geometry import Camera, Scene, Scene2D, logit, project_scene
from .gradients import DensifyStats, backward, render_scene
from .kernel import KernelFamily, KernelSpec
from .losses import (AdamState, LossWeights, adam_step, combined_loss, exp_decay,
                     normalize_quats, psnr, ssim)
from .sh import num_coeffs, rgb_to_sh

# 2D rates: means in pixels, log-scales, angle in radians, opacity logit, raw color
LR_2D = {"means": 0.2, "means_final": 0.002, "log_scales": 0.01, "angles": 0.01,
         "opacity_logits": 0.05, "colors": 0.01}
# 3D rates; means are multiplied by the scene extent
LR_3D = {"means": 1.6e-4, "means_final": 1.6e-6, "log_scales": 5e-3, "quats": 1e-3,
         "opacity_logits": 5e-2, "sh": 2.5e-3, "sh_rest_divisor": 20.0}

PRESETS_3D = {
    "7k": {"iterations": 7000},
    "30k-desk": {"iterations": 30000},
}


@dataclass
class TrainConfig:
    iterations: int = 2000
    splat_budget: int = 2000
    kernel: KernelSpec = field(default_factory=KernelSpec)
    ags: bool = True
    ags_scope: str = "kernel-path"
    ags_distance: str = "aligned"
    densify: bool = True
    thresholds: DensifyThresholds = field(default_factory=DensifyThresholds)
    schedule: DensifySchedule = field(default_factory=DensifySchedule)
    loss: LossWeights = field(default_factory=LossWeights)
    seed: int = 0
    snapshot_every: int = 100
    tile_size: int = 16
    dtype: str = "float32"
    deterministic: bool = True
    background: tuple = (0.0, 0.0, 0.0)
    sh_degree: int = 0
    lr: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.iterations <= 0:
            raise ValueError("iterations must be positive")
        if self.splat_budget < 0:
            raise ValueError("splat_budget must be non-negative")
        if self.snapshot_every <= 0:
            raise ValueError("snapshot_every must be positive")
        if self.ags_scope not in rz.AGS_SCOPES:
            raise ValueError(f"ags_scope must be one of {rz.AGS_SCOPES}")
        if self.ags_distance not in rz.AGS_DISTANCES:
            raise ValueError(f"ags_distance must be one of {rz.AGS_DISTANCES}")
        num_coeffs(self.sh_degree)
        self.render_settings()

    def render_settings(self) -> rz.RenderSettings:
        return rz.RenderSettings(tile_size=self.tile_size, background=tuple(self.background),
                                 dtype=self.dtype, deterministic=self.deterministic)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["kernel"] = self.kernel.to_dict()
        d["loss"] = self.loss.to_dict()
        d["background"] = list(self.background)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        d = dict(d)
        kw = {}
        if "kernel" in d:
            k = d.pop("kernel")
            kw["kernel"] = KernelSpec.from_dict(k) if isinstance(k, dict) else KernelSpec.named(k)
        if "loss" in d:
            kw["loss"] = LossWeights.from_dict(d.pop("loss"))
        if "thresholds" in d:
            t = d.pop("thresholds")
            kw["thresholds"] = DensifyThresholds.preset(t) if isinstance(t, str) else DensifyThresholds(**t)
        if "schedule" in d:
            kw["schedule"] = DensifySchedule(**d.pop("schedule"))
        if "background" in d:
            kw["background"] = tuple(d.pop("background"))
        names = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - names
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d, **kw)


@dataclass
class FitResult:
    scene: object
    trace: list
    image: np.ndarray
    psnr: float
    ssim: float
    extra: dict = field(default_factory=dict)


def _smooth_tail(losses: list, window: int = 100) -> float:
    tail = losses[-window:]
    return float(np.mean(tail)) if tail else float("nan")


# ---------------------------------------------------------------------------
# 2D fitting


def init_scene2d(target: np.ndarray, budget: int, rng: np.random.Generator) -> Scene2D:
    """``budget`` splats on a jittered grid, colors sampled from ``target``."""
    H, W = target.shape[:2]
    if budget < 1:
        raise ValueError("splat budget must be at least 1")
    if budget > H * W:
        raise ValueError(f"splat budget {budget} exceeds the {H * W} pixels of the target")
    cell = math.sqrt(H * W / budget)
    gx, gy = math.ceil(W / cell), math.ceil(H / cell)
    cells = rng.permutation(gx * gy)[:budget]
    cx, cy = cells % gx, cells // gx
    jitter = rng.random((budget, 2))
    means = np.stack([(cx + jitter[:, 0]) * W / gx, (cy + jitter[:, 1]) * H / gy], axis=1) - 0.5
    px = np.clip(np.rint(means).astype(int), 0, [W - 1, H - 1])
    colors = target[px[:, 1], px[:, 0], :3].astype(np.float64)
    s = max(H, W) / math.sqrt(budget)
    return Scene2D(means, np.full((budget, 2), math.log(s)), np.zeros(budget),
                   np.full(budget, float(logit(0.1))), colors)


def fit2d(target: np.ndarray, config: TrainConfig, log: lio.JsonlLog | None = None) -> FitResult:
    """Fixed-budget fit of 2D-native splats to ``target`` (H x W x 3 in [0, 1])."""
    target = np.asarray(target, dtype=np.float64)
    if target.ndim == 2:
        target = np.repeat(target[:, :, None], 3, axis=2)
    H, W = target.shape[:2]
    rng = np.random.default_rng(config.seed)
    scene = init_scene2d(target, config.splat_budget, rng)
    settings = config.render_settings()
    lr = {**LR_2D, **config.lr}
    params = scene.param_dict()
    adam = AdamState.create(params, {k: lr[k] for k in params})
    trace, losses = [], []
    for it in range(1, config.iterations + 1):
        out, splats, cache = render_scene(scene, (W, H), config.kernel, settings)
        loss, d_img = combined_loss(out.image, target, config.loss)
        losses.append(loss)
        g = backward(out, d_img, splats, scene, cache, config.kernel, settings,
                     ags=config.ags, ags_scope=config.ags_scope, ags_distance=config.ags_distance)
        means_lr = exp_decay(lr["means"], lr["means_final"], it - 1, config.iterations)
        adam_step(params, g.params, adam, {"means": means_lr})
        if it % config.snapshot_every == 0 or it == config.iterations:
            img = render_scene(scene, (W, H), config.kernel, settings)[0].image
            row = {"step": it, "loss": loss, "loss_smooth": _smooth_tail(losses),
                   "psnr": psnr(img, target), "ssim": ssim(img, target), "splats": len(scene)}
            trace.append(row)
            if log is not None:
                log.write(**row)
    final = render_scene(scene, (W, H), config.kernel, settings)[0].image
    return FitResult(scene, trace, final, psnr(final, target), ssim(final, target),
                     {"losses": losses, "skipped": adam.skipped})


# ---------------------------------------------------------------------------
# 3D fitting


def knn_scales(points: np.ndarray, k: int = 3) -> np.ndarray:
    """Mean distance to the ``k`` nearest neighbours (a small floor keeps logs finite)."""
    n = len(points)
    if n < 2:
        return np.full(n, 0.01)
    kk = min(k, n - 1)
    d, _ = cKDTree(points).query(points, kk + 1)
    return np.maximum(d[:, 1:].mean(axis=1), 1e-7)


def _nearest_image_colors(points, cameras, images) -> np.ndarray:
    """Color of each point in the image of its nearest camera that sees it; gray otherwise."""
    colors = np.full((len(points), 3), 0.5)
    best = np.full(len(points), np.inf)
    for cam, img in zip(cameras, images):
        t = points @ cam.rotation.T + cam.translation
        z = t[:, 2]
        with np.errstate(divide="ignore", invalid="ignore"):
            u = np.rint(cam.fx * t[:, 0] / z + cam.cx)
            v = np.rint(cam.fy * t[:, 1] / z + cam.cy)
        ok = (z > 0.01) & (u >= 0) & (u < cam.width) & (v >= 0) & (v < cam.height) & (z < best)
        idx = np.flatnonzero(ok)
        colors[idx] = img[v[idx].astype(int), u[idx].astype(int), :3]
        best[idx] = z[idx]
    return colors


def init_scene3d(points: np.ndarray, cameras, images, sh_degree: int = 0) -> Scene:
    """Isotropic primitives at ``points``: kNN-3 scales, opacity 0.1, color from the nearest view."""
    points = np.asarray(points, dtype=np.float64)
    n = len(points)
    scales = knn_scales(points)
    k = num_coeffs(sh_degree)
    sh = np.zeros((n, k, 3))
    sh[:, 0, :] = rgb_to_sh(_nearest_image_colors(points, cameras, images) if images else 0.5)
    quats = np.zeros((n, 4))
    quats[:, 0] = 1.0
    return Scene(points.copy(), np.repeat(np.log(scales)[:, None], 3, axis=1), quats,
                 np.full(n, float(logit(0.1))), sh)


def split_holdout(n_cameras: int, every: int = 8) -> tuple[list, list]:
    """Train and held-out camera indices; every ``every``-th camera (from 0) is held out."""
    test = [i for i in range(n_cameras) if i % every == 0] if n_cameras > 1 else []
    train = [i for i in range(n_cameras) if i not in test]
    return train, test


def _lr3d(config: TrainConfig, scene: Scene, extent: float) -> dict:
    lr = {**LR_3D, **config.lr}
    sh_lr = np.full((1, scene.sh.shape[1], 1), lr["sh"] / lr["sh_rest_divisor"])
    sh_lr[:, 0] = lr["sh"]
    return {"means": lr["means"] * extent, "log_scales": lr["log_scales"], "quats": lr["quats"],
            "opacity_logits": lr["opacity_logits"], "sh": sh_lr,
            "_means_final": lr["means_final"] * extent}


def evaluate_views(scene: Scene, cameras, images, spec: KernelSpec, settings) -> dict:
    ps, ss = [], []
    for cam, img in zip(cameras, images):
        out, _, _ = render_scene(scene, cam, spec, settings)
        ps.append(psnr(out.image, img))
        ss.append(ssim(out.image, img) if min(img.shape[:2]) >= 11 else float("nan"))
    return {"psnr": float(np.mean(ps)) if ps else float("nan"),
            "ssim": float(np.mean(ss)) if ss else float("nan")}


def fit3d(manifest: lio.SceneManifest, config: TrainConfig, out_dir: str | None = None,
          log: lio.JsonlLog | None = None, init: Scene | None = None) -> FitResult:
    """Multi-view fit, one training camera per step; every 8th camera is held out.

    ``init`` overrides the seed-point initialization with a ready scene.
    """
    cams, imgs = manifest.cameras, manifest.images
    if len(cams) < 2:
        raise ValueError("3D fitting needs at least 2 cameras")
    if len(imgs) != len(cams):
        raise ValueError("every camera needs a loaded image")
    rng = np.random.default_rng(config.seed)
    train, test = split_holdout(len(cams))
    if init is not None:
        scene = init.astype(np.float64).copy()
    elif manifest.points is not None:
        scene = init_scene3d(manifest.points.means, [cams[i] for i in train],
                             [imgs[i] for i in train], config.sh_degree)
    else:
        if manifest.random_init is None or manifest.random_init <= 0:
            raise ValueError("manifest needs seed points or a positive random_init")
        half = manifest.extent_override or 1.0
        pts = rng.uniform(-half, half, (manifest.random_init, 3))
        scene = init_scene3d(pts, [cams[i] for i in train], [imgs[i] for i in train],
                             config.sh_degree)
    extent = manifest.extent_override or scene_extent(scene.means) or 1.0
    settings = config.render_settings()
    lrs = _lr3d(config, scene, extent)
    means_final = lrs.pop("_means_final")
    adam = AdamState.create(scene.param_dict(), lrs)
    stats = DensifyStats.zeros(len(scene))
    trace, losses, used = [], [], set()
    order: list[int] = []
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
    for it in range(1, config.iterations + 1):
        if not order:
            order = list(rng.permutation(train))
        ci = int(order.pop())
        used.add(ci)
        cam, gt = cams[ci], imgs[ci]
        out, splats, cache = render_scene(scene, cam, config.kernel, settings)
        loss, d_img = combined_loss(out.image, gt, config.loss)
        losses.append(loss)
        g = backward(out, d_img, splats, scene, cache, config.kernel, settings,
                     ags=config.ags, ags_scope=config.ags_scope, ags_distance=config.ags_distance,
                     stats=stats if config.densify else None)
        params = scene.param_dict()
        adam_step(params, g.params, adam,
                  {"means": exp_decay(lrs["means"], means_final, it - 1, config.iterations)})
        normalize_quats(scene.quats)
        sched = config.schedule
        if config.densify and sched.densify_due(it) and it < config.iterations:
            scene, stats, rep = densify_and_prune(scene, stats, config.thresholds, sched, extent,
                                                  rng, adam)
            if log is not None:
                log.write(step=it, event="densify", **rep.to_dict())
        if config.densify and sched.reset_due(it) and it < config.iterations:
            reset_opacity(scene)
            adam.m["opacity_logits"][:] = 0.0
            adam.v["opacity_logits"][:] = 0.0
            if log is not None:
                log.write(step=it, event="opacity_reset", splats=len(scene))
        if it % config.snapshot_every == 0 or it == config.iterations:
            ev = evaluate_views(scene, [cams[i] for i in test], [imgs[i] for i in test],
                                config.kernel, settings)
            row = {"step": it, "loss": loss, "loss_smooth": _smooth_tail(losses),
                   "test_psnr": ev["psnr"], "test_ssim": ev["ssim"], "splats": len(scene)}
            trace.append(row)
            if log is not None:
                log.write(**row)
            if out_dir:
                lio.save_ply(scene, os.path.join(out_dir, f"snapshot_{it:06d}.ply"))
    ev = evaluate_views(scene, [cams[i] for i in test], [imgs[i] for i in test], config.kernel, settings)
    if out_dir:
        lio.save_ply(scene, os.path.join(out_dir, "final.ply"))
    image = render_scene(scene, cams[test[0] if test else train[0]], config.kernel, settings)[0].image
    return FitResult(scene, trace, image, ev["psnr"], ev["ssim"],
                     {"losses": losses, "train_views": sorted(used), "test_views": test,
                      "extent": extent, "skipped": adam.skipped})


# ---------------------------------------------------------------------------
# kernel study


DEFAULT_STUDY_KERNELS = ("gaussian", "laplacian", "cosine", "quadratic", "linear")
DEFAULT_STUDY_PATTERNS = ("stripes8", "checker8", "circles", "testcard")


def kernel_study(patterns, kernels, config: TrainConfig, out_dir: str, size: int = 128,
                 gaussian_ags: bool = False) -> list[dict]:
    """Fit every (pattern, kernel) pair with identical budget and seed.

    Writes ``study.csv`` and one reconstruction PNG per pair into ``out_dir``.
    The Gaussian rows run without AGS unless ``gaussian_ags`` is set, so they
    act as the unmodified baseline.
    """
    from .patterns import generate_pattern

    os.makedirs(out_dir, exist_ok=True)
    rows = []
    for pname in patterns:
        target = generate_pattern(pname, size) if isinstance(pname, str) else pname
        for k in kernels:
            spec = k if isinstance(k, KernelSpec) else KernelSpec.named(k)
            ags = config.ags if (spec.family != KernelFamily.GAUSSIAN or gaussian_ags) else False
            cfg = replace(config, kernel=spec, ags=ags)
            t0 = time.perf_counter()
            res = fit2d(target, cfg)
            secs = time.perf_counter() - t0
            img_name = f"{pname}_{spec.family.cli_name}.png"
            lio.save_png(res.image, os.path.join(out_dir, img_name))
            rows.append({"pattern": pname, "kernel": spec.family.cli_name, "lambda": spec.lam,
                         "ags": ags, "psnr": res.psnr, "ssim": res.ssim,
                         "splats": len(res.scene), "iterations": cfg.iterations,
                         "seconds": round(secs, 2), "image": img_name})
    with open(os.path.join(out_dir, "study.csv"), "w", newline="") as f:
        w = csv.DictWriter(f, fieldnames=list(rows[0]) if rows else ["pattern"])
        w.writeheader()
        w.writerows(rows)
    return rows


# ---------------------------------------------------------------------------
# synthetic 3D fixture


def orbit_cameras(n: int, radius: float, size: int, focal: float | None = None,
                  height: float = 0.3) -> list[Camera]:
    """``n`` cameras on a circle around the origin, all looking at it."""
    from .geometry import look_at

    f = focal or 1.2 * size
    cams = []
    for i in range(n):
        a = 2 * math.pi * i / n
        eye = [radius * math.cos(a), height * radius * (-1) ** i, radius * math.sin(a)]
        cams.append(Camera(look_at(eye, [0.0, 0.0, 0.0]), f, f, (size - 1) / 2, (size - 1) / 2, size, size))
    return cams


def random_scene3d(n: int, rng: np.random.Generator, spread: float = 1.0,
                   scale_range=(0.08, 0.25), sh_degree: int = 0) -> Scene:
    means = rng.uniform(-spread, spread, (n, 3))
    ls = np.log(rng.uniform(*scale_range, (n, 3)))
    q = rng.normal(size=(n, 4))
    q /= np.linalg.norm(q, axis=1, keepdims=True)
    op = logit(rng.uniform(0.5, 0.95, n))
    sh = np.zeros((n, num_coeffs(sh_degree), 3))
    sh[:, 0, :] = rgb_to_sh(rng.uniform(0.1, 0.9, (n, 3)))
    return Scene(means, ls, q, op, sh)


def build_fixture(out_dir: str, n_primitives: int = 50, n_cameras: int = 8, size: int = 64,
                  seed: int = 0, jitter: float = 0.05, kernel: KernelSpec | None = None):
    """Render a random ground-truth scene from an orbit of cameras and write a manifest.

    Seed points are the ground-truth means jittered by ``jitter`` times the
    scene extent. Returns ``(manifest_path, ground_truth_scene)``.
    """
    rng = np.random.default_rng(seed)
    gt = random_scene3d(n_primitives, rng)
    cams = orbit_cameras(n_cameras, 4.0, size)
    spec = kernel or KernelSpec.named("gaussian")
    settings = rz.RenderSettings(dtype="float64")
    os.makedirs(out_dir, exist_ok=True)
    paths = []
    for i, cam in enumerate(cams):
        img = render_scene(gt, cam, spec, settings)[0].image
        name = f"view_{i:02d}.png"
        lio.save_png(img, os.path.join(out_dir, name))
        paths.append(name)
    ext = scene_extent(gt.means)
    seeds = gt.copy()
    seeds.means = gt.means + rng.normal(size=gt.means.shape) * jitter * ext / math.sqrt(3)
    lio.save_ply(seeds, os.path.join(out_dir, "points.ply"), dtype="float64")
    mpath = os.path.join(out_dir, "manifest.json")
    lio.save_manifest(mpath, cams, paths, points="points.ply")
    return mpath, gt


FLAT_LOG_SCALE = math.log(1e-4)


def flatten_scene2d(scene: Scene2D) -> Scene:
    """Embed 2D splats in the z=0 plane (pixel units) so they can be stored as PLY.

    The in-plane angle becomes a rotation about z; the third axis gets a
    negligible scale.
    """
    n = len(scene)
    means = np.zeros((n, 3))
    means[:, :2] = scene.means
    ls = np.full((n, 3), FLAT_LOG_SCALE)
    ls[:, :2] = scene.log_scales
    half = 0.5 * scene.angles.astype(np.float64)
    quats = np.zeros((n, 4))
    quats[:, 0], quats[:, 3] = np.cos(half), np.sin(half)
    sh = rgb_to_sh(np.clip(scene.colors.astype(np.float64), 0.0, 1.0))[:, None, :]
    return Scene(means, ls, quats, scene.opacity_logits.astype(np.float64).copy(), sh)
