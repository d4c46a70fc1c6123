"""Adaptive density control: clone, split, prune and opacity reset.

Screen thresholds are fractions of the image's larger dimension; 3D scale
thresholds are fractions of the scene extent (radius of the bounding sphere
of the initial means).
"""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .geometry import Scene, logit, quat_to_rotmat, sigmoid
from .gradients import DensifyStats
from .losses import AdamState


@dataclass(frozen=True)
class DensifyThresholds:
    grad_threshold: float = 0.0002
    grow_scale2d: float = 0.05
    grow_scale3d: float = 0.006
    prune_scale2d: float = 0.15
    prune_scale3d: float = 0.4
    prune_opacity: float = 0.025

    def __post_init__(self):
        for k, v in asdict(self).items():
            if not v > 0:
                raise ValueError(f"threshold {k} must be positive, got {v}")

    @classmethod
    def preset(cls, name: str) -> "DensifyThresholds":
        try:
            return cls(*PRESETS[name.lower()])
        except KeyError:
            raise ValueError(f"unknown densify preset {name!r}; expected one of {sorted(PRESETS)}") from None

    def as_tuple(self) -> tuple:
        return tuple(asdict(self).values())

    def to_dict(self) -> dict:
        return asdict(self)


# rows: grad, grow 2D, grow 3D, prune 2D, prune 3D, prune opacity
PRESETS = {
    "3dls": (0.0002, 0.05, 0.006, 0.15, 0.4, 0.025),
    "3dgs": (0.0002, 0.05, 0.01, 0.15, 0.1, 0.005),
}


@dataclass(frozen=True)
class DensifySchedule:
    start_iter: int = 500
    stop_iter: int = 15000
    interval: int = 100
    opacity_reset_interval: int = 3000
    split_count: int = 2
    split_scale_divisor: float = 1.6

    def __post_init__(self):
        if not 0 <= self.start_iter < self.stop_iter:
            raise ValueError("densify start_iter must be below stop_iter")
        if self.interval <= 0 or self.opacity_reset_interval <= 0:
            raise ValueError("densify intervals must be positive")
        if self.split_count < 1 or not self.split_scale_divisor > 0:
            raise ValueError("split_count >= 1 and split_scale_divisor > 0 required")

    def densify_due(self, step: int) -> bool:
        return self.start_iter <= step <= self.stop_iter and step % self.interval == 0

    def reset_due(self, step: int) -> bool:
        return 0 < step <= self.stop_iter and step % self.opacity_reset_interval == 0

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class DensifyReport:
    clones: int = 0
    splits: int = 0
    prunes: int = 0
    before: int = 0
    after: int = 0

    def to_dict(self) -> dict:
        return asdict(self)


def _sample_children(scene: Scene, idx: np.ndarray, count: int, rng: np.random.Generator) -> np.ndarray:
    """Child means drawn from N(parent mean, parent covariance)."""
    rot = quat_to_rotmat(scene.quats[idx])
    scales = np.exp(scene.log_scales[idx].astype(np.float64))
    z = rng.standard_normal((count, len(idx), 3))
    offs = np.einsum("nij,knj->kni", rot, z * scales[None])
    return (scene.means[idx][None] + offs).reshape(-1, 3)


def densify_and_prune(scene: Scene, stats: DensifyStats, thresholds: DensifyThresholds,
                      schedule: DensifySchedule, scene_extent: float,
                      rng: np.random.Generator, adam: AdamState | None = None):
    """Clone or split high-gradient primitives, then prune.

    Returns ``(scene, stats, report)``; the returned stats are zeroed and
    sized to the new scene. Adam moments are reindexed in place when given
    (new primitives start with zero moments).
    """
    n = len(scene)
    report = DensifyReport(before=n)
    if n == 0:
        return scene, DensifyStats.zeros(0), report
    th = thresholds
    grad = stats.mean_grad()
    hot = grad > th.grad_threshold
    max_scale = np.exp(scene.log_scales.astype(np.float64)).max(axis=1)
    big = (max_scale > th.grow_scale3d * scene_extent) | (stats.max_radius_frac > th.grow_scale2d)
    split = hot & big
    clone = hot & ~big
    report.clones, report.splits = int(clone.sum()), int(split.sum())

    keep = np.flatnonzero(~split)
    cl = np.flatnonzero(clone)
    sp = np.flatnonzero(split)
    k = schedule.split_count
    parts = [scene.select(keep), scene.select(cl)]
    if len(sp):
        children = scene.select(np.tile(sp, k))
        children.means = _sample_children(scene, sp, k, rng).astype(scene.means.dtype)
        children.log_scales = np.log(np.exp(children.log_scales) / schedule.split_scale_divisor)
        parts.append(children)
    grown = Scene.concat(parts)
    src = np.concatenate([keep, -np.ones(len(cl) + k * len(sp), dtype=np.int64)])
    # screen size is only known for primitives that carried statistics
    frac = np.concatenate([stats.max_radius_frac[keep], np.zeros(len(grown) - len(keep))])

    opac = sigmoid(grown.opacity_logits.astype(np.float64))
    gmax = np.exp(grown.log_scales.astype(np.float64)).max(axis=1)
    prune = ((opac < th.prune_opacity) | (gmax > th.prune_scale3d * scene_extent)
             | (frac > th.prune_scale2d))
    survivors = np.flatnonzero(~prune)
    report.prunes = int(prune.sum())
    out = grown.select(survivors)
    if adam is not None:
        adam.remap(src[survivors])
    report.after = len(out)
    return out, DensifyStats.zeros(len(out)), report


def reset_opacity(scene: Scene, ceiling: float = 0.01) -> None:
    """Clamp every opacity to at most ``ceiling`` (in place, via the logit)."""
    cap = logit(ceiling)
    np.minimum(scene.opacity_logits, cap, out=scene.opacity_logits)


def scene_extent(means: np.ndarray) -> float:
    """Radius of the bounding sphere of ``means`` about their centroid."""
    means = np.asarray(means, dtype=np.float64)
    if len(means) == 0:
        return 0.0
    return float(np.linalg.norm(means - means.mean(axis=0), axis=1).max())
