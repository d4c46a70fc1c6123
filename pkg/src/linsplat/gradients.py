"""Backward pass from image gradients to primitive parameters.

The screen-space part lives in :func:`rasterizer.rasterize_backward`; this
module chains it through projection and covariance construction, keeps the
densification statistics, and hosts the gradient verification tools.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import rasterizer as rz
from .geometry import (Camera, Scene, Scene2D, Splat2D, Splats2D, project_scene,
                       project_scene2d, project_scene2d_vjp, project_scene_vjp)
from .kernel import KernelFamily, KernelSpec, support_radius


@dataclass
class PrimitiveGrads:
    """Per-primitive gradients for one view.

    ``params`` is keyed like the scene's ``param_dict``. ``d_means2d`` is the
    screen-space mean gradient in pixels, ``d_opacity`` the gradient w.r.t.
    the opacity value before the logit chain.
    """

    params: dict[str, np.ndarray]
    d_means2d: np.ndarray
    d_opacity: np.ndarray
    d_colors: np.ndarray
    visible: np.ndarray

    def __getitem__(self, name: str) -> np.ndarray:
        return self.params[name]

    def all_finite(self) -> bool:
        return all(np.all(np.isfinite(v)) for v in self.params.values())


@dataclass
class DensifyStats:
    """Running screen-space gradient statistics between densification steps.

    Gradient norms are taken in normalized device units (pixels scaled by
    half the image size) so thresholds are resolution independent.
    """

    accum_grad_norm2d: np.ndarray
    accum_count: np.ndarray
    max_radius_frac: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.max_radius_frac is None:
            self.max_radius_frac = np.zeros_like(self.accum_grad_norm2d)

    @classmethod
    def zeros(cls, n: int) -> "DensifyStats":
        return cls(np.zeros(n), np.zeros(n, dtype=np.int64), np.zeros(n))

    def __len__(self) -> int:
        return len(self.accum_grad_norm2d)

    def accumulate(self, grads: PrimitiveGrads, radii: np.ndarray, width: int, height: int) -> None:
        vis = grads.visible
        g = grads.d_means2d * np.array([0.5 * width, 0.5 * height])
        self.accum_grad_norm2d[vis] += np.linalg.norm(g[vis], axis=-1)
        self.accum_count[vis] += 1
        frac = np.asarray(radii) / max(width, height)
        self.max_radius_frac[vis] = np.maximum(self.max_radius_frac[vis], frac[vis])

    def mean_grad(self) -> np.ndarray:
        return self.accum_grad_norm2d / np.maximum(self.accum_count, 1)

    def reset(self) -> None:
        self.accum_grad_norm2d[:] = 0.0
        self.accum_count[:] = 0
        self.max_radius_frac[:] = 0.0

    def select(self, idx) -> "DensifyStats":
        return DensifyStats(self.accum_grad_norm2d[idx], self.accum_count[idx], self.max_radius_frac[idx])


def backward(output: rz.RenderOutput, d_image: np.ndarray, splats: Splats2D, scene, cache,
             spec: KernelSpec, settings: rz.RenderSettings, ags: bool = False,
             ags_scope: str = "kernel-path", stats: DensifyStats | None = None,
             ags_distance: str = "aligned") -> PrimitiveGrads:
    """Gradients of a loss w.r.t. every primitive parameter given ``dL/dimage``.

    ``scene``/``cache`` come from :func:`project_scene` (3D) or
    :func:`project_scene2d` (2D). When ``stats`` is given the screen-space
    mean gradients of visible primitives are accumulated into it.
    """
    g2 = rz.rasterize_backward(output, d_image, splats, spec, settings, ags, ags_scope, ags_distance)
    d_means2d = g2[:, rz.G_MEAN_X:rz.G_MEAN_Y + 1]
    d_conics = g2[:, rz.G_CONIC_A:rz.G_CONIC_C + 1]
    d_opacity = g2[:, rz.G_OPACITY]
    d_colors = g2[:, rz.G_R:rz.G_B + 1]
    if isinstance(scene, Scene2D):
        params = project_scene2d_vjp(scene, cache, d_means2d, d_conics, d_colors, d_opacity)
        visible = cache["visible"]
    else:
        params = project_scene_vjp(scene, cache, d_means2d, d_conics, d_colors, d_opacity)
        visible = cache.visible
    grads = PrimitiveGrads(params, d_means2d * visible[:, None], d_opacity * visible,
                           d_colors * visible[:, None], visible)
    if stats is not None:
        H, W = output.final_transmittance.shape
        stats.accumulate(grads, splats.radii, W, H)
    return grads


# ---------------------------------------------------------------------------
# render helpers shared by tools and trainer


def render_scene(scene, camera_or_size, spec: KernelSpec, settings: rz.RenderSettings):
    """Project and rasterize; returns ``(output, splats, cache)``.

    ``camera_or_size`` is a :class:`Camera` for 3D scenes or ``(width, height)``
    for :class:`Scene2D`.
    """
    if isinstance(scene, Scene2D):
        width, height = camera_or_size
        splats, cache = project_scene2d(scene, width, height, spec)
    else:
        cam: Camera = camera_or_size
        width, height = cam.width, cam.height
        splats, cache = project_scene(scene, cam, spec)
    out = rz.rasterize(splats, spec, settings, width, height)
    return out, splats, cache


# ---------------------------------------------------------------------------
# AGS contract


def _splat_distance(conic, mean2d, x, y) -> float:
    # same operation order as the rasterizer kernels
    dx = float(x) - float(mean2d[0])
    dy = float(y) - float(mean2d[1])
    q = conic[0] * dx * dx + 2.0 * conic[1] * dx * dy + conic[2] * dy * dy
    return math.sqrt(max(q, 0.0))


@dataclass
class AgsPixelReport:
    x: int
    y: int
    distance: float
    off: np.ndarray   # kernel-path gradient row with AGS off (mean x/y, conic a/b/c)
    on: np.ndarray
    exact: bool

    @property
    def ratio(self) -> float:
        nz = self.off != 0
        if not nz.any():
            return float("nan")
        return float(np.mean(self.on[nz] / self.off[nz]))


@dataclass
class AgsReport:
    pixels: list[AgsPixelReport]
    outside_zero: bool

    @property
    def passed(self) -> bool:
        return self.outside_zero and all(p.exact for p in self.pixels)


def verify_ags_contract(splat: Splat2D, spec: KernelSpec, width: int, height: int,
                        settings: rz.RenderSettings | None = None,
                        pixels: list[tuple[int, int]] | None = None,
                        ags_distance: str = "aligned") -> AgsReport:
    """Check per pixel that AGS multiplies the kernel-path gradient by ``exp(-d**2)``.

    ``d`` is the kernel-space distance ``D / lam`` (or the raw ``D`` when
    ``ags_distance="raw"``); the report records it per pixel.

    Each pixel is isolated with a one-hot image gradient. ``pixels`` defaults
    to every pixel of the image; pixels beyond the support must get zero
    gradient both with and without AGS.
    """
    settings = settings or rz.RenderSettings(dtype="float64")
    if settings.dtype != "float64":
        raise ValueError("the AGS contract is checked on the float64 path")
    splats = Splats2D.from_list([splat])
    out = rz.rasterize(splats, spec, settings, width, height)
    kcols = slice(rz.G_MEAN_X, rz.G_CONIC_C + 1)
    if pixels is None:
        pixels = [(x, y) for y in range(height) for x in range(width)]
    reports, outside_zero = [], True
    R = support_radius(spec)
    for x, y in pixels:
        d_image = np.zeros((height, width, 3))
        d_image[y, x] = 1.0
        off = rz.rasterize_backward(out, d_image, splats, spec, settings, ags=False)[0, kcols]
        on = rz.rasterize_backward(out, d_image, splats, spec, settings, ags=True,
                                   ags_distance=ags_distance)[0, kcols]
        D = _splat_distance(splats.conics[0], splats.means2d[0], x, y)
        if D > R or out.contributor_count[y, x] == 0:
            outside_zero &= bool(np.all(off == 0) and np.all(on == 0))
            continue
        d = D / spec.lam if ags_distance == "aligned" else D
        omega = math.exp(-d * d)
        reports.append(AgsPixelReport(x, y, d, off, on, bool(np.all(on == off * omega))))
    return AgsReport(reports, outside_zero)


# ---------------------------------------------------------------------------
# finite-difference gradient check


@dataclass
class GradCheckRow:
    group: str
    n_params: int
    max_rel_err: float
    n_failed: int

    @property
    def passed(self) -> bool:
        return self.n_failed == 0


def smooth_check_settings(tile_size: int = 16) -> rz.RenderSettings:
    """Float64 settings whose blending guards never trip on check scenes.

    The alpha skip threshold and transmittance early-out are discontinuities
    that central differences cannot see through; they are set far below any
    value reached by the random check scenes.
    """
    return rz.RenderSettings(tile_size=tile_size, alpha_min=1e-12, alpha_max=0.99,
                             transmittance_floor=1e-12, dtype="float64")


def kink_margin(splats: Splats2D, spec: KernelSpec, width: int, height: int) -> float:
    """Smallest distance (Mahalanobis units) from any pixel center to a kernel kink.

    Kinks are the support rim (bounded kernels and the truncation of unbounded
    ones) and the cone tip ``D = 0`` of the Linear and Laplacian kernels.
    Finite differences with a step that moves ``D`` by less than this margin
    never straddle a kink.
    """
    R = support_radius(spec)
    cone = spec.family in (KernelFamily.LINEAR, KernelFamily.LAPLACIAN)
    ys, xs = np.mgrid[0:height, 0:width].astype(np.float64)
    margin = np.inf
    for i in np.flatnonzero(splats.visible):
        a, b, c = splats.conics[i]
        dx = xs - splats.means2d[i, 0]
        dy = ys - splats.means2d[i, 1]
        D = np.sqrt(np.maximum(a * dx * dx + 2 * b * dx * dy + c * dy * dy, 0.0))
        margin = min(margin, float(np.abs(D - R).min()))
        if cone:
            margin = min(margin, float(D.min()))
    return margin


def gradient_check(scene, camera_or_size, spec: KernelSpec, d_image: np.ndarray,
                   settings: rz.RenderSettings | None = None, h: float = 1e-3,
                   rtol: float = 1e-3, atol: float = 1e-6, small: float = 1e-3,
                   stencil: int = 5) -> list[GradCheckRow]:
    """Compare analytic gradients of ``L = sum(d_image * image)`` with central differences.

    ``stencil`` selects the 3-point or 5-point central difference with step
    ``h``. A parameter passes when ``|a - f| <= rtol * max(|a|, |f|)``, or,
    when both magnitudes are below ``small``, when ``|a - f| <= atol``.
    """
    if stencil not in (3, 5):
        raise ValueError("stencil must be 3 or 5")
    settings = settings or smooth_check_settings()
    scene = scene.copy()
    out, splats, cache = render_scene(scene, camera_or_size, spec, settings)
    grads = backward(out, d_image, splats, scene, cache, spec, settings, ags=False)

    def loss() -> float:
        o, _, _ = render_scene(scene, camera_or_size, spec, settings)
        return float(np.sum(o.image * d_image))

    rows = []
    for name, value in scene.param_dict().items():
        analytic = grads.params[name].reshape(-1)
        flat = value.reshape(-1)
        errs, failed = [], 0
        for i in range(flat.size):
            orig = flat[i]
            vals = {}
            for step in ((-2, -1, 1, 2) if stencil == 5 else (-1, 1)):
                flat[i] = orig + step * h
                vals[step] = loss()
            flat[i] = orig
            if stencil == 5:
                fd = (vals[-2] - 8 * vals[-1] + 8 * vals[1] - vals[2]) / (12 * h)
            else:
                fd = (vals[1] - vals[-1]) / (2 * h)
            a = analytic[i]
            mag = max(abs(a), abs(fd))
            err = abs(a - fd)
            ok = err <= atol if mag < small else err <= rtol * mag
            failed += not ok
            errs.append(err / mag if mag > 0 else 0.0)
        rows.append(GradCheckRow(name, flat.size, max(errs, default=0.0), failed))
    return rows


def check_camera(size: int = 32) -> Camera:
    """Camera used by the random gradient-check scenes."""
    from .geometry import look_at

    f = 40.0 * size / 32
    return Camera(look_at([0.6, -0.4, -6.0], [0.0, 0.0, 0.0]), f, f, size / 2, size / 2, size, size)


def random_check_scene(rng: np.random.Generator, camera: Camera, spec: KernelSpec, n: int = 16,
                       sh_degree: int = 1, depth_gap: float = 0.04, margin: float = 0.0,
                       max_tries: int = 1000) -> Scene:
    """Random scene for finite-difference checks, rejecting degenerate draws.

    Draws whose camera depths are closer than ``depth_gap`` (an order swap
    under a small step) or whose pixels lie within ``margin`` of a kernel
    kink (see :func:`kink_margin`) are redrawn.
    """
    from .geometry import logit
    from .sh import num_coeffs, rgb_to_sh

    k = num_coeffs(sh_degree)
    for _ in range(max_tries):
        means = rng.uniform(-1.2, 1.2, (n, 3))
        depth = (means @ camera.rotation.T + camera.translation)[:, 2]
        if n > 1 and np.min(np.diff(np.sort(depth))) < depth_gap:
            continue
        q = rng.normal(size=(n, 4))
        q /= np.linalg.norm(q, axis=1, keepdims=True)
        sh = np.zeros((n, k, 3))
        sh[:, 0, :] = rgb_to_sh(rng.uniform(0.2, 0.8, (n, 3)))
        sh[:, 1:, :] = rng.normal(scale=0.05, size=(n, k - 1, 3))
        scene = Scene(means, np.log(rng.uniform(0.24, 0.7, (n, 3))), q,
                      logit(rng.uniform(0.3, 0.9, n)), sh)
        if margin > 0:
            splats, _ = project_scene(scene, camera, spec)
            if kink_margin(splats, spec, camera.width, camera.height) < margin:
                continue
        return scene
    raise RuntimeError("could not draw a non-degenerate check scene")


def gradient_suite(kernel: str = "gaussian", n_scenes: int = 20, n_splats: int = 16,
                   seed: int = 0, size: int = 32) -> tuple[list[GradCheckRow], dict]:
    """Finite-difference check over random scenes, aggregated per parameter group.

    The smooth Gaussian is checked at ``h=1e-3`` with its truncation pushed to
    8 units. Kernels with kinks are checked at ``h=1e-6`` on scenes whose
    pixels all stay at least ``1e-4`` units away from a kink.
    Returns ``(rows, protocol)``.
    """
    family = KernelFamily.parse(kernel)
    if family == KernelFamily.GAUSSIAN:
        spec, h, margin = KernelSpec(family, gaussian_cutoff=8.0), 1e-3, 0.0
    else:
        spec, h, margin = KernelSpec(family), 1e-6, 1e-4
    cam = check_camera(size)
    total: dict[str, GradCheckRow] = {}
    for s in range(seed, seed + n_scenes):
        rng = np.random.default_rng(s)
        scene = random_check_scene(rng, cam, spec, n_splats, margin=margin)
        d_image = rng.normal(size=(size, size, 3))
        for r in gradient_check(scene, cam, spec, d_image, h=h):
            t = total.get(r.group)
            total[r.group] = r if t is None else GradCheckRow(
                r.group, t.n_params + r.n_params, max(t.max_rel_err, r.max_rel_err),
                t.n_failed + r.n_failed)
    protocol = {"kernel": spec.to_dict(), "h": h, "kink_margin": margin, "scenes": n_scenes,
                "splats": n_splats, "size": size, "seed": seed, "stencil": 5}
    return list(total.values()), protocol
