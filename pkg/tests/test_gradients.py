import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from linsplat import rasterizer as rz
from linsplat.geometry import Scene2D, Splat2D, Splats2D, logit
from linsplat.gradients import (DensifyStats, backward, check_camera, gradient_check, kink_margin,
                                random_check_scene, render_scene, smooth_check_settings,
                                verify_ags_contract)
from linsplat.kernel import KernelFamily, KernelSpec
from linsplat.losses import combined_loss

F64 = rz.RenderSettings(dtype="float64")
ALL = ["gaussian", "laplacian", "cosine", "quadratic", "linear"]


def center_splat(opacity=0.6, color=(0.7, 0.2, 0.4), conic=(0.2, 0.05, 0.3), radius=8.0):
    return Splat2D(np.array([8.0, 8.0]), np.array(conic), 1.0, radius, np.array(color), opacity)


def small_scene(seed, n=4, size=16, spec=None):
    spec = spec or KernelSpec.named("gaussian", gaussian_cutoff=8.0)
    cam = check_camera(size)
    return random_check_scene(np.random.default_rng(seed), cam, spec, n, sh_degree=1), cam, spec


def test_zero_image_gradient_gives_zero():
    scene, cam, spec = small_scene(0)
    out, splats, cache = render_scene(scene, cam, spec, F64)
    g = backward(out, np.zeros(out.image.shape), splats, scene, cache, spec, F64, ags=True)
    for v in g.params.values():
        assert np.all(v == 0)


def test_single_center_splat_hand_derivative():
    spec = KernelSpec.named("linear")
    s = Splats2D.from_list([center_splat()])
    out = rz.rasterize(s, spec, F64, 16, 16)
    d = np.zeros((16, 16, 3))
    d[8, 8, 0] = 1.0
    g = rz.rasterize_backward(out, d, s, spec, F64)[0]
    assert g[rz.G_OPACITY] == pytest.approx(0.7)
    assert g[rz.G_R] == pytest.approx(0.6)
    assert g[rz.G_G] == 0.0 and g[rz.G_B] == 0.0


def test_four_splat_scene_matches_finite_differences():
    for seed in range(3):
        scene, cam, spec = small_scene(seed)
        d_img = np.random.default_rng(seed).normal(size=(16, 16, 3))
        rows = gradient_check(scene, cam, spec, d_img, h=1e-3)
        assert all(r.passed for r in rows), rows


def test_2d_scene_matches_finite_differences():
    rng = np.random.default_rng(3)
    n, size = 6, 20
    scene = Scene2D(rng.uniform(3, 17, (n, 2)), np.log(rng.uniform(1.5, 4, (n, 2))),
                    rng.uniform(-1, 1, n), logit(rng.uniform(0.3, 0.8, n)), rng.uniform(0.1, 0.9, (n, 3)))
    spec = KernelSpec.named("gaussian", gaussian_cutoff=8.0)
    rows = gradient_check(scene, (size, size), spec, rng.normal(size=(size, size, 3)), h=1e-3)
    assert {r.group for r in rows} == {"means", "log_scales", "angles", "opacity_logits", "colors"}
    assert all(r.passed for r in rows), rows


@pytest.mark.parametrize("name", ["linear", "quadratic", "cosine", "laplacian"])
def test_kinked_kernels_match_with_small_step(name):
    spec = KernelSpec.named(name)
    cam = check_camera(16)
    rng = np.random.default_rng(5)
    scene = random_check_scene(rng, cam, spec, 3, margin=1e-4)
    rows = gradient_check(scene, cam, spec, rng.normal(size=(16, 16, 3)), h=1e-6)
    assert all(r.passed for r in rows), rows


def test_kink_margin_detects_rim_pixel():
    spec = KernelSpec.named("linear")
    s = Splats2D.from_list([Splat2D(np.array([4.0, 4.0]), np.array([1.0, 0, 1.0]), 1.0, 2.5,
                                    np.ones(3), 0.5)])
    assert kink_margin(s, spec, 10, 10) == 0.0  # the mean sits exactly on a pixel center (cone tip)
    s.means2d[:] = [4.3, 4.1]
    assert 0 < kink_margin(s, spec, 10, 10) < 0.5


@pytest.mark.parametrize("name", ALL)
@pytest.mark.parametrize("distance", ["aligned", "raw"])
def test_ags_contract_all_pixels(name, distance):
    rep = verify_ags_contract(center_splat(), KernelSpec.named(name), 16, 16, ags_distance=distance)
    assert rep.passed
    assert len(rep.pixels) > 10


def test_ags_contract_reference_ratios():
    spec = KernelSpec.named("gaussian")
    rep = verify_ags_contract(center_splat(conic=(1.0, 0.0, 1.0), radius=3.0), spec, 16, 16,
                              pixels=[(9, 8), (15, 8), (0, 0)])
    at_one = rep.pixels[0]
    assert at_one.distance == 1.0
    assert at_one.ratio == pytest.approx(math.exp(-1.0), rel=1e-12)
    assert rep.outside_zero
    # the splat center: D = 0 gives a zero mean gradient but weight exactly 1 on the conic terms
    rep0 = verify_ags_contract(center_splat(), spec, 16, 16, pixels=[(8, 8)])
    assert rep0.pixels[0].exact and rep0.pixels[0].distance == 0.0


def test_ags_all_paths_scales_color_and_opacity():
    spec = KernelSpec.named("linear")
    s = Splats2D.from_list([center_splat()])
    out = rz.rasterize(s, spec, F64, 16, 16)
    d = np.zeros((16, 16, 3))
    d[9, 10] = 1.0
    off = rz.rasterize_backward(out, d, s, spec, F64)[0]
    kp = rz.rasterize_backward(out, d, s, spec, F64, ags=True)[0]
    ap = rz.rasterize_backward(out, d, s, spec, F64, ags=True, ags_scope="all-paths")[0]
    assert np.array_equal(kp[rz.G_OPACITY:], off[rz.G_OPACITY:])
    ratio = ap[rz.G_R] / off[rz.G_R]
    assert 0 < ratio < 1
    assert ap[rz.G_OPACITY] == pytest.approx(off[rz.G_OPACITY] * ratio, rel=1e-12)


@given(st.sampled_from(ALL), st.integers(0, 15), st.integers(0, 15))
def test_ags_damps_every_pixel_term(name, x, y):
    spec = KernelSpec.named(name)
    s = Splats2D.from_list([center_splat()])
    out = rz.rasterize(s, spec, F64, 16, 16)
    d = np.zeros((16, 16, 3))
    d[y, x] = [1.0, -0.5, 0.3]
    off = rz.rasterize_backward(out, d, s, spec, F64)[0, :2]
    on = rz.rasterize_backward(out, d, s, spec, F64, ags=True)[0, :2]
    assert np.linalg.norm(on) <= np.linalg.norm(off)


def test_zero_loss_fixpoint():
    scene, cam, spec = small_scene(1, n=6, size=24)
    settings = rz.RenderSettings(dtype="float64")
    out, splats, cache = render_scene(scene, cam, spec, settings)
    _, d_img = combined_loss(out.image, out.image.copy())
    g = backward(out, d_img, splats, scene, cache, spec, settings, ags=True)
    for v in g.params.values():
        assert np.max(np.abs(v)) <= 1e-7


def test_densify_statistic_matches_scalar_recomputation():
    scene, cam, spec = small_scene(2, n=8, size=24)
    stats = DensifyStats.zeros(len(scene))
    rng = np.random.default_rng(0)
    expected = np.zeros(len(scene))
    counts = np.zeros(len(scene), dtype=int)
    for _ in range(3):
        out, splats, cache = render_scene(scene, cam, spec, F64)
        g = backward(out, rng.normal(size=out.image.shape), splats, scene, cache, spec, F64,
                     stats=stats)
        for i in range(len(scene)):
            if g.visible[i]:
                gx, gy = g.d_means2d[i]
                expected[i] += math.hypot(gx * 12, gy * 12)
                counts[i] += 1
    assert np.allclose(stats.accum_grad_norm2d, expected, rtol=1e-12)
    assert np.array_equal(stats.accum_count, counts)
    assert np.all(stats.accum_grad_norm2d >= 0)


def test_backward_finite_on_random_scenes():
    spec = KernelSpec.named("linear")
    for seed in range(5):
        scene, cam, _ = small_scene(seed, n=10, size=24, spec=spec)
        out, splats, cache = render_scene(scene, cam, spec, rz.RenderSettings())
        g = backward(out, np.ones(out.image.shape), splats, scene, cache, spec, rz.RenderSettings(), ags=True)
        assert g.all_finite()


def test_smooth_settings_are_float64():
    s = smooth_check_settings()
    assert s.dtype == "float64" and s.alpha_min < 1e-9


def test_random_check_scene_respects_depth_gap():
    cam = check_camera()
    spec = KernelSpec(KernelFamily.GAUSSIAN)
    scene = random_check_scene(np.random.default_rng(0), cam, spec, 16)
    z = np.sort((scene.means @ cam.rotation.T + cam.translation)[:, 2])
    assert np.min(np.diff(z)) >= 0.04
