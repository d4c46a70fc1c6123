import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from linsplat.losses import (SSIM_C1, SSIM_C2, AdamState, LossWeights, adam_step, combined_loss,
                             exp_decay, gaussian_window_1d, normalize_quats, psnr, ssim,
                             ssim_with_grad)


def brute_force_ssim(a, b):
    """Direct per-window evaluation with an explicit 2D window."""
    g = gaussian_window_1d()
    w = np.outer(g, g)
    H, W, C = a.shape
    vals = []
    for c in range(C):
        for y in range(H - 10):
            for x in range(W - 10):
                pa, pb = a[y:y + 11, x:x + 11, c], b[y:y + 11, x:x + 11, c]
                ma, mb = (w * pa).sum(), (w * pb).sum()
                va = (w * pa * pa).sum() - ma * ma
                vb = (w * pb * pb).sum() - mb * mb
                cov = (w * pa * pb).sum() - ma * mb
                vals.append((2 * ma * mb + SSIM_C1) * (2 * cov + SSIM_C2)
                            / ((ma * ma + mb * mb + SSIM_C1) * (va + vb + SSIM_C2)))
    return float(np.mean(vals))


def checkerboard(size=24, cell=3, lo=0.25, hi=0.75):
    y, x = np.mgrid[0:size, 0:size]
    v = np.where(((x // cell) + (y // cell)) % 2 == 0, hi, lo)
    return np.repeat(v[:, :, None], 3, axis=2)


def test_identical_images():
    x = np.random.default_rng(0).random((16, 16, 3))
    loss, grad = combined_loss(x, x.copy())
    assert loss == 0.0
    assert np.max(np.abs(grad)) < 1e-12
    assert ssim(x, x) == 1.0


def test_constant_images():
    one, zero = np.ones((16, 16, 3)), np.zeros((16, 16, 3))
    s = SSIM_C1 / (1 + SSIM_C1)
    assert ssim(one, zero) == pytest.approx(s, rel=1e-12)
    assert s == pytest.approx(9.999e-5, rel=1e-4)
    loss, _ = combined_loss(one, zero)
    assert loss == pytest.approx(0.6 + 0.2 + 0.2 * (1 - s), abs=1e-12)


def test_single_pixel_terms():
    w = LossWeights(0.6, 0.2, 0.0)
    loss, grad = combined_loss(np.full((1, 1, 1), 0.5), np.full((1, 1, 1), 0.25), w)
    assert loss == pytest.approx(0.6 * 0.25 + 0.2 * 0.0625, abs=1e-15)
    assert grad.item() == pytest.approx(0.6 + 0.2 * 2 * 0.25)


def test_ssim_against_brute_force():
    a = checkerboard()
    assert ssim(a, 1 - a) == pytest.approx(brute_force_ssim(a, 1 - a), abs=1e-6)
    rng = np.random.default_rng(1)
    b, c = rng.random((20, 23, 3)), rng.random((20, 23, 3))
    assert ssim(b, c) == pytest.approx(brute_force_ssim(b, c), abs=1e-6)


def test_loss_decomposition():
    rng = np.random.default_rng(2)
    p, g = rng.random((16, 16, 3)), rng.random((16, 16, 3))
    l1 = np.mean(np.abs(p - g))
    l2 = np.mean((p - g) ** 2)
    expected = 0.6 * l1 + 0.2 * l2 + 0.2 * (1 - ssim(p, g))
    assert combined_loss(p, g)[0] == pytest.approx(expected, abs=1e-12)


def test_loss_gradient_finite_differences():
    rng = np.random.default_rng(3)
    p, g = rng.random((16, 16, 3)), rng.random((16, 16, 3))
    _, grad = combined_loss(p, g)
    h = 1e-6
    idx = [tuple(rng.integers(0, 16, 2)) + (int(rng.integers(0, 3)),) for _ in range(60)]
    for i in idx:
        q = p.copy()
        q[i] += h
        lp = combined_loss(q, g)[0]
        q[i] -= 2 * h
        lm = combined_loss(q, g)[0]
        fd = (lp - lm) / (2 * h)
        assert abs(fd - grad[i]) <= 1e-4 * max(abs(fd), abs(grad[i]), 1e-3)


def test_ssim_gradient_finite_differences():
    rng = np.random.default_rng(4)
    p, g = rng.random((14, 15, 2)), rng.random((14, 15, 2))
    _, grad = ssim_with_grad(p, g)
    h = 1e-6
    for i in [(0, 0, 0), (7, 7, 1), (13, 14, 0), (3, 10, 1)]:
        q = p.copy()
        q[i] += h
        a = ssim(q, g)
        q[i] -= 2 * h
        b = ssim(q, g)
        assert grad[i] == pytest.approx((a - b) / (2 * h), rel=1e-5, abs=1e-10)


def test_errors():
    with pytest.raises(ValueError):
        combined_loss(np.zeros((4, 4, 3)), np.zeros((4, 5, 3)))
    with pytest.raises(ValueError):
        ssim(np.zeros((8, 8, 3)), np.zeros((8, 8, 3)))
    with pytest.raises(ValueError):
        LossWeights(-0.1, 0.2, 0.2)


@pytest.mark.parametrize("mse, expected", [(0.01, 20.0), (1.0, 0.0)])
def test_psnr_values(mse, expected):
    g = np.zeros((4, 4, 3))
    assert psnr(g + math.sqrt(mse), g) == pytest.approx(expected)


def test_psnr_cap():
    x = np.random.default_rng(0).random((4, 4, 3))
    assert psnr(x, x) == 99.0


images = arrays(np.float64, (12, 13, 1), elements=st.floats(0, 1))


@given(images, images)
def test_ssim_symmetric_and_bounded(a, b):
    s = ssim(a, b)
    assert s == pytest.approx(ssim(b, a), abs=1e-9)
    assert s <= 1.0 + 1e-12


def test_weights_dict_roundtrip():
    w = LossWeights(0.5, 0.3, 0.2)
    assert LossWeights.from_dict(w.to_dict()) == w
    assert LossWeights().to_dict() == {"l1": 0.6, "l2": 0.2, "ssim": 0.2}


# ---------------------------------------------------------------------------
# Adam


def test_adam_zero_gradient_keeps_params():
    p = {"a": np.ones((3, 2))}
    st_ = AdamState.create(p, {"a": 0.1})
    adam_step(p, {"a": np.zeros((3, 2))}, st_)
    assert np.all(p["a"] == 1.0)
    assert np.all(st_.m["a"] == 0) and st_.step == 1


def test_adam_moments_decay_under_zero_gradient():
    p = {"a": np.ones((3, 2))}
    st_ = AdamState.create(p, {"a": 0.1})
    adam_step(p, {"a": np.ones((3, 2))}, st_)
    m, v = st_.m["a"].copy(), st_.v["a"].copy()
    adam_step(p, {"a": np.zeros((3, 2))}, st_)
    assert np.allclose(st_.m["a"], 0.9 * m) and np.allclose(st_.v["a"], 0.999 * v)


def test_adam_first_step():
    g = np.array([[0.3, -2.0, 1e-3]])
    p = {"a": np.zeros((1, 3))}
    st_ = AdamState.create(p, {"a": 0.01})
    adam_step(p, {"a": g}, st_)
    # bias correction makes the first step exactly -lr * g / (|g| + eps)
    assert np.allclose(p["a"], -0.01 * g / (np.abs(g) + 1e-15), rtol=1e-12)


def test_adam_skips_non_finite_primitive():
    p = {"a": np.zeros((3, 2)), "b": np.zeros(3)}
    st_ = AdamState.create(p, {"a": 0.1, "b": 0.1})
    ga = np.ones((3, 2))
    ga[1, 0] = np.nan
    skipped = adam_step(p, {"a": ga, "b": np.ones(3)}, st_)
    assert skipped == 1 and st_.skipped == 1
    assert np.all(p["a"][1] == 0) and p["b"][1] == 0
    assert np.all(p["a"][[0, 2]] < 0)
    assert np.all(st_.m["a"][1] == 0)


@given(st.floats(0.01, 100.0))
def test_adam_scale_invariance(c):
    g = np.random.default_rng(0).normal(size=(5, 3))
    p1, p2 = {"a": np.zeros((5, 3))}, {"a": np.zeros((5, 3))}
    s1, s2 = AdamState.create(p1, {"a": 0.1}), AdamState.create(p2, {"a": 0.1})
    adam_step(p1, {"a": g}, s1)
    adam_step(p2, {"a": c * g}, s2)
    assert np.allclose(s2.m["a"], c * s1.m["a"])
    assert np.array_equal(np.sign(p1["a"]), np.sign(p2["a"]))


def test_adam_lr_override_and_remap():
    p = {"a": np.zeros((2, 1))}
    st_ = AdamState.create(p, {"a": 1.0})
    adam_step(p, {"a": np.ones((2, 1))}, st_, {"a": 0.5})
    assert np.allclose(p["a"], -0.5)
    st_.remap(np.array([1, -1, 0]))
    assert st_.m["a"].shape == (3, 1)
    assert st_.m["a"][1, 0] == 0 and st_.m["a"][0, 0] == st_.m["a"][2, 0] != 0


def test_exp_decay_endpoints():
    assert exp_decay(1e-2, 1e-4, 0, 100) == pytest.approx(1e-2)
    assert exp_decay(1e-2, 1e-4, 100, 100) == pytest.approx(1e-4)
    assert exp_decay(1e-2, 1e-4, 50, 100) == pytest.approx(1e-3)


def test_normalize_quats():
    q = np.array([[2.0, 0, 0, 0], [1.0, 1, 1, 1]])
    normalize_quats(q)
    assert np.allclose(np.linalg.norm(q, axis=1), 1.0, atol=1e-6)
