"""Training loss, image metrics and the per-group Adam optimizer.

SSIM uses an 11x11 Gaussian window (sigma 1.5) evaluated only where the
window fits inside the image ("valid" windows). Its gradient is exact: the
window filter is linear, so the backward pass applies its adjoint.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_C1 = 0.01 ** 2
SSIM_C2 = 0.03 ** 2
PSNR_CAP = 99.0


@dataclass(frozen=True)
class LossWeights:
    alpha_l1: float = 0.6
    beta_l2: float = 0.2
    gamma_ssim: float = 0.2

    def __post_init__(self):
        for v in (self.alpha_l1, self.beta_l2, self.gamma_ssim):
            if not (math.isfinite(v) and v >= 0):
                raise ValueError(f"loss weights must be finite and >= 0, got {self}")

    def to_dict(self) -> dict:
        return {"l1": self.alpha_l1, "l2": self.beta_l2, "ssim": self.gamma_ssim}

    @classmethod
    def from_dict(cls, d: dict) -> "LossWeights":
        return cls(d.get("l1", 0.6), d.get("l2", 0.2), d.get("ssim", 0.2))


def gaussian_window_1d(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> np.ndarray:
    x = np.arange(size) - (size - 1) / 2
    g = np.exp(-x * x / (2 * sigma * sigma))
    return g / g.sum()


_G1 = gaussian_window_1d()


def _as_hwc(img) -> np.ndarray:
    a = np.asarray(img, dtype=np.float64)
    if a.ndim == 2:
        a = a[:, :, None]
    if a.ndim != 3:
        raise ValueError(f"expected an H x W or H x W x C image, got shape {a.shape}")
    return a


def _check_pair(pred, gt):
    p, g = _as_hwc(pred), _as_hwc(gt)
    if p.shape != g.shape:
        raise ValueError(f"image shapes differ: {p.shape} vs {g.shape}")
    if not (np.all(np.isfinite(p)) and np.all(np.isfinite(g))):
        raise ValueError("images must be finite")
    return p, g


def _filter_valid(img: np.ndarray) -> np.ndarray:
    """Separable window filter, output only where the window fits: (H-10, W-10, C)."""
    k = len(_G1)
    t = sliding_window_view(img, k, axis=0) @ _G1
    return sliding_window_view(t, k, axis=1) @ _G1


def _filter_adjoint(g: np.ndarray) -> np.ndarray:
    """Adjoint of :func:`_filter_valid` (zero-padded full correlation; the window is symmetric)."""
    r = len(_G1) - 1
    return _filter_valid(np.pad(g, ((r, r), (r, r), (0, 0))))


def _ssim_parts(p, g):
    if p.shape[0] < SSIM_WINDOW or p.shape[1] < SSIM_WINDOW:
        raise ValueError(f"SSIM needs images of at least {SSIM_WINDOW}x{SSIM_WINDOW}, got {p.shape[:2]}")
    mx, my = _filter_valid(p), _filter_valid(g)
    sxx = _filter_valid(p * p) - mx * mx
    syy = _filter_valid(g * g) - my * my
    sxy = _filter_valid(p * g) - mx * my
    a1 = 2 * mx * my + SSIM_C1
    a2 = 2 * sxy + SSIM_C2
    b1 = mx * mx + my * my + SSIM_C1
    b2 = sxx + syy + SSIM_C2
    return mx, my, a1, a2, b1, b2


def ssim(pred, gt) -> float:
    """Mean local SSIM over valid windows and channels (dynamic range 1)."""
    p, g = _check_pair(pred, gt)
    _, _, a1, a2, b1, b2 = _ssim_parts(p, g)
    return float(np.mean(a1 * a2 / (b1 * b2)))


def ssim_with_grad(pred, gt) -> tuple[float, np.ndarray]:
    """SSIM and its exact gradient w.r.t. ``pred`` (same shape as the input)."""
    p, g = _check_pair(pred, gt)
    mx, my, a1, a2, b1, b2 = _ssim_parts(p, g)
    s = a1 * a2 / (b1 * b2)
    w = 1.0 / s.size
    d_mx = w * (2 * my * a2 / (b1 * b2) - 2 * mx * s / b1)
    d_sxy = w * 2 * a1 / (b1 * b2)
    d_sxx = -w * s / b2
    # sxx = E[x^2] - mx^2, sxy = E[xy] - mx*my
    d_mx = d_mx - 2 * mx * d_sxx - my * d_sxy
    grad = _filter_adjoint(d_mx) + 2 * p * _filter_adjoint(d_sxx) + g * _filter_adjoint(d_sxy)
    return float(np.mean(s)), grad.reshape(np.shape(pred))


def combined_loss(pred, gt, w: LossWeights = LossWeights()) -> tuple[float, np.ndarray]:
    """``alpha*L1 + beta*L2 + gamma*(1 - SSIM)`` and its gradient w.r.t. ``pred``.

    The L1 subgradient at exact ties is 0.
    """
    p, g = _check_pair(pred, gt)
    diff = p - g
    n = diff.size
    loss = w.alpha_l1 * np.abs(diff).mean() + w.beta_l2 * np.mean(diff * diff)
    grad = w.alpha_l1 * np.sign(diff) / n + w.beta_l2 * 2.0 * diff / n
    if w.gamma_ssim:
        s, ds = ssim_with_grad(p, g)
        loss += w.gamma_ssim * (1.0 - s)
        grad -= w.gamma_ssim * ds.reshape(grad.shape)
    return float(loss), grad.reshape(np.shape(pred))


def psnr(pred, gt) -> float:
    """Peak signal-to-noise ratio in dB for images in [0, 1]; capped at 99 dB."""
    p, g = _check_pair(pred, gt)
    mse = float(np.mean((p - g) ** 2))
    if mse <= 0:
        return PSNR_CAP
    return min(PSNR_CAP, 10.0 * math.log10(1.0 / mse))


# ---------------------------------------------------------------------------
# optimizer


def exp_decay(lr_start: float, lr_end: float, step: int, total: int) -> float:
    """Log-linear interpolation from ``lr_start`` at step 0 to ``lr_end`` at ``total``."""
    t = min(max(step / max(total, 1), 0.0), 1.0)
    return math.exp((1 - t) * math.log(lr_start) + t * math.log(lr_end))


@dataclass
class AdamState:
    """Moments per parameter group; the leading axis of every group indexes primitives.

    ``lrs`` maps group name to a scalar or an array broadcastable against one
    primitive's parameters (used for per-band SH rates).
    """

    lrs: dict
    betas: tuple[float, float] = (0.9, 0.999)
    eps: float = 1e-15
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    step: int = 0
    skipped: int = 0

    @classmethod
    def create(cls, params: dict, lrs: dict, **kw) -> "AdamState":
        st = cls(dict(lrs), **kw)
        for k, p in params.items():
            st.m[k] = np.zeros_like(p, dtype=np.float64)
            st.v[k] = np.zeros_like(p, dtype=np.float64)
        return st

    def remap(self, src: np.ndarray) -> None:
        """Reindex moments after structural edits; ``src[i] = -1`` marks a new primitive."""
        src = np.asarray(src, dtype=np.int64)
        new = src < 0
        for d in (self.m, self.v):
            for k, a in d.items():
                out = a[np.where(new, 0, src)] if len(a) else np.zeros((len(src),) + a.shape[1:])
                out[new] = 0.0
                d[k] = out


def adam_step(params: dict, grads: dict, state: AdamState, lr_scale: dict | None = None) -> int:
    """One in-place Adam update of every group in ``params``.

    A primitive whose gradient has any non-finite entry (in any group) keeps
    its parameters and moments; the number skipped this step is returned and
    added to ``state.skipped``. ``lr_scale`` optionally overrides the rate of
    a group for this step (e.g. a decayed means rate).
    """
    b1, b2 = state.betas
    keys = list(params)
    n = len(params[keys[0]])
    bad = np.zeros(n, dtype=bool)
    for k in keys:
        g = grads[k].reshape(n, -1)
        bad |= ~np.all(np.isfinite(g), axis=1)
    state.step += 1
    t = state.step
    c1 = 1 - b1 ** t
    c2 = 1 - b2 ** t
    ok = ~bad
    for k in keys:
        g = np.where(bad.reshape((n,) + (1,) * (grads[k].ndim - 1)), 0.0, grads[k])
        m, v = state.m[k], state.v[k]
        m_new = b1 * m + (1 - b1) * g
        v_new = b2 * v + (1 - b2) * g * g
        lr = state.lrs[k] if lr_scale is None or k not in lr_scale else lr_scale[k]
        upd = lr * (m_new / c1) / (np.sqrt(v_new / c2) + state.eps)
        m[ok] = m_new[ok]
        v[ok] = v_new[ok]
        params[k][ok] -= upd[ok].astype(params[k].dtype)
    state.skipped += int(bad.sum())
    return int(bad.sum())


def normalize_quats(q: np.ndarray) -> None:
    q /= np.linalg.norm(q, axis=-1, keepdims=True)
