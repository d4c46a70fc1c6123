"""Tile-based front-to-back splat compositing on the CPU.

Splats are depth sorted once globally (ties broken by index), binned into
square tiles, and every pixel walks its tile's list front to back. The
backward pass writes one gradient row per (tile, splat) list entry and
reduces those rows per splat in list order, so the parallel and sequential
drivers produce bit-identical results.

Pixel centers sit at integer coordinates: pixel ``(x, y)`` is sampled at
``(x, y)`` in the same frame as the splat means.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numba
import numpy as np

from .geometry import Splats2D
from .kernel import KernelSpec, support_radius

# slots of the per-call constant vector (kept in the render dtype so that the
# float32 path does float32 arithmetic)
_ONE, _HALF, _PI, _LAM, _RADIUS, _AMIN, _AMAX, _TFLOOR, _BG0, _BG1, _BG2, _ZERO, _TWO = range(13)
_NCONST = 13

# columns of the per-entry / per-splat 2D gradient table
G_MEAN_X, G_MEAN_Y, G_CONIC_A, G_CONIC_B, G_CONIC_C, G_OPACITY, G_R, G_G, G_B = range(9)
N_GRAD_COLS = 9

AGS_SCOPES = ("kernel-path", "all-paths")
AGS_DISTANCES = ("aligned", "raw")


@dataclass(frozen=True)
class RenderSettings:
    tile_size: int = 16
    alpha_min: float = 1.0 / 255.0
    alpha_max: float = 0.99
    transmittance_floor: float = 1e-4
    background: tuple = (0.0, 0.0, 0.0)
    dtype: str = "float32"
    deterministic: bool = True

    def __post_init__(self):
        if self.tile_size not in (8, 16, 32):
            raise ValueError(f"tile_size must be 8, 16 or 32, got {self.tile_size}")
        if not 0 < self.alpha_min < self.alpha_max < 1:
            raise ValueError("need 0 < alpha_min < alpha_max < 1")
        if not 0 < self.transmittance_floor < 1:
            raise ValueError("transmittance_floor must be in (0, 1)")
        bg = tuple(float(v) for v in self.background)
        if len(bg) != 3 or not all(0.0 <= v <= 1.0 for v in bg):
            raise ValueError("background must be an RGB triple in [0, 1]")
        object.__setattr__(self, "background", bg)
        if self.dtype not in ("float32", "float64"):
            raise ValueError("dtype must be 'float32' or 'float64'")

    @property
    def np_dtype(self):
        return np.dtype(self.dtype)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["background"] = list(self.background)
        return d


@dataclass
class TileBins:
    tile_size: int
    tiles_x: int
    tiles_y: int
    offsets: np.ndarray  # (tiles_x * tiles_y + 1,) int64
    entries: np.ndarray  # (E,) int32 splat ids, each tile slice in (depth, index) order

    def tile_list(self, tx: int, ty: int) -> np.ndarray:
        t = ty * self.tiles_x + tx
        return self.entries[self.offsets[t]:self.offsets[t + 1]]


@dataclass
class RenderOutput:
    image: np.ndarray                # (H, W, 3)
    final_transmittance: np.ndarray  # (H, W)
    contributor_count: np.ndarray    # (H, W) int32
    last_entry: np.ndarray           # (H, W) int64, one past the last visited list entry
    bins: TileBins

    @property
    def sorted_splat_order(self) -> TileBins:
        return self.bins


# ---------------------------------------------------------------------------
# kernels (family codes follow KernelFamily)


@numba.njit(cache=True, inline="always")
def _kernel_value(family, u, c):
    if family == 0:
        return np.exp(-c[_HALF] * u * u)
    if family == 1:
        return np.exp(-u)
    if u >= c[_ONE]:
        return c[_ZERO]
    if family == 2:
        return c[_HALF] * (c[_ONE] + np.cos(c[_PI] * u))
    if family == 3:
        return c[_ONE] - u * u
    return c[_ONE] - u


@numba.njit(cache=True, inline="always")
def _kernel_slope(family, u, k, c):
    """d kernel / d distance, given u = D / lam and k = kernel value at u."""
    lam = c[_LAM]
    if family == 0:
        return -u * k / lam
    if family == 1:
        return -k / lam
    if u > c[_ONE]:
        return c[_ZERO]
    if family == 2:
        return -c[_HALF] * c[_PI] * np.sin(c[_PI] * u) / lam
    if family == 3:
        return -c[_TWO] * u / lam
    return -c[_ONE] / lam


# ---------------------------------------------------------------------------
# binning


@numba.njit(cache=True)
def _disc_hits_tile(mx, my, r, tx, ty, ts, width, height):
    x0 = tx * ts
    y0 = ty * ts
    x1 = min(x0 + ts - 1, width - 1)
    y1 = min(y0 + ts - 1, height - 1)
    px = min(max(mx, x0), x1)
    py = min(max(my, y0), y1)
    dx = mx - px
    dy = my - py
    return dx * dx + dy * dy <= r * r


@numba.njit(cache=True)
def _tile_span(mx, my, r, ts, width, height):
    lo_x = max(mx - r, 0.0)
    hi_x = min(mx + r, width - 1.0)
    lo_y = max(my - r, 0.0)
    hi_y = min(my + r, height - 1.0)
    if lo_x > hi_x or lo_y > hi_y:
        return 0, -1, 0, -1
    return (int(np.floor(lo_x / ts)), int(np.floor(hi_x / ts)),
            int(np.floor(lo_y / ts)), int(np.floor(hi_y / ts)))


@numba.njit(cache=True)
def _bin(order, means, radii, ts, tiles_x, tiles_y, width, height):
    n_tiles = tiles_x * tiles_y
    counts = np.zeros(n_tiles, dtype=np.int64)
    for s in order:
        r = radii[s]
        if r <= 0:
            continue
        tx0, tx1, ty0, ty1 = _tile_span(means[s, 0], means[s, 1], r, ts, width, height)
        for ty in range(ty0, ty1 + 1):
            for tx in range(tx0, tx1 + 1):
                if _disc_hits_tile(means[s, 0], means[s, 1], r, tx, ty, ts, width, height):
                    counts[ty * tiles_x + tx] += 1
    offsets = np.zeros(n_tiles + 1, dtype=np.int64)
    for t in range(n_tiles):
        offsets[t + 1] = offsets[t] + counts[t]
    entries = np.empty(offsets[n_tiles], dtype=np.int32)
    cursor = offsets[:n_tiles].copy()
    for s in order:
        r = radii[s]
        if r <= 0:
            continue
        tx0, tx1, ty0, ty1 = _tile_span(means[s, 0], means[s, 1], r, ts, width, height)
        for ty in range(ty0, ty1 + 1):
            for tx in range(tx0, tx1 + 1):
                if _disc_hits_tile(means[s, 0], means[s, 1], r, tx, ty, ts, width, height):
                    t = ty * tiles_x + tx
                    entries[cursor[t]] = s
                    cursor[t] += 1
    return offsets, entries


def depth_order(splats: Splats2D) -> np.ndarray:
    """Splat indices sorted by (depth, index)."""
    n = len(splats)
    return np.lexsort((np.arange(n), np.asarray(splats.depths, dtype=np.float64))).astype(np.int64)


def bin_splats(splats: Splats2D, settings: RenderSettings, width: int, height: int) -> TileBins:
    """Assign every visible splat to the tiles its bounding disc touches."""
    if isinstance(splats, list):
        splats = Splats2D.from_list(splats)
    ts = settings.tile_size
    tiles_x = -(-width // ts)
    tiles_y = -(-height // ts)
    means = np.ascontiguousarray(splats.means2d, dtype=np.float64).reshape(-1, 2)
    radii = np.ascontiguousarray(splats.radii, dtype=np.float64).reshape(-1)
    offsets, entries = _bin(depth_order(splats), means, radii, ts, tiles_x, tiles_y, width, height)
    return TileBins(ts, tiles_x, tiles_y, offsets, entries)


# ---------------------------------------------------------------------------
# forward


@numba.njit(cache=True)
def _forward_tile(t, offsets, entries, means, conics, colors, opac, family, c,
                  tiles_x, ts, width, height, xs, ys, image, T_out, count_out, last_out):
    ty = t // tiles_x
    tx = t - ty * tiles_x
    start = offsets[t]
    end = offsets[t + 1]
    one = c[_ONE]
    lam = c[_LAM]
    R = c[_RADIUS]
    for y in range(ty * ts, min(ty * ts + ts, height)):
        for x in range(tx * ts, min(tx * ts + ts, width)):
            T = one
            cr = c[_ZERO]
            cg = c[_ZERO]
            cb = c[_ZERO]
            n = 0
            last = start
            for k in range(start, end):
                s = entries[k]
                dx = xs[x] - means[s, 0]
                dy = ys[y] - means[s, 1]
                q = conics[s, 0] * dx * dx + c[_TWO] * conics[s, 1] * dx * dy + conics[s, 2] * dy * dy
                D = np.sqrt(max(q, c[_ZERO]))
                if D > R:
                    continue
                kv = _kernel_value(family, D / lam, c)
                alpha = min(opac[s] * kv, c[_AMAX])
                if alpha < c[_AMIN]:
                    continue
                w = alpha * T
                cr += colors[s, 0] * w
                cg += colors[s, 1] * w
                cb += colors[s, 2] * w
                T = T * (one - alpha)
                n += 1
                last = k + 1
                if T < c[_TFLOOR]:
                    break
            image[y, x, 0] = cr + T * c[_BG0]
            image[y, x, 1] = cg + T * c[_BG1]
            image[y, x, 2] = cb + T * c[_BG2]
            T_out[y, x] = T
            count_out[y, x] = n
            last_out[y, x] = last


@numba.njit(cache=True)
def _forward_seq(offsets, entries, means, conics, colors, opac, family, c, tiles_x, tiles_y, ts,
                 width, height, xs, ys, image, T_out, count_out, last_out):
    for t in range(tiles_x * tiles_y):
        _forward_tile(t, offsets, entries, means, conics, colors, opac, family, c,
                      tiles_x, ts, width, height, xs, ys, image, T_out, count_out, last_out)


@numba.njit(cache=True, parallel=True)
def _forward_par(offsets, entries, means, conics, colors, opac, family, c, tiles_x, tiles_y, ts,
                 width, height, xs, ys, image, T_out, count_out, last_out):
    for t in numba.prange(tiles_x * tiles_y):
        _forward_tile(t, offsets, entries, means, conics, colors, opac, family, c,
                      tiles_x, ts, width, height, xs, ys, image, T_out, count_out, last_out)


def _constants(spec: KernelSpec, settings: RenderSettings, dtype) -> np.ndarray:
    c = np.zeros(_NCONST, dtype=np.float64)
    c[_ONE], c[_HALF], c[_PI], c[_TWO] = 1.0, 0.5, np.pi, 2.0
    c[_LAM] = spec.lam
    c[_RADIUS] = support_radius(spec)
    c[_AMIN], c[_AMAX], c[_TFLOOR] = settings.alpha_min, settings.alpha_max, settings.transmittance_floor
    c[_BG0:_BG2 + 1] = settings.background
    return c.astype(dtype)


def _splat_arrays(splats: Splats2D, dtype):
    def arr(a, shape):
        return np.ascontiguousarray(np.asarray(a, dtype=dtype).reshape(shape))
    return (arr(splats.means2d, (-1, 2)), arr(splats.conics, (-1, 3)),
            arr(splats.colors, (-1, 3)), arr(splats.opacities, (-1,)))


def rasterize(splats, spec: KernelSpec, settings: RenderSettings, width: int, height: int,
              bins: TileBins | None = None) -> RenderOutput:
    """Composite ``splats`` front to back into a ``height x width`` image."""
    if isinstance(splats, list):
        splats = Splats2D.from_list(splats)
    width, height = int(width), int(height)
    if width <= 0 or height <= 0:
        raise ValueError("image dimensions must be positive")
    dtype = settings.np_dtype
    if bins is None:
        bins = bin_splats(splats, settings, width, height)
    elif bins.tile_size != settings.tile_size or bins.tiles_x != -(-width // bins.tile_size) \
            or bins.tiles_y != -(-height // bins.tile_size):
        raise ValueError("tile bins do not match the render settings / image size")
    means, conics, colors, opac = _splat_arrays(splats, dtype)
    image = np.zeros((height, width, 3), dtype=dtype)
    T = np.ones((height, width), dtype=dtype)
    count = np.zeros((height, width), dtype=np.int32)
    last = np.zeros((height, width), dtype=np.int64)
    fwd = _forward_seq if settings.deterministic else _forward_par
    fwd(bins.offsets, bins.entries, means, conics, colors, opac, int(spec.family),
        _constants(spec, settings, dtype), bins.tiles_x, bins.tiles_y, bins.tile_size,
        width, height, np.arange(width, dtype=dtype), np.arange(height, dtype=dtype),
        image, T, count, last)
    return RenderOutput(image, T, count, last, bins)


# ---------------------------------------------------------------------------
# backward


@numba.njit(cache=True)
def _backward_tile(t, offsets, entries, means, conics, colors, opac, family, c,
                   tiles_x, ts, width, height, xs, ys, d_image, T_final, last_entry,
                   ags, ags_all, ags_aligned, grads):
    ty = t // tiles_x
    tx = t - ty * tiles_x
    start = offsets[t]
    one = c[_ONE]
    zero = c[_ZERO]
    two = c[_TWO]
    lam = c[_LAM]
    R = c[_RADIUS]
    for y in range(ty * ts, min(ty * ts + ts, height)):
        for x in range(tx * ts, min(tx * ts + ts, width)):
            g0 = d_image[y, x, 0]
            g1 = d_image[y, x, 1]
            g2 = d_image[y, x, 2]
            if g0 == zero and g1 == zero and g2 == zero:
                continue
            Tf = T_final[y, x]
            T = Tf
            acc0 = zero
            acc1 = zero
            acc2 = zero
            last_a = zero
            last_c0 = zero
            last_c1 = zero
            last_c2 = zero
            bg_dot = (c[_BG0] * g0 + c[_BG1] * g1 + c[_BG2] * g2) * Tf
            for k in range(last_entry[y, x] - 1, start - 1, -1):
                s = entries[k]
                dx = xs[x] - means[s, 0]
                dy = ys[y] - means[s, 1]
                ca = conics[s, 0]
                cb = conics[s, 1]
                cc = conics[s, 2]
                q = ca * dx * dx + two * cb * dx * dy + cc * dy * dy
                D = np.sqrt(max(q, zero))
                if D > R:
                    continue
                u = D / lam
                kv = _kernel_value(family, u, c)
                o = opac[s]
                raw = o * kv
                alpha = min(raw, c[_AMAX])
                if alpha < c[_AMIN]:
                    continue
                T = T / (one - alpha)
                w = alpha * T
                acc0 = last_a * last_c0 + (one - last_a) * acc0
                acc1 = last_a * last_c1 + (one - last_a) * acc1
                acc2 = last_a * last_c2 + (one - last_a) * acc2
                c0 = colors[s, 0]
                c1 = colors[s, 1]
                c2 = colors[s, 2]
                last_a = alpha
                last_c0 = c0
                last_c1 = c1
                last_c2 = c2
                dL_da = T * ((c0 - acc0) * g0 + (c1 - acc1) * g1 + (c2 - acc2) * g2) - bg_dot / (one - alpha)
                if raw > c[_AMAX]:
                    dL_da = zero
                if not ags:
                    omega = one
                elif ags_aligned:
                    omega = np.exp(-u * u)
                else:
                    omega = np.exp(-D * D)
                if ags and ags_all:
                    grads[k, 6] += (w * g0) * omega
                    grads[k, 7] += (w * g1) * omega
                    grads[k, 8] += (w * g2) * omega
                    grads[k, 5] += (dL_da * kv) * omega
                else:
                    grads[k, 6] += w * g0
                    grads[k, 7] += w * g1
                    grads[k, 8] += w * g2
                    grads[k, 5] += dL_da * kv
                if D > zero:
                    dL_dD = dL_da * o * _kernel_slope(family, u, kv, c)
                    inv = dL_dD / D
                    gmx = -inv * (ca * dx + cb * dy)
                    gmy = -inv * (cb * dx + cc * dy)
                    gca = inv * (dx * dx / two)
                    gcb = inv * (dx * dy)
                    gcc = inv * (dy * dy / two)
                    if ags:
                        gmx = gmx * omega
                        gmy = gmy * omega
                        gca = gca * omega
                        gcb = gcb * omega
                        gcc = gcc * omega
                    grads[k, 0] += gmx
                    grads[k, 1] += gmy
                    grads[k, 2] += gca
                    grads[k, 3] += gcb
                    grads[k, 4] += gcc


@numba.njit(cache=True)
def _backward_seq(offsets, entries, means, conics, colors, opac, family, c, tiles_x, tiles_y, ts,
                  width, height, xs, ys, d_image, T_final, last_entry, ags, ags_all, ags_aligned, grads):
    for t in range(tiles_x * tiles_y):
        _backward_tile(t, offsets, entries, means, conics, colors, opac, family, c, tiles_x, ts,
                       width, height, xs, ys, d_image, T_final, last_entry, ags, ags_all, ags_aligned, grads)


@numba.njit(cache=True, parallel=True)
def _backward_par(offsets, entries, means, conics, colors, opac, family, c, tiles_x, tiles_y, ts,
                  width, height, xs, ys, d_image, T_final, last_entry, ags, ags_all, ags_aligned, grads):
    for t in numba.prange(tiles_x * tiles_y):
        _backward_tile(t, offsets, entries, means, conics, colors, opac, family, c, tiles_x, ts,
                       width, height, xs, ys, d_image, T_final, last_entry, ags, ags_all, ags_aligned, grads)


@numba.njit(cache=True)
def _reduce_entries(entries, entry_grads, out):
    for k in range(entries.shape[0]):
        s = entries[k]
        for j in range(entry_grads.shape[1]):
            out[s, j] += entry_grads[k, j]


def rasterize_backward(output: RenderOutput, d_image: np.ndarray, splats: Splats2D,
                       spec: KernelSpec, settings: RenderSettings, ags: bool = False,
                       ags_scope: str = "kernel-path", ags_distance: str = "aligned") -> np.ndarray:
    """Gradients w.r.t. the screen-space splat attributes.

    Returns an (N, 9) float64 table with columns ``G_MEAN_X .. G_B``:
    2D mean, conic entries (a, b, c), opacity value and RGB color.
    With ``ags`` the kernel-path terms of each pixel are scaled by
    ``exp(-d**2)``, where ``d`` is the distance the kernel sees (``D / lam``)
    or, with ``ags_distance="raw"``, the unaligned Mahalanobis distance ``D``.
    ``ags_scope="all-paths"`` scales color/opacity terms too.
    """
    if isinstance(splats, list):
        splats = Splats2D.from_list(splats)
    if ags_scope not in AGS_SCOPES:
        raise ValueError(f"ags_scope must be one of {AGS_SCOPES}")
    if ags_distance not in AGS_DISTANCES:
        raise ValueError(f"ags_distance must be one of {AGS_DISTANCES}")
    H, W = output.final_transmittance.shape
    d_image = np.asarray(d_image)
    if d_image.shape != (H, W, 3):
        raise ValueError(f"d_image has shape {d_image.shape}, expected {(H, W, 3)}")
    if not np.all(np.isfinite(d_image)):
        raise ValueError("d_image must be finite")
    dtype = output.image.dtype
    means, conics, colors, opac = _splat_arrays(splats, dtype)
    bins = output.bins
    entry_grads = np.zeros((len(bins.entries), N_GRAD_COLS), dtype=dtype)
    bwd = _backward_seq if settings.deterministic else _backward_par
    bwd(bins.offsets, bins.entries, means, conics, colors, opac, int(spec.family),
        _constants(spec, settings, dtype), bins.tiles_x, bins.tiles_y, bins.tile_size, W, H,
        np.arange(W, dtype=dtype), np.arange(H, dtype=dtype), np.ascontiguousarray(d_image, dtype=dtype), output.final_transmittance, output.last_entry,
        bool(ags), ags_scope == "all-paths", ags_distance == "aligned", entry_grads)
    out = np.zeros((len(splats), N_GRAD_COLS), dtype=np.float64)
    _reduce_entries(bins.entries, entry_grads.astype(np.float64), out)
    return out
