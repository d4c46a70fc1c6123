"""Procedural target images for 2D fitting; all return H x W x 3 float arrays in [0, 1]."""
from __future__ import annotations

import re

import numpy as np

MIN_SIZE = 32

# bar colors of the test card, left to right
TESTCARD_BARS = (
    (1.0, 1.0, 1.0), (1.0, 1.0, 0.0), (0.0, 1.0, 1.0), (0.0, 1.0, 0.0),
    (1.0, 0.0, 1.0), (1.0, 0.0, 0.0), (0.0, 0.0, 1.0), (0.0, 0.0, 0.0),
)


def _grid(size: int):
    if size < MIN_SIZE:
        raise ValueError(f"pattern size must be at least {MIN_SIZE}, got {size}")
    y, x = np.mgrid[0:size, 0:size]
    return x, y


def _gray(v) -> np.ndarray:
    return np.repeat(np.asarray(v, dtype=np.float64)[:, :, None], 3, axis=2)


def stripes(size: int = 128, period: int = 8) -> np.ndarray:
    """Vertical bars varying along x; white first: value 1 where ``(x // (period/2)) % 2 == 0``."""
    if period < 2 or period % 2:
        raise ValueError("stripe period must be an even number >= 2")
    x, _ = _grid(size)
    return _gray((x // (period // 2)) % 2 == 0)


def checker(size: int = 128, cell: int = 8) -> np.ndarray:
    """Value at (x, y) is the parity of ``x // cell + y // cell``."""
    if cell < 1:
        raise ValueError("checker cell must be >= 1")
    x, y = _grid(size)
    return _gray((x // cell + y // cell) % 2)


def circles(size: int = 128, ring_width: int = 6) -> np.ndarray:
    """Concentric rings about the image center, white innermost."""
    if ring_width < 1:
        raise ValueError("ring width must be >= 1")
    x, y = _grid(size)
    c = (size - 1) / 2
    r = np.hypot(x - c, y - c)
    return _gray((np.floor(r / ring_width) % 2) == 0)


def radial(size: int = 128) -> np.ndarray:
    """Smooth radial blend from warm center to cool corners."""
    x, y = _grid(size)
    c = (size - 1) / 2
    t = np.hypot(x - c, y - c) / np.hypot(c, c)
    warm = np.array([1.0, 0.8, 0.2])
    cool = np.array([0.1, 0.2, 0.6])
    return (1 - t)[:, :, None] * warm + t[:, :, None] * cool


def testcard_bar_centers(size: int) -> list[tuple[int, int]]:
    """Pixel (x, y) at the center of each color bar of :func:`testcard`."""
    return [(int((i + 0.5) * size / 8), int(size / 4)) for i in range(8)]


def testcard(size: int = 256) -> np.ndarray:
    """Composite card: gray grid frame, 8 color bars, frequency gratings, gray ramp, circle.

    Layout in eighths of ``size`` along y: rows [1, 3) hold the color bars
    (order white, yellow, cyan, green, magenta, red, blue, black, each one
    eighth wide), rows [3, 5) hold vertical gratings with periods 2, 4, 8
    and 16 px in four quarters, rows [5, 7) a horizontal gray ramp. A white
    circle of radius 0.45 * size, 2 px thick, is drawn over everything.
    """
    x, y = _grid(size)
    img = np.full((size, size, 3), 0.5)
    grid = ((x % max(size // 16, 1)) == 0) | ((y % max(size // 16, 1)) == 0)
    img[grid] = 0.85
    e = size / 8
    bars = (y >= e) & (y < 3 * e)
    idx = np.minimum((x / e).astype(int), 7)
    img[bars] = np.asarray(TESTCARD_BARS)[idx[bars]]
    band = (y >= 3 * e) & (y < 5 * e)
    quarter = np.minimum((x / (2 * e)).astype(int), 3)
    periods = np.array([2, 4, 8, 16])[quarter]
    grating = ((x // (periods // 2)) % 2 == 0).astype(np.float64)
    img[band] = grating[band][:, None]
    ramp = (y >= 5 * e) & (y < 7 * e)
    img[ramp] = (x[ramp] / (size - 1))[:, None]
    c = (size - 1) / 2
    r = np.hypot(x - c, y - c)
    img[np.abs(r - 0.45 * size) < 1.0] = 1.0
    return img


_GENERATORS = {"stripes": stripes, "checker": checker, "circles": circles,
               "radial": radial, "testcard": testcard}
_PARAM = {"stripes": "period", "checker": "cell", "circles": "ring_width"}


def generate_pattern(name: str, size: int = 128, **params) -> np.ndarray:
    """Pattern by name. A trailing number sets the main parameter: ``stripes8``, ``checker4``."""
    m = re.fullmatch(r"([a-z]+)(\d*)", name.strip().lower())
    if not m or m.group(1) not in _GENERATORS:
        raise ValueError(f"unknown pattern {name!r}; expected one of {sorted(_GENERATORS)}")
    base, num = m.groups()
    if num:
        if base not in _PARAM:
            raise ValueError(f"pattern {base!r} takes no numeric parameter")
        params[_PARAM[base]] = int(num)
    return _GENERATORS[base](size, **params)


PATTERN_NAMES = tuple(_GENERATORS)
