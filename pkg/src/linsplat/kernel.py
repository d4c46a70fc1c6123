"""Attenuation kernels over Mahalanobis distance.

Every kernel is a falloff ``f(u)`` with ``u = d / lam``; ``d`` is the
Mahalanobis distance of a point from a splat center and ``lam`` the
alignment factor that stretches the kernel to match Gaussian coverage.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np


class KernelFamily(enum.IntEnum):
    GAUSSIAN = 0
    LAPLACIAN = 1
    RAISED_COSINE = 2
    QUADRATIC = 3
    LINEAR = 4

    @property
    def bounded(self) -> bool:
        return self in (KernelFamily.RAISED_COSINE, KernelFamily.QUADRATIC, KernelFamily.LINEAR)

    @classmethod
    def parse(cls, name: "str | KernelFamily") -> "KernelFamily":
        if isinstance(name, KernelFamily):
            return name
        key = str(name).strip().lower().replace("-", "_")
        try:
            return _ALIASES[key]
        except KeyError:
            raise ValueError(
                f"unknown kernel {name!r}; expected one of {sorted(set(_CLI_NAMES.values()))}"
            ) from None

    @property
    def cli_name(self) -> str:
        return _CLI_NAMES[self]


_CLI_NAMES = {
    KernelFamily.GAUSSIAN: "gaussian",
    KernelFamily.LAPLACIAN: "laplacian",
    KernelFamily.RAISED_COSINE: "cosine",
    KernelFamily.QUADRATIC: "quadratic",
    KernelFamily.LINEAR: "linear",
}
_ALIASES = {v: k for k, v in _CLI_NAMES.items()}
_ALIASES.update({"raised_cosine": KernelFamily.RAISED_COSINE, "raisedcosine": KernelFamily.RAISED_COSINE})

DEFAULT_LAMBDA = {
    KernelFamily.GAUSSIAN: 1.0,
    KernelFamily.LAPLACIAN: 1.0,
    KernelFamily.RAISED_COSINE: 2.5,
    KernelFamily.QUADRATIC: 6.0,
    KernelFamily.LINEAR: 2.5,
}


@dataclass(frozen=True)
class KernelSpec:
    """A kernel family plus its distance-alignment factor.

    ``gaussian_cutoff`` truncates the unbounded families (Gaussian, Laplacian)
    at ``gaussian_cutoff * lam`` Mahalanobis units; it is ignored otherwise.
    """

    family: KernelFamily = KernelFamily.LINEAR
    lam: float | None = None
    gaussian_cutoff: float = 3.0

    def __post_init__(self):
        family = KernelFamily.parse(self.family)
        object.__setattr__(self, "family", family)
        if self.lam is None:
            object.__setattr__(self, "lam", DEFAULT_LAMBDA[family])
        lam = float(self.lam)
        if not math.isfinite(lam) or lam <= 0:
            raise ValueError(f"lambda must be positive and finite, got {self.lam}")
        object.__setattr__(self, "lam", lam)
        if not self.gaussian_cutoff >= 1.0:
            raise ValueError(f"gaussian_cutoff must be >= 1, got {self.gaussian_cutoff}")
        object.__setattr__(self, "gaussian_cutoff", float(self.gaussian_cutoff))

    @classmethod
    def named(cls, name: str, lam: float | None = None, **kw) -> "KernelSpec":
        return cls(KernelFamily.parse(name), lam, **kw)

    def to_dict(self) -> dict:
        return {"family": self.family.cli_name, "lambda": self.lam, "gaussian_cutoff": self.gaussian_cutoff}

    @classmethod
    def from_dict(cls, d: dict) -> "KernelSpec":
        return cls(KernelFamily.parse(d.get("family", "linear")), d.get("lambda"),
                   d.get("gaussian_cutoff", 3.0))


def _check_distance(d) -> np.ndarray:
    d = np.asarray(d, dtype=np.float64)
    if not np.all(np.isfinite(d)):
        raise ValueError("Mahalanobis distance must be finite")
    if np.any(d < 0):
        raise ValueError("Mahalanobis distance must be non-negative")
    return d


def _scalar_or_array(x: np.ndarray, like):
    return float(x) if np.ndim(like) == 0 else x


def eval_kernel(spec: KernelSpec, d):
    """Kernel weight ``f(d / lam)`` in [0, 1]; accepts scalars or arrays."""
    d_arr = _check_distance(d)
    u = d_arr / spec.lam
    fam = spec.family
    if fam is KernelFamily.GAUSSIAN:
        out = np.exp(-0.5 * u * u)
    elif fam is KernelFamily.LAPLACIAN:
        out = np.exp(-u)
    elif fam is KernelFamily.RAISED_COSINE:
        out = np.where(u <= 1.0, 0.5 * (1.0 + np.cos(np.pi * np.minimum(u, 1.0))), 0.0)
    elif fam is KernelFamily.QUADRATIC:
        out = np.maximum(0.0, 1.0 - u * u)
    else:
        out = np.maximum(0.0, 1.0 - u)
    return _scalar_or_array(out, d)


def kernel_derivative(spec: KernelSpec, d):
    """Derivative of :func:`eval_kernel` with respect to ``d``.

    At the support rim ``d == lam`` the Linear and Quadratic kernels return
    their interior one-sided slope; the raised cosine is C1 there and returns 0.
    """
    d_arr = _check_distance(d)
    lam = spec.lam
    u = d_arr / lam
    fam = spec.family
    if fam is KernelFamily.GAUSSIAN:
        out = -u * np.exp(-0.5 * u * u) / lam
    elif fam is KernelFamily.LAPLACIAN:
        out = -np.exp(-u) / lam
    elif fam is KernelFamily.RAISED_COSINE:
        out = np.where(u <= 1.0, -0.5 * np.pi * np.sin(np.pi * np.minimum(u, 1.0)) / lam, 0.0)
    elif fam is KernelFamily.QUADRATIC:
        out = np.where(u <= 1.0, -2.0 * u / lam, 0.0)
    else:
        out = np.where(u <= 1.0, -1.0 / lam, 0.0)
    return _scalar_or_array(out, d)


def ags_weight(d2):
    """Adaptive gradient scaling weight ``exp(-d2**2)`` for a 2D Mahalanobis distance."""
    arr = _check_distance(d2)
    return _scalar_or_array(np.exp(-arr * arr), d2)


def support_radius(spec: KernelSpec) -> float:
    """Mahalanobis radius beyond which the splat contributes exactly zero."""
    if spec.family.bounded:
        return spec.lam
    return spec.gaussian_cutoff * spec.lam
