"""Real spherical-harmonic color evaluation, degrees 0 to 3."""
from __future__ import annotations

import numpy as np

C0 = 0.28209479177387814
C1 = 0.4886025119029199
C2 = (1.0925484305920792, -1.0925484305920792, 0.31539156525252005,
      -1.0925484305920792, 0.5462742152960396)
C3 = (-0.5900435899266435, 2.890611442640554, -0.4570457994644658,
      0.3731763325901154, -0.4570457994644658, 1.445305721320277,
      -0.5900435899266435)


def num_coeffs(degree: int) -> int:
    if not 0 <= degree <= 3:
        raise ValueError(f"SH degree must be in 0..3, got {degree}")
    return (degree + 1) ** 2


def degree_of(n_coeffs: int) -> int:
    deg = int(round(np.sqrt(n_coeffs))) - 1
    if num_coeffs(deg) != n_coeffs:
        raise ValueError(f"{n_coeffs} is not a valid SH coefficient count")
    return deg


def rgb_to_sh(rgb):
    return (np.asarray(rgb) - 0.5) / C0


def sh_basis(dirs: np.ndarray, degree: int, with_jacobian: bool = False):
    """Basis values (N, K) and optionally their Jacobian (N, K, 3) w.r.t. ``dirs``.

    ``dirs`` are unit vectors; the Jacobian treats x, y, z as independent.
    """
    dirs = np.asarray(dirs)
    n = dirs.shape[0]
    k = num_coeffs(degree)
    B = np.zeros((n, k), dtype=dirs.dtype)
    J = np.zeros((n, k, 3), dtype=dirs.dtype) if with_jacobian else None
    B[:, 0] = C0
    if degree == 0:
        return (B, J) if with_jacobian else B
    x, y, z = dirs[:, 0], dirs[:, 1], dirs[:, 2]
    B[:, 1] = -C1 * y
    B[:, 2] = C1 * z
    B[:, 3] = -C1 * x
    if with_jacobian:
        J[:, 1, 1] = -C1
        J[:, 2, 2] = C1
        J[:, 3, 0] = -C1
    if degree >= 2:
        xx, yy, zz = x * x, y * y, z * z
        B[:, 4] = C2[0] * x * y
        B[:, 5] = C2[1] * y * z
        B[:, 6] = C2[2] * (2 * zz - xx - yy)
        B[:, 7] = C2[3] * x * z
        B[:, 8] = C2[4] * (xx - yy)
        if with_jacobian:
            J[:, 4, 0], J[:, 4, 1] = C2[0] * y, C2[0] * x
            J[:, 5, 1], J[:, 5, 2] = C2[1] * z, C2[1] * y
            J[:, 6, 0], J[:, 6, 1], J[:, 6, 2] = -2 * C2[2] * x, -2 * C2[2] * y, 4 * C2[2] * z
            J[:, 7, 0], J[:, 7, 2] = C2[3] * z, C2[3] * x
            J[:, 8, 0], J[:, 8, 1] = 2 * C2[4] * x, -2 * C2[4] * y
    if degree >= 3:
        B[:, 9] = C3[0] * y * (3 * xx - yy)
        B[:, 10] = C3[1] * x * y * z
        B[:, 11] = C3[2] * y * (4 * zz - xx - yy)
        B[:, 12] = C3[3] * z * (2 * zz - 3 * xx - 3 * yy)
        B[:, 13] = C3[4] * x * (4 * zz - xx - yy)
        B[:, 14] = C3[5] * z * (xx - yy)
        B[:, 15] = C3[6] * x * (xx - 3 * yy)
        if with_jacobian:
            J[:, 9, 0] = C3[0] * 6 * x * y
            J[:, 9, 1] = C3[0] * (3 * xx - 3 * yy)
            J[:, 10, 0], J[:, 10, 1], J[:, 10, 2] = C3[1] * y * z, C3[1] * x * z, C3[1] * x * y
            J[:, 11, 0] = -2 * C3[2] * x * y
            J[:, 11, 1] = C3[2] * (4 * zz - xx - 3 * yy)
            J[:, 11, 2] = 8 * C3[2] * y * z
            J[:, 12, 0] = -6 * C3[3] * x * z
            J[:, 12, 1] = -6 * C3[3] * y * z
            J[:, 12, 2] = C3[3] * (6 * zz - 3 * xx - 3 * yy)
            J[:, 13, 0] = C3[4] * (4 * zz - 3 * xx - yy)
            J[:, 13, 1] = -2 * C3[4] * x * y
            J[:, 13, 2] = 8 * C3[4] * x * z
            J[:, 14, 0], J[:, 14, 1], J[:, 14, 2] = 2 * C3[5] * x * z, -2 * C3[5] * y * z, C3[5] * (xx - yy)
            J[:, 15, 0] = C3[6] * (3 * xx - 3 * yy)
            J[:, 15, 1] = -6 * C3[6] * x * y
    return (B, J) if with_jacobian else B


def eval_sh(coeffs: np.ndarray, dirs: np.ndarray) -> np.ndarray:
    """Unclamped RGB ``sum_k B_k(dir) * coeffs[:, k] + 0.5`` for (N, K, 3) coefficients."""
    B = sh_basis(dirs, degree_of(coeffs.shape[1]))
    return np.einsum("nk,nkc->nc", B, coeffs) + 0.5
