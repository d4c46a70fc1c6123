"""Primitive parameterization, cameras and the 3D -> 2D projection chain.

Everything here is vectorized over primitives with numpy and runs in float64.
The backward functions are hand-written vector-Jacobian products of the
forward ones; they are checked against finite differences in the tests.
"""
from __future__ import annotations

from dataclasses import dataclass, field, fields

import numpy as np

from . import sh as shmod
from .kernel import KernelSpec, support_radius

NEAR_PLANE = 0.01
COV2D_FLOOR = 0.3


def sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def logit(p):
    p = np.asarray(p, dtype=np.float64)
    return np.log(p) - np.log1p(-p)


# ---------------------------------------------------------------------------
# cameras


@dataclass
class Camera:
    world_to_camera: np.ndarray
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        W = np.asarray(self.world_to_camera, dtype=np.float64).reshape(4, 4)
        self.world_to_camera = W
        if not np.all(np.isfinite(W)):
            raise ValueError("world_to_camera must be finite")
        self.width, self.height = int(self.width), int(self.height)
        if self.width <= 0 or self.height <= 0:
            raise ValueError("camera width/height must be positive")
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError("focal lengths must be positive")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise ValueError("principal point must lie inside the image")

    @property
    def rotation(self) -> np.ndarray:
        return self.world_to_camera[:3, :3]

    @property
    def translation(self) -> np.ndarray:
        return self.world_to_camera[:3, 3]

    @property
    def center(self) -> np.ndarray:
        return -self.rotation.T @ self.translation

    def orthonormality_error(self) -> float:
        R = self.rotation
        return float(np.abs(R @ R.T - np.eye(3)).max())

    def to_dict(self) -> dict:
        return {
            "world_to_camera": [float(v) for v in self.world_to_camera.reshape(-1)],
            "fx": float(self.fx), "fy": float(self.fy),
            "cx": float(self.cx), "cy": float(self.cy),
            "width": self.width, "height": self.height,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Camera":
        return cls(np.asarray(d["world_to_camera"], dtype=np.float64).reshape(4, 4),
                   float(d["fx"]), float(d["fy"]), float(d["cx"]), float(d["cy"]),
                   int(d["width"]), int(d["height"]))


def look_at(eye, target, up=(0.0, 1.0, 0.0)) -> np.ndarray:
    """World-to-camera matrix for a camera at ``eye`` looking at ``target``.

    Camera axes follow the usual vision convention: +x right, +y down, +z forward.
    """
    eye = np.asarray(eye, dtype=np.float64)
    fwd = np.asarray(target, dtype=np.float64) - eye
    fwd /= np.linalg.norm(fwd)
    right = np.cross(fwd, np.asarray(up, dtype=np.float64))
    if np.linalg.norm(right) < 1e-9:
        right = np.cross(fwd, np.array([1.0, 0.0, 0.0]))
    right /= np.linalg.norm(right)
    down = np.cross(fwd, right)
    R = np.stack([right, down, fwd])
    W = np.eye(4)
    W[:3, :3] = R
    W[:3, 3] = -R @ eye
    return W


# ---------------------------------------------------------------------------
# primitives


@dataclass
class Primitive3D:
    mean: np.ndarray
    log_scale: np.ndarray
    rotation: np.ndarray
    opacity_logit: float
    color_coeffs: np.ndarray

    @property
    def opacity(self) -> float:
        return float(sigmoid(self.opacity_logit))


@dataclass
class Scene:
    """A set of 3D primitives stored as parallel arrays."""

    means: np.ndarray           # (N, 3)
    log_scales: np.ndarray      # (N, 3)
    quats: np.ndarray           # (N, 4), w x y z
    opacity_logits: np.ndarray  # (N,)
    sh: np.ndarray              # (N, K, 3)

    def __post_init__(self):
        n = len(self.means)
        self.means = np.asarray(self.means).reshape(n, 3)
        self.log_scales = np.asarray(self.log_scales).reshape(n, 3)
        self.quats = np.asarray(self.quats).reshape(n, 4)
        self.opacity_logits = np.asarray(self.opacity_logits).reshape(n)
        self.sh = np.asarray(self.sh)
        if self.sh.ndim == 2:
            self.sh = self.sh.reshape(n, -1, 3)
        shmod.degree_of(self.sh.shape[1])

    def __len__(self) -> int:
        return len(self.means)

    @property
    def sh_degree(self) -> int:
        return shmod.degree_of(self.sh.shape[1])

    def __getitem__(self, i: int) -> Primitive3D:
        return Primitive3D(self.means[i], self.log_scales[i], self.quats[i],
                           float(self.opacity_logits[i]), self.sh[i])

    def param_dict(self) -> dict[str, np.ndarray]:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    def copy(self) -> "Scene":
        return Scene(**{k: v.copy() for k, v in self.param_dict().items()})

    def select(self, idx) -> "Scene":
        return Scene(**{k: v[idx] for k, v in self.param_dict().items()})

    def astype(self, dtype) -> "Scene":
        return Scene(**{k: v.astype(dtype) for k, v in self.param_dict().items()})

    @staticmethod
    def concat(scenes: list["Scene"]) -> "Scene":
        names = [f.name for f in fields(Scene)]
        return Scene(**{k: np.concatenate([getattr(s, k) for s in scenes]) for k in names})

    @classmethod
    def empty(cls, sh_degree: int = 0, dtype=np.float64) -> "Scene":
        k = shmod.num_coeffs(sh_degree)
        return cls(np.zeros((0, 3), dtype), np.zeros((0, 3), dtype), np.zeros((0, 4), dtype),
                   np.zeros(0, dtype), np.zeros((0, k, 3), dtype))

    @classmethod
    def from_primitives(cls, prims: list[Primitive3D]) -> "Scene":
        return cls(np.array([p.mean for p in prims]), np.array([p.log_scale for p in prims]),
                   np.array([p.rotation for p in prims]),
                   np.array([p.opacity_logit for p in prims]),
                   np.array([p.color_coeffs for p in prims]))


@dataclass
class Primitive2D:
    mean2d: np.ndarray
    log_scale2d: np.ndarray
    rotation_angle: float
    opacity_logit: float
    color: np.ndarray


@dataclass
class Scene2D:
    """Screen-native splats for image fitting; depth order is the index order."""

    means: np.ndarray           # (N, 2) pixels
    log_scales: np.ndarray      # (N, 2)
    angles: np.ndarray          # (N,)
    opacity_logits: np.ndarray  # (N,)
    colors: np.ndarray          # (N, 3)

    def __len__(self) -> int:
        return len(self.means)

    def __getitem__(self, i: int) -> Primitive2D:
        return Primitive2D(self.means[i], self.log_scales[i], float(self.angles[i]),
                           float(self.opacity_logits[i]), self.colors[i])

    def param_dict(self) -> dict[str, np.ndarray]:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    def copy(self) -> "Scene2D":
        return Scene2D(**{k: v.copy() for k, v in self.param_dict().items()})


# ---------------------------------------------------------------------------
# rotations and covariances


def quat_to_rotmat(q: np.ndarray) -> np.ndarray:
    """Rotation matrices (N, 3, 3) from quaternions (N, 4) in w, x, y, z order (normalized here)."""
    q = np.asarray(q, dtype=np.float64)
    q = q / np.linalg.norm(q, axis=-1, keepdims=True)
    w, x, y, z = q[..., 0], q[..., 1], q[..., 2], q[..., 3]
    R = np.empty(q.shape[:-1] + (3, 3))
    R[..., 0, 0] = 1 - 2 * (y * y + z * z)
    R[..., 0, 1] = 2 * (x * y - w * z)
    R[..., 0, 2] = 2 * (x * z + w * y)
    R[..., 1, 0] = 2 * (x * y + w * z)
    R[..., 1, 1] = 1 - 2 * (x * x + z * z)
    R[..., 1, 2] = 2 * (y * z - w * x)
    R[..., 2, 0] = 2 * (x * z - w * y)
    R[..., 2, 1] = 2 * (y * z + w * x)
    R[..., 2, 2] = 1 - 2 * (x * x + y * y)
    return R


def rotmat_vjp(q_raw: np.ndarray, dR: np.ndarray) -> np.ndarray:
    """Gradient w.r.t. the raw (unnormalized) quaternion given dL/dR."""
    norm = np.linalg.norm(q_raw, axis=-1, keepdims=True)
    q = q_raw / norm
    w, x, y, z = q[:, 0], q[:, 1], q[:, 2], q[:, 3]
    G = dR
    dq = np.empty_like(q)
    dq[:, 0] = 2 * (-z * G[:, 0, 1] + y * G[:, 0, 2] + z * G[:, 1, 0]
                    - x * G[:, 1, 2] - y * G[:, 2, 0] + x * G[:, 2, 1])
    dq[:, 1] = 2 * (y * G[:, 0, 1] + z * G[:, 0, 2] + y * G[:, 1, 0] - 2 * x * G[:, 1, 1]
                    - w * G[:, 1, 2] + z * G[:, 2, 0] + w * G[:, 2, 1] - 2 * x * G[:, 2, 2])
    dq[:, 2] = 2 * (-2 * y * G[:, 0, 0] + x * G[:, 0, 1] + w * G[:, 0, 2] + x * G[:, 1, 0]
                    + z * G[:, 1, 2] - w * G[:, 2, 0] + z * G[:, 2, 1] - 2 * y * G[:, 2, 2])
    dq[:, 3] = 2 * (-2 * z * G[:, 0, 0] - w * G[:, 0, 1] + x * G[:, 0, 2] + w * G[:, 1, 0]
                    - 2 * z * G[:, 1, 1] + y * G[:, 1, 2] + x * G[:, 2, 0] + y * G[:, 2, 1])
    # through q = q_raw / |q_raw|
    return (dq - q * np.sum(q * dq, axis=-1, keepdims=True)) / norm


def covariance_from_params(log_scale, rotation) -> np.ndarray:
    """``R diag(exp(log_scale))^2 R^T``; accepts one primitive or a batch."""
    ls = np.asarray(log_scale, dtype=np.float64)
    q = np.asarray(rotation, dtype=np.float64)
    if not (np.all(np.isfinite(ls)) and np.all(np.isfinite(q))):
        raise ValueError("covariance parameters must be finite")
    single = ls.ndim == 1
    ls, q = np.atleast_2d(ls), np.atleast_2d(q)
    if np.any(np.abs(np.linalg.norm(q, axis=-1) - 1.0) > 1e-3):
        raise ValueError("rotation quaternion must have unit norm (within 1e-3)")
    A = quat_to_rotmat(q) * np.exp(ls)[:, None, :]
    cov = A @ np.swapaxes(A, -1, -2)
    return cov[0] if single else cov


def projection_jacobian(camera: Camera, mean_cam, near: float = NEAR_PLANE):
    """Local affine Jacobian of the perspective projection, or ``None`` when culled."""
    x, y, z = (float(v) for v in mean_cam)
    if not z > near:
        return None
    fx, fy = camera.fx, camera.fy
    return np.array([[fx / z, 0.0, -fx * x / (z * z)],
                     [0.0, fy / z, -fy * y / (z * z)]])


def mahalanobis_2d(conic, x, mean2d) -> float:
    """``sqrt(d^T conic d)`` for ``d = x - mean2d``; ``conic`` is 2x2 or (a, b, c)."""
    conic = np.asarray(conic, dtype=np.float64)
    if conic.shape == (3,):
        conic = np.array([[conic[0], conic[1]], [conic[1], conic[2]]])
    d = np.asarray(x, dtype=np.float64) - np.asarray(mean2d, dtype=np.float64)
    if not (np.all(np.isfinite(conic)) and np.all(np.isfinite(d))):
        raise ValueError("non-finite input to mahalanobis_2d")
    return float(np.sqrt(max(d @ conic @ d, 0.0)))


# ---------------------------------------------------------------------------
# screen-space splats


@dataclass
class Splat2D:
    mean2d: np.ndarray
    conic: np.ndarray     # (a, b, c) of [[a, b], [b, c]]
    depth: float
    radius_px: float
    color: np.ndarray
    opacity: float


@dataclass
class Splats2D:
    """Batch of projected splats. Invisible entries carry ``radius == 0``."""

    means2d: np.ndarray   # (N, 2)
    conics: np.ndarray    # (N, 3)
    depths: np.ndarray    # (N,)
    radii: np.ndarray     # (N,)
    colors: np.ndarray    # (N, 3)
    opacities: np.ndarray  # (N,)

    def __len__(self) -> int:
        return len(self.means2d)

    @property
    def visible(self) -> np.ndarray:
        return self.radii > 0

    def astype(self, dtype) -> "Splats2D":
        return Splats2D(*(np.ascontiguousarray(getattr(self, f.name), dtype=dtype) for f in fields(self)))

    def __getitem__(self, i: int) -> Splat2D:
        return Splat2D(self.means2d[i], self.conics[i], float(self.depths[i]),
                       float(self.radii[i]), self.colors[i], float(self.opacities[i]))

    @classmethod
    def from_list(cls, splats: list[Splat2D]) -> "Splats2D":
        if not splats:
            z = np.zeros
            return cls(z((0, 2)), z((0, 3)), z(0), z(0), z((0, 3)), z(0))
        return cls(np.array([s.mean2d for s in splats], dtype=np.float64),
                   np.array([s.conic for s in splats], dtype=np.float64),
                   np.array([s.depth for s in splats], dtype=np.float64),
                   np.array([s.radius_px for s in splats], dtype=np.float64),
                   np.array([s.color for s in splats], dtype=np.float64),
                   np.array([s.opacity for s in splats], dtype=np.float64))


def _cov2d_to_conic(A, B, C, floor):
    A = A + floor
    C = C + floor
    det = A * C - B * B
    if np.any(det <= 0):
        raise FloatingPointError("singular 2D covariance after flooring")
    conics = np.stack([C / det, -B / det, A / det], axis=-1)
    mid = 0.5 * (A + C)
    lam_max = mid + np.sqrt(np.maximum(mid * mid - det, 0.0))
    return conics, lam_max


def _viewport_mask(means2d, radii, width, height):
    return ((means2d[:, 0] + radii >= 0) & (means2d[:, 0] - radii <= width - 1)
            & (means2d[:, 1] + radii >= 0) & (means2d[:, 1] - radii <= height - 1))


@dataclass
class ProjectionCache:
    """Intermediates kept by :func:`project_scene` for :func:`project_scene_vjp`."""

    camera: Camera
    visible: np.ndarray
    t: np.ndarray
    M: np.ndarray
    rot: np.ndarray
    scales: np.ndarray
    cov3d: np.ndarray
    conics: np.ndarray
    dirs: np.ndarray
    dist: np.ndarray
    sh_raw: np.ndarray
    opac: np.ndarray
    extra: dict = field(default_factory=dict)


def project_scene(scene: Scene, camera: Camera, spec: KernelSpec,
                  near: float = NEAR_PLANE, floor: float = COV2D_FLOOR):
    """Project every primitive of ``scene``; returns ``(Splats2D, ProjectionCache)``."""
    n = len(scene)
    Rw, tw = camera.rotation, camera.translation
    means = scene.means.astype(np.float64)
    t = means @ Rw.T + tw
    tz = t[:, 2]
    in_front = tz > near
    safe_z = np.where(in_front, tz, 1.0)
    fx, fy = camera.fx, camera.fy

    J = np.zeros((n, 2, 3))
    J[:, 0, 0] = fx / safe_z
    J[:, 0, 2] = -fx * t[:, 0] / safe_z ** 2
    J[:, 1, 1] = fy / safe_z
    J[:, 1, 2] = -fy * t[:, 1] / safe_z ** 2
    M = J @ Rw

    rot = quat_to_rotmat(scene.quats.astype(np.float64))
    scales = np.exp(scene.log_scales.astype(np.float64))
    A = rot * scales[:, None, :]
    cov3d = A @ np.swapaxes(A, 1, 2)
    cov2d = M @ cov3d @ np.swapaxes(M, 1, 2)
    conics, lam_max = _cov2d_to_conic(cov2d[:, 0, 0], cov2d[:, 0, 1], cov2d[:, 1, 1], floor)
    radii = support_radius(spec) * np.sqrt(lam_max)
    means2d = np.stack([fx * t[:, 0] / safe_z + camera.cx, fy * t[:, 1] / safe_z + camera.cy], axis=-1)

    v = means - camera.center
    dist = np.linalg.norm(v, axis=-1)
    dirs = v / np.maximum(dist, 1e-12)[:, None]
    sh_raw = shmod.eval_sh(scene.sh.astype(np.float64), dirs)
    colors = np.clip(sh_raw, 0.0, 1.0)
    opac = sigmoid(scene.opacity_logits.astype(np.float64))

    visible = in_front & _viewport_mask(means2d, radii, camera.width, camera.height)
    radii = np.where(visible, radii, 0.0)
    splats = Splats2D(means2d, conics, tz, radii, colors, opac)
    cache = ProjectionCache(camera, visible, t, M, rot, scales, cov3d, conics, dirs, dist, sh_raw, opac)
    return splats, cache


def project_primitive(p: Primitive3D, camera: Camera, spec: KernelSpec, view_dir=None,
                      near: float = NEAR_PLANE, floor: float = COV2D_FLOOR) -> Splat2D | None:
    """Project a single primitive; ``None`` when culled.

    ``view_dir`` overrides the camera-to-primitive direction used for SH color.
    """
    scene = Scene.from_primitives([p])
    splats, cache = project_scene(scene, camera, spec, near, floor)
    if not cache.visible[0]:
        return None
    s = splats[0]
    if view_dir is not None:
        d = np.asarray(view_dir, dtype=np.float64)[None]
        s.color = np.clip(shmod.eval_sh(scene.sh.astype(np.float64), d)[0], 0.0, 1.0)
    return s


def _conic_grad_to_cov2d(conics, d_conics):
    """dL/dSigma2D (N, 2, 2) from gradients w.r.t. the conic entries (a, b, c)."""
    n = len(conics)
    Q = np.empty((n, 2, 2))
    Q[:, 0, 0], Q[:, 0, 1], Q[:, 1, 0], Q[:, 1, 1] = conics[:, 0], conics[:, 1], conics[:, 1], conics[:, 2]
    G = np.empty((n, 2, 2))
    G[:, 0, 0] = d_conics[:, 0]
    G[:, 0, 1] = G[:, 1, 0] = 0.5 * d_conics[:, 1]
    G[:, 1, 1] = d_conics[:, 2]
    return -Q @ G @ Q


def project_scene_vjp(scene: Scene, cache: ProjectionCache, d_means2d, d_conics, d_colors, d_opacities):
    """Chain screen-space gradients back to the scene parameters.

    Returns a dict keyed like :meth:`Scene.param_dict`. Culled primitives get zeros.
    """
    cam = cache.camera
    vis = cache.visible.astype(np.float64)
    d_means2d = np.asarray(d_means2d, np.float64) * vis[:, None]
    d_conics = np.asarray(d_conics, np.float64) * vis[:, None]
    d_colors = np.asarray(d_colors, np.float64) * vis[:, None]
    d_opacities = np.asarray(d_opacities, np.float64) * vis

    # color: clip then SH
    unclamped = (cache.sh_raw > 0.0) & (cache.sh_raw < 1.0)
    d_raw = d_colors * unclamped
    B, Jb = shmod.sh_basis(cache.dirs, scene.sh_degree, with_jacobian=True)
    d_sh = B[:, :, None] * d_raw[:, None, :]
    d_dirs = np.einsum("nkd,nkc,nc->nd", Jb, scene.sh.astype(np.float64), d_raw)
    d_v = (d_dirs - cache.dirs * np.sum(cache.dirs * d_dirs, axis=-1, keepdims=True)) \
        / np.maximum(cache.dist, 1e-12)[:, None]

    d_logit = d_opacities * cache.opac * (1.0 - cache.opac)

    # covariance chain
    G2 = _conic_grad_to_cov2d(cache.conics, d_conics)
    M, cov3d = cache.M, cache.cov3d
    d_cov3d = np.swapaxes(M, 1, 2) @ G2 @ M
    d_M = 2.0 * G2 @ M @ cov3d
    Rw = cam.rotation
    d_J = d_M @ Rw.T

    t = cache.t
    z = np.where(cache.visible, t[:, 2], 1.0)
    fx, fy = cam.fx, cam.fy
    d_t = np.zeros_like(t)
    d_t[:, 0] = -fx / z ** 2 * d_J[:, 0, 2] + fx / z * d_means2d[:, 0]
    d_t[:, 1] = -fy / z ** 2 * d_J[:, 1, 2] + fy / z * d_means2d[:, 1]
    d_t[:, 2] = (-fx / z ** 2 * d_J[:, 0, 0] + 2 * fx * t[:, 0] / z ** 3 * d_J[:, 0, 2]
                 - fy / z ** 2 * d_J[:, 1, 1] + 2 * fy * t[:, 1] / z ** 3 * d_J[:, 1, 2]
                 - fx * t[:, 0] / z ** 2 * d_means2d[:, 0] - fy * t[:, 1] / z ** 2 * d_means2d[:, 1])
    d_means = d_t @ Rw + d_v

    A = cache.rot * cache.scales[:, None, :]
    d_A = 2.0 * d_cov3d @ A
    d_scales = np.sum(cache.rot * d_A, axis=1)
    d_log_scales = d_scales * cache.scales
    d_rot = d_A * cache.scales[:, None, :]
    d_quats = rotmat_vjp(scene.quats.astype(np.float64), d_rot)

    return {"means": d_means, "log_scales": d_log_scales, "quats": d_quats,
            "opacity_logits": d_logit, "sh": d_sh}


# ---------------------------------------------------------------------------
# 2D-native splats


def _rot2(angles):
    c, s = np.cos(angles), np.sin(angles)
    R = np.empty(angles.shape + (2, 2))
    R[..., 0, 0], R[..., 0, 1], R[..., 1, 0], R[..., 1, 1] = c, -s, s, c
    return R


def project_scene2d(scene: Scene2D, width: int, height: int, spec: KernelSpec,
                    floor: float = COV2D_FLOOR):
    """Screen-space splats for 2D-native primitives; returns ``(Splats2D, cache dict)``."""
    n = len(scene)
    rot = _rot2(scene.angles.astype(np.float64))
    scales = np.exp(scene.log_scales.astype(np.float64))
    A = rot * scales[:, None, :]
    cov = A @ np.swapaxes(A, 1, 2)
    conics, lam_max = _cov2d_to_conic(cov[:, 0, 0], cov[:, 0, 1], cov[:, 1, 1], floor)
    radii = support_radius(spec) * np.sqrt(lam_max)
    means2d = scene.means.astype(np.float64)
    visible = _viewport_mask(means2d, radii, width, height)
    radii = np.where(visible, radii, 0.0)
    colors_raw = scene.colors.astype(np.float64)
    opac = sigmoid(scene.opacity_logits.astype(np.float64))
    splats = Splats2D(means2d.copy(), conics, np.arange(n, dtype=np.float64), radii,
                      np.clip(colors_raw, 0.0, 1.0), opac)
    cache = {"rot": rot, "scales": scales, "conics": conics, "visible": visible,
             "colors_raw": colors_raw, "opac": opac}
    return splats, cache


def project_scene2d_vjp(scene: Scene2D, cache: dict, d_means2d, d_conics, d_colors, d_opacities):
    vis = cache["visible"].astype(np.float64)
    d_means2d = np.asarray(d_means2d, np.float64) * vis[:, None]
    d_conics = np.asarray(d_conics, np.float64) * vis[:, None]
    raw = cache["colors_raw"]
    d_colors = np.asarray(d_colors, np.float64) * vis[:, None] * ((raw > 0.0) & (raw < 1.0))
    opac = cache["opac"]
    d_logit = np.asarray(d_opacities, np.float64) * vis * opac * (1.0 - opac)

    G2 = _conic_grad_to_cov2d(cache["conics"], d_conics)
    rot, scales = cache["rot"], cache["scales"]
    A = rot * scales[:, None, :]
    d_A = 2.0 * G2 @ A
    d_log_scales = np.sum(rot * d_A, axis=1) * scales
    d_rot = d_A * scales[:, None, :]
    c, s = rot[:, 0, 0], rot[:, 1, 0]
    d_angles = (d_rot[:, 0, 0] * -s + d_rot[:, 0, 1] * -c + d_rot[:, 1, 0] * c + d_rot[:, 1, 1] * -s)
    return {"means": d_means2d, "log_scales": d_log_scales, "angles": d_angles,
            "opacity_logits": d_logit, "colors": d_colors}
