"""File formats: primitive PLY, PNG, camera/scene manifests, raw buffers, run records."""
from __future__ import annotations

import json
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .geometry import Camera, Scene
from .sh import num_coeffs

ORTHO_TOL = 1e-4
RAW_MAGIC = b"LSTR"


class FormatError(ValueError):
    """Malformed or inconsistent input file."""


# ---------------------------------------------------------------------------
# PLY


def ply_property_names(sh_degree: int) -> list[str]:
    n_rest = 3 * (num_coeffs(sh_degree) - 1)
    return (["x", "y", "z", "f_dc_0", "f_dc_1", "f_dc_2"]
            + [f"f_rest_{i}" for i in range(n_rest)]
            + ["opacity", "scale_0", "scale_1", "scale_2", "rot_0", "rot_1", "rot_2", "rot_3"])


_PLY_TYPES = {"float": "<f4", "float32": "<f4", "double": "<f8", "float64": "<f8"}


def save_ply(scene: Scene, path, dtype: str = "float32") -> None:
    """Binary little-endian PLY, one vertex per primitive.

    ``f_rest_*`` are stored channel-major (all R coefficients, then G, then B),
    the layout third-party splat viewers expect.
    """
    if dtype not in ("float32", "float64"):
        raise ValueError("PLY dtype must be float32 or float64")
    ply_t = "float" if dtype == "float32" else "double"
    names = ply_property_names(scene.sh_degree)
    n = len(scene)
    rest = scene.sh[:, 1:, :].transpose(0, 2, 1).reshape(n, 3 * (scene.sh.shape[1] - 1))
    cols = np.concatenate([scene.means, scene.sh[:, 0, :], rest, scene.opacity_logits[:, None],
                           scene.log_scales, scene.quats], axis=1) if n else np.zeros((0, len(names)))
    header = ["ply", "format binary_little_endian 1.0", f"element vertex {n}"]
    header += [f"property {ply_t} {p}" for p in names]
    header.append("end_header")
    with open(path, "wb") as f:
        f.write(("\n".join(header) + "\n").encode("ascii"))
        f.write(np.ascontiguousarray(cols, dtype=_PLY_TYPES[dtype]).tobytes())


def load_ply(path) -> Scene:
    """Read a PLY written by :func:`save_ply` (or any file with the same vertex layout)."""
    with open(path, "rb") as f:
        data = f.read()
    end = data.find(b"end_header\n")
    if not data.startswith(b"ply") or end < 0:
        raise FormatError(f"{path}: not a PLY file (missing ply magic or end_header)")
    lines = data[:end].decode("ascii", errors="replace").splitlines()
    body = data[end + len(b"end_header\n"):]
    count, props, fmt, element = None, [], None, None
    for ln in lines[1:]:
        tok = ln.split()
        if not tok or tok[0] in ("comment", "obj_info"):
            continue
        if tok[0] == "format":
            fmt = tok[1]
        elif tok[0] == "element":
            element = tok[1]
            if element == "vertex":
                count = int(tok[2])
        elif tok[0] == "property" and element == "vertex":
            if tok[1] == "list":
                raise FormatError(f"{path}: unsupported list property {tok[-1]}")
            if tok[1] not in _PLY_TYPES:
                raise FormatError(f"{path}: unsupported type {tok[1]} for property {tok[2]}")
            props.append((tok[2], _PLY_TYPES[tok[1]]))
    if fmt != "binary_little_endian":
        raise FormatError(f"{path}: expected binary_little_endian format, got {fmt}")
    if count is None:
        raise FormatError(f"{path}: missing vertex element")
    names = [p for p, _ in props]
    if len(set(names)) != len(names):
        raise FormatError(f"{path}: duplicate vertex property")
    n_rest = sum(1 for p in names if p.startswith("f_rest_"))
    if n_rest % 3:
        raise FormatError(f"{path}: f_rest property count {n_rest} is not a multiple of 3")
    k = n_rest // 3 + 1
    try:
        degree = {1: 0, 4: 1, 9: 2, 16: 3}[k]
    except KeyError:
        raise FormatError(f"{path}: {n_rest} f_rest properties do not match an SH degree") from None
    for p in ply_property_names(degree):
        if p not in names:
            raise FormatError(f"missing property {p}")
    dt = np.dtype([(p, t) for p, t in props])
    if len(body) < count * dt.itemsize:
        raise FormatError(f"{path}: truncated vertex data ({len(body)} bytes for {count} vertices)")
    rec = np.frombuffer(body, dtype=dt, count=count)
    out_t = np.result_type(*[np.dtype(t) for _, t in props])

    def cols(ps):
        return np.stack([rec[p].astype(out_t) for p in ps], axis=1) if count else np.zeros((0, len(ps)), out_t)

    sh = np.zeros((count, k, 3), out_t)
    sh[:, 0, :] = cols(["f_dc_0", "f_dc_1", "f_dc_2"])
    if k > 1:
        rest = cols([f"f_rest_{i}" for i in range(n_rest)])
        sh[:, 1:, :] = rest.reshape(count, 3, k - 1).transpose(0, 2, 1)
    return Scene(cols(["x", "y", "z"]), cols(["scale_0", "scale_1", "scale_2"]),
                 cols(["rot_0", "rot_1", "rot_2", "rot_3"]), cols(["opacity"])[:, 0], sh)


# ---------------------------------------------------------------------------
# images


def quantize(img: np.ndarray) -> np.ndarray:
    """Float [0, 1] image to uint8 with round-half-up: ``floor(v * 255 + 0.5)``."""
    a = np.clip(np.asarray(img, dtype=np.float64), 0.0, 1.0)
    return np.floor(a * 255.0 + 0.5).astype(np.uint8)


def save_png(img: np.ndarray, path) -> None:
    a = np.asarray(img)
    if a.dtype != np.uint8:
        a = quantize(a)
    if a.ndim == 2:
        a = np.repeat(a[:, :, None], 3, axis=2)
    Image.fromarray(np.ascontiguousarray(a[:, :, :3])).save(path)


def load_png(path, as_float: bool = True) -> np.ndarray:
    try:
        with Image.open(path) as im:
            a = np.asarray(im.convert("RGB"))
    except (OSError, ValueError) as e:
        raise FormatError(f"cannot read image {path}: {e}") from e
    return a.astype(np.float64) / 255.0 if as_float else a


def save_raw(buf: np.ndarray, path) -> None:
    """Float buffer dump: magic ``LSTR``, uint32 width, uint32 height, float32 row-major data."""
    a = np.asarray(buf, dtype="<f4")
    if a.ndim != 2:
        raise ValueError("raw dump expects an H x W buffer")
    h, w = a.shape
    with open(path, "wb") as f:
        f.write(RAW_MAGIC + np.array([w, h], dtype="<u4").tobytes() + a.tobytes())


def load_raw(path) -> np.ndarray:
    data = Path(path).read_bytes()
    if data[:4] != RAW_MAGIC:
        raise FormatError(f"{path}: bad raw buffer magic")
    w, h = np.frombuffer(data[4:12], dtype="<u4")
    return np.frombuffer(data[12:], dtype="<f4", count=int(w) * int(h)).reshape(int(h), int(w))


# ---------------------------------------------------------------------------
# cameras and manifests


def camera_from_dict(d: dict, where: str = "camera") -> Camera:
    try:
        W = np.asarray(d["world_to_camera"], dtype=np.float64)
        fx, fy, cx, cy = (float(d[k]) for k in ("fx", "fy", "cx", "cy"))
        width, height = int(d["width"]), int(d["height"])
    except KeyError as e:
        raise FormatError(f"{where}: missing field {e.args[0]}") from None
    if W.size != 16:
        raise FormatError(f"{where}: world_to_camera needs 16 values, got {W.size}")
    W = W.reshape(4, 4)
    R = W[:3, :3]
    err = float(np.abs(R @ R.T - np.eye(3)).max())
    if err > ORTHO_TOL or abs(np.linalg.det(R) - 1.0) > ORTHO_TOL:
        raise FormatError(f"{where}: rotation is not orthonormal (error {err:.2e})")
    if not np.allclose(W[3], [0, 0, 0, 1]):
        raise FormatError(f"{where}: last row of world_to_camera must be 0 0 0 1")
    try:
        return Camera(W, fx, fy, cx, cy, width, height)
    except ValueError as e:
        raise FormatError(f"{where}: {e}") from None


def load_camera(path) -> Camera:
    with open(path) as f:
        d = json.load(f)
    return camera_from_dict(d, str(path))


def save_camera(cam: Camera, path) -> None:
    with open(path, "w") as f:
        json.dump(cam.to_dict(), f, indent=1)


@dataclass
class SceneManifest:
    cameras: list
    images: list
    image_paths: list
    points: Scene | None = None
    random_init: int | None = None
    extent_override: float | None = None


def load_manifest(path, load_images: bool = True) -> SceneManifest:
    """Parse a JSON scene manifest; paths are relative to the manifest's directory."""
    path = Path(path)
    try:
        d = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as e:
        raise FormatError(f"cannot read manifest {path}: {e}") from e
    root = path.parent
    cams_d = d.get("cameras")
    if not cams_d:
        raise FormatError(f"{path}: camera list is empty")
    cams, imgs, paths = [], [], []
    for i, cd in enumerate(cams_d):
        cam = camera_from_dict(cd, f"{path}: camera {i}")
        cams.append(cam)
        ip = cd.get("image_path")
        if ip is None:
            raise FormatError(f"{path}: camera {i}: missing field image_path")
        full = root / ip
        paths.append(str(full))
        if load_images:
            if not full.exists():
                raise FormatError(f"{path}: camera {i}: image {full} not found")
            img = load_png(full)
            if img.shape[:2] != (cam.height, cam.width):
                raise FormatError(f"{path}: camera {i}: image is {img.shape[1]}x{img.shape[0]}, "
                                  f"camera says {cam.width}x{cam.height}")
            imgs.append(img)
    points = None
    if d.get("points"):
        pp = root / d["points"]
        if not pp.exists():
            raise FormatError(f"{path}: seed point file {pp} not found")
        points = load_ply(pp)
    random_init = d.get("random_init")
    if random_init is not None:
        random_init = int(random_init)
    ext = d.get("extent_override")
    return SceneManifest(cams, imgs, paths, points, random_init, None if ext is None else float(ext))


def save_manifest(path, cameras: list, image_paths: list, points: str | None = None,
                  random_init: int | None = None, extent_override: float | None = None) -> None:
    d = {"cameras": [dict(c.to_dict(), image_path=str(p)) for c, p in zip(cameras, image_paths)]}
    if points is not None:
        d["points"] = points
    if random_init is not None:
        d["random_init"] = random_init
    if extent_override is not None:
        d["extent_override"] = extent_override
    Path(path).write_text(json.dumps(d, indent=1))


# ---------------------------------------------------------------------------
# run records


def write_run_json(out_dir, record: dict) -> str:
    os.makedirs(out_dir, exist_ok=True)
    p = os.path.join(out_dir, "run.json")
    with open(p, "w") as f:
        json.dump(record, f, indent=1, sort_keys=True, default=_json_default)
    return p


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


class JsonlLog:
    """Append-only JSON-lines event log; ``path=None`` keeps events in memory only."""

    def __init__(self, path=None):
        self.path = path
        self.events: list[dict] = []
        if path is not None:
            os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
            open(path, "w").close()

    def write(self, **event) -> None:
        self.events.append(event)
        if self.path is not None:
            with open(self.path, "a") as f:
                f.write(json.dumps(event, default=_json_default) + "\n")
