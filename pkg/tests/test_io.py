import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from linsplat import io as lio
from linsplat import patterns as pat
from linsplat.geometry import Camera, Scene, look_at
from linsplat.patterns import MIN_SIZE, TESTCARD_BARS, checker, circles, generate_pattern, radial, stripes
from linsplat.trainer import orbit_cameras, random_scene3d


def assert_scenes_equal(a: Scene, b: Scene):
    for k, v in a.param_dict().items():
        w = getattr(b, k)
        assert v.shape == w.shape, k
        assert v.tobytes() == w.astype(v.dtype).tobytes(), k


@pytest.mark.parametrize("degree", [0, 1, 3])
def test_ply_roundtrip_bit_exact(tmp_path, degree):
    scene = random_scene3d(100, np.random.default_rng(degree), sh_degree=degree).astype(np.float32)
    scene.sh[:, 1:] = np.random.default_rng(1).normal(size=scene.sh[:, 1:].shape)
    lio.save_ply(scene, tmp_path / "s.ply")
    assert_scenes_equal(scene, lio.load_ply(tmp_path / "s.ply"))


def test_ply_roundtrip_float64(tmp_path):
    scene = random_scene3d(10, np.random.default_rng(0))
    lio.save_ply(scene, tmp_path / "s.ply", dtype="float64")
    back = lio.load_ply(tmp_path / "s.ply")
    assert back.means.dtype == np.float64
    assert_scenes_equal(scene, back)


def test_ply_empty_scene(tmp_path):
    lio.save_ply(Scene.empty(), tmp_path / "e.ply")
    assert b"element vertex 0" in (tmp_path / "e.ply").read_bytes()
    assert len(lio.load_ply(tmp_path / "e.ply")) == 0


def test_ply_layout(tmp_path):
    lio.save_ply(random_scene3d(2, np.random.default_rng(0), sh_degree=1), tmp_path / "s.ply")
    header = (tmp_path / "s.ply").read_bytes().split(b"end_header")[0].decode()
    props = [ln.split()[-1] for ln in header.splitlines() if ln.startswith("property")]
    assert props == (["x", "y", "z", "f_dc_0", "f_dc_1", "f_dc_2"] + [f"f_rest_{i}" for i in range(9)]
                     + ["opacity", "scale_0", "scale_1", "scale_2", "rot_0", "rot_1", "rot_2", "rot_3"])
    assert "format binary_little_endian 1.0" in header


def _strip_property(path, name):
    data = path.read_bytes()
    head, body = data.split(b"end_header\n", 1)
    lines = [ln for ln in head.decode().splitlines() if not ln.endswith(" " + name)]
    path.write_bytes(("\n".join(lines) + "\nend_header\n").encode() + body)


def test_ply_missing_property(tmp_path):
    p = tmp_path / "s.ply"
    lio.save_ply(random_scene3d(3, np.random.default_rng(0)), p)
    _strip_property(p, "rot_3")
    with pytest.raises(lio.FormatError, match="missing property rot_3"):
        lio.load_ply(p)


def test_ply_rejects_ascii_and_big_endian(tmp_path):
    p = tmp_path / "s.ply"
    lio.save_ply(random_scene3d(3, np.random.default_rng(0)), p)
    data = p.read_bytes()
    p.write_bytes(data.replace(b"binary_little_endian", b"binary_big_endian"))
    with pytest.raises(lio.FormatError, match="binary_little_endian"):
        lio.load_ply(p)
    p.write_bytes(b"not a ply")
    with pytest.raises(lio.FormatError):
        lio.load_ply(p)


def test_ply_truncated(tmp_path):
    p = tmp_path / "s.ply"
    lio.save_ply(random_scene3d(3, np.random.default_rng(0)), p)
    p.write_bytes(p.read_bytes()[:-10])
    with pytest.raises(lio.FormatError, match="truncated"):
        lio.load_ply(p)


# ---------------------------------------------------------------------------
# images


def test_quantize_round_half_up():
    v = np.array([0.0, 0.5 / 255, 1.5 / 255, 1.0, 1.2, -0.3])
    assert lio.quantize(v).tolist() == [0, 1, 2, 255, 255, 0]


@given(arrays(np.uint8, (5, 7, 3)))
def test_png_roundtrip(tmp_path_factory, a):
    p = tmp_path_factory.mktemp("png") / "a.png"
    lio.save_png(a, p)
    assert np.array_equal(lio.load_png(p, as_float=False), a)
    assert np.array_equal(lio.quantize(lio.load_png(p)), a)


def test_raw_roundtrip(tmp_path):
    t = np.random.default_rng(0).random((6, 9)).astype(np.float32)
    lio.save_raw(t, tmp_path / "t.raw")
    data = (tmp_path / "t.raw").read_bytes()
    assert data[:4] == b"LSTR" and len(data) == 12 + 4 * 54
    assert np.array_equal(lio.load_raw(tmp_path / "t.raw"), t)


# ---------------------------------------------------------------------------
# cameras and manifests


def test_camera_rejects_non_orthonormal():
    d = Camera(look_at([0, 0, -3], [0, 0, 0]), 10, 10, 5, 5, 10, 10).to_dict()
    d["world_to_camera"][0] *= 1.01
    with pytest.raises(lio.FormatError, match="orthonormal"):
        lio.camera_from_dict(d)
    d = Camera(np.eye(4), 10, 10, 5, 5, 10, 10).to_dict()
    d["world_to_camera"][0] = -1.0  # reflection
    with pytest.raises(lio.FormatError, match="orthonormal"):
        lio.camera_from_dict(d)
    d = Camera(np.eye(4), 10, 10, 5, 5, 10, 10).to_dict()
    del d["fx"]
    with pytest.raises(lio.FormatError, match="fx"):
        lio.camera_from_dict(d)


def test_camera_tolerance_accepts_small_error():
    d = Camera(np.eye(4), 10, 10, 5, 5, 10, 10).to_dict()
    d["world_to_camera"][0] += 2e-5
    lio.camera_from_dict(d)


def _write_views(tmp_path, n=3, size=16):
    cams = orbit_cameras(n, 3.0, size)
    names = []
    for i in range(n):
        names.append(f"v{i}.png")
        lio.save_png(np.full((size, size, 3), i / n), tmp_path / names[-1])
    return cams, names


def test_manifest_roundtrip(tmp_path):
    cams, names = _write_views(tmp_path)
    lio.save_ply(random_scene3d(5, np.random.default_rng(0)), tmp_path / "p.ply")
    lio.save_manifest(tmp_path / "m.json", cams, names, points="p.ply", extent_override=2.0)
    m = lio.load_manifest(tmp_path / "m.json")
    assert len(m.cameras) == 3 and len(m.images) == 3 and len(m.points) == 5
    assert m.extent_override == 2.0 and m.random_init is None
    assert np.allclose(m.cameras[1].world_to_camera, cams[1].world_to_camera)


def test_manifest_errors(tmp_path):
    cams, names = _write_views(tmp_path)
    lio.save_manifest(tmp_path / "m.json", [], [])
    with pytest.raises(lio.FormatError, match="empty"):
        lio.load_manifest(tmp_path / "m.json")
    lio.save_manifest(tmp_path / "m.json", cams, ["v0.png", "v1.png", "nope.png"])
    with pytest.raises(lio.FormatError, match="not found"):
        lio.load_manifest(tmp_path / "m.json")
    small = orbit_cameras(3, 3.0, 8)
    lio.save_manifest(tmp_path / "m.json", small, names)
    with pytest.raises(lio.FormatError, match="camera says"):
        lio.load_manifest(tmp_path / "m.json")
    (tmp_path / "bad.json").write_text("{")
    with pytest.raises(lio.FormatError):
        lio.load_manifest(tmp_path / "bad.json")


def test_run_json_and_jsonl(tmp_path):
    p = lio.write_run_json(tmp_path / "r", {"seed": np.int64(3), "a": np.arange(2)})
    assert json.loads(open(p).read()) == {"seed": 3, "a": [0, 1]}
    log = lio.JsonlLog(tmp_path / "l.jsonl")
    log.write(step=1, loss=0.5)
    log.write(step=2, loss=np.float32(0.25))
    rows = [json.loads(ln) for ln in (tmp_path / "l.jsonl").read_text().splitlines()]
    assert rows == [{"step": 1, "loss": 0.5}, {"step": 2, "loss": 0.25}]


# ---------------------------------------------------------------------------
# patterns


def test_stripes_phase():
    s = stripes(128, 8)
    assert s[0, 0, 0] == 1.0 and s[0, 4, 0] == 0.0 and s[0, 8, 0] == 1.0
    assert np.all(s[:, 3] == s[0, 3])


def test_checker_parity():
    c = checker(64, 4)
    y, x = np.mgrid[0:64, 0:64]
    assert np.array_equal(c[:, :, 0], ((x // 4 + y // 4) % 2).astype(float))


def test_testcard_bars():
    card = pat.testcard(256)
    for (x, y), color in zip(pat.testcard_bar_centers(256), TESTCARD_BARS):
        assert tuple(card[y, x]) == color


@pytest.mark.parametrize("name", ["stripes4", "stripes8", "stripes16", "checker4", "checker8",
                                  "checker16", "circles", "radial", "testcard"])
def test_patterns_pure_and_in_range(name):
    a, b = generate_pattern(name, 64), generate_pattern(name, 64)
    assert a.tobytes() == b.tobytes()
    assert a.shape == (64, 64, 3) and a.min() >= 0 and a.max() <= 1


def test_pattern_errors():
    with pytest.raises(ValueError, match="unknown pattern"):
        generate_pattern("zigzag")
    with pytest.raises(ValueError):
        generate_pattern("stripes", MIN_SIZE - 1)
    with pytest.raises(ValueError):
        generate_pattern("radial3")
    with pytest.raises(ValueError):
        stripes(64, 3)


def test_circles_and_radial():
    c = circles(64, 6)
    assert c[32, 32, 0] == 1.0
    r = radial(64)
    assert r[0, 0, 2] > r[32, 32, 2]


@given(st.integers(MIN_SIZE, 80), st.sampled_from([2, 4, 8, 16]))
def test_stripes_property(size, period):
    s = stripes(size, period)[0, :, 0]
    x = np.arange(size)
    assert np.array_equal(s, ((x // (period // 2)) % 2 == 0).astype(float))
