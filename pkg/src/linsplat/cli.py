"""Command-line entry point: ``python -m linsplat <command> ...``.

Exit codes: 0 success, 1 configuration or usage error, 2 runtime failure.
Every command writes ``run.json`` with its fully resolved settings.
"""
from __future__ import annotations

import argparse
import json
import os
import platform
import sys
import time
from dataclasses import replace

import numpy as np

from . import io as lio
from . import rasterizer as rz
from .densify import DensifyThresholds
from .kernel import KernelFamily, KernelSpec
from .trainer import PRESETS_3D, TrainConfig


class ConfigError(Exception):
    """Bad flags, config file or inputs; maps to exit code 1."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise ConfigError(f"{self.prog}: {message}")


def _csv(s: str) -> list[str]:
    return [t.strip() for t in s.split(",") if t.strip()]


def _on_off(s: str) -> bool:
    if s.lower() in ("on", "true", "1", "yes"):
        return True
    if s.lower() in ("off", "false", "0", "no"):
        return False
    raise argparse.ArgumentTypeError(f"expected on or off, got {s!r}")


TAU_FLAGS = {
    "tau_grad": "grad_threshold",
    "tau_grow2d": "grow_scale2d",
    "tau_grow3d": "grow_scale3d",
    "tau_prune2d": "prune_scale2d",
    "tau_prune3d": "prune_scale3d",
    "tau_opacity": "prune_opacity",
}


def _kernel_args(p, default=None):
    p.add_argument("--kernel", default=default, help="gaussian|laplacian|cosine|quadratic|linear")
    p.add_argument("--lambda", dest="lam", type=float, help="distance alignment factor (default per family)")
    p.add_argument("--gaussian-cutoff", type=float, help="truncation of unbounded kernels, in aligned units")


def _render_args(p):
    p.add_argument("--tile-size", type=int)
    p.add_argument("--dtype", choices=["float32", "float64"])
    p.add_argument("--parallel", action="store_true", help="tile-parallel kernels (non-deterministic order)")


def _train_args(p):
    p.add_argument("--config", help="JSON config; flags override its values")
    _kernel_args(p)
    _render_args(p)
    p.add_argument("--ags", type=_on_off, help="adaptive gradient scaling on|off")
    p.add_argument("--ags-scope", choices=list(rz.AGS_SCOPES))
    p.add_argument("--ags-distance", choices=list(rz.AGS_DISTANCES))
    p.add_argument("--iters", type=int, dest="iterations")
    p.add_argument("--seed", type=int)
    p.add_argument("--snapshot-every", type=int)
    p.add_argument("--out", default="runs/latest", help="output directory")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="linsplat", description="Splat rasterization with swappable kernels.")
    sub = ap.add_subparsers(dest="command", parser_class=_Parser, required=True)

    p = sub.add_parser("fit2d", help="fit 2D splats to an image or a procedural pattern")
    _train_args(p)
    p.add_argument("--target", required=True, help="PNG path or pattern:NAME (e.g. pattern:stripes8)")
    p.add_argument("--size", type=int, default=128, help="pattern size in pixels")
    p.add_argument("--budget", type=int, dest="splat_budget")

    p = sub.add_parser("fit3d", help="multi-view fit from a JSON scene manifest")
    _train_args(p)
    p.add_argument("--scene", required=True, help="scene manifest (JSON)")
    p.add_argument("--preset", choices=sorted(PRESETS_3D))
    p.add_argument("--densify", type=_on_off, help="adaptive density control on|off")
    p.add_argument("--densify-preset", choices=["3dgs", "3dls"])
    for flag in TAU_FLAGS:
        p.add_argument("--" + flag.replace("_", "-"), type=float, dest=flag)
    p.add_argument("--sh-degree", type=int)

    p = sub.add_parser("study", help="fit every (pattern, kernel) pair and tabulate")
    _train_args(p)
    p.add_argument("--patterns", type=_csv, default=["stripes8", "checker8", "circles", "testcard"])
    p.add_argument("--kernels", type=_csv, default=["gaussian", "laplacian", "cosine", "quadratic", "linear"])
    p.add_argument("--size", type=int, default=128)
    p.add_argument("--budget", type=int, dest="splat_budget")
    p.add_argument("--gaussian-ags", action="store_true", help="apply AGS to the Gaussian rows too")

    p = sub.add_parser("render", help="render a PLY scene from a camera")
    p.add_argument("--ply", required=True)
    p.add_argument("--camera", required=True, help="camera JSON")
    _kernel_args(p, default="linear")
    _render_args(p)
    p.add_argument("--background", type=float, nargs=3, default=(0.0, 0.0, 0.0))
    p.add_argument("--out", required=True, help="output PNG")
    p.add_argument("--transmittance", help="also dump final transmittance as a raw float buffer")

    p = sub.add_parser("eval", help="PSNR/SSIM of a prediction against ground truth")
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--out", default=".", help="directory for run.json")

    p = sub.add_parser("check-grads", help="analytic vs finite-difference gradient table")
    p.add_argument("--kernel", default="gaussian")
    p.add_argument("--scenes", type=int, default=20)
    p.add_argument("--splats", type=int, default=16)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=".", help="directory for run.json")

    p = sub.add_parser("bench", help="forward/backward wall time per kernel")
    p.add_argument("--splats", type=int, default=100_000)
    p.add_argument("--kernels", type=_csv, default=["gaussian", "linear"])
    p.add_argument("--size", type=int, default=256)
    p.add_argument("--repeats", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    _render_args(p)
    p.add_argument("--out", default=".", help="directory for run.json")
    return ap


# ---------------------------------------------------------------------------
# config resolution


def _kernel_from_args(args, base: KernelSpec | None = None) -> KernelSpec:
    if args.kernel is None and base is not None:
        family, lam, cutoff = base.family, base.lam, base.gaussian_cutoff
    else:
        family = KernelFamily.parse(args.kernel or "linear")
        same = base is not None and base.family == family
        lam = base.lam if same else None
        cutoff = base.gaussian_cutoff if same else 3.0
    if args.lam is not None:
        lam = args.lam
    if args.gaussian_cutoff is not None:
        cutoff = args.gaussian_cutoff
    return KernelSpec(family, lam, cutoff)


def _settings_overrides(args) -> dict:
    kw = {}
    if args.tile_size is not None:
        kw["tile_size"] = args.tile_size
    if args.dtype is not None:
        kw["dtype"] = args.dtype
    if args.parallel:
        kw["deterministic"] = False
    return kw


def resolve_config(args, command: str) -> TrainConfig:
    """Defaults, then the JSON config file, then explicit flags."""
    base = {}
    if command in ("fit2d", "study"):
        base = {"densify": False}
    if getattr(args, "config", None):
        try:
            with open(args.config) as f:
                base.update(json.load(f))
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigError(f"cannot read config {args.config}: {e}") from e
    if command == "fit3d" and args.preset:
        base.update(PRESETS_3D[args.preset])
    cfg = TrainConfig.from_dict(base)
    kw = {"kernel": _kernel_from_args(args, cfg.kernel), **_settings_overrides(args)}
    for name in ("ags", "ags_scope", "ags_distance", "iterations", "seed", "snapshot_every",
                 "splat_budget", "densify", "sh_degree"):
        v = getattr(args, name, None)
        if v is not None:
            kw[name] = v
    if command == "fit3d":
        th = cfg.thresholds
        if args.densify_preset:
            th = DensifyThresholds.preset(args.densify_preset)
        tau = {field: getattr(args, flag) for flag, field in TAU_FLAGS.items()
               if getattr(args, flag) is not None}
        kw["thresholds"] = replace(th, **tau)
    return replace(cfg, **kw)


def _load_target(spec: str, size: int) -> tuple[np.ndarray, str]:
    from .patterns import generate_pattern

    if spec.startswith("pattern:"):
        return generate_pattern(spec[len("pattern:"):], size), spec
    if not os.path.exists(spec):
        raise ConfigError(f"target image {spec} not found")
    return lio.load_png(spec), spec


def _record(args, command: str, **extra) -> dict:
    return {"command": command, "argv": getattr(args, "_argv", []), "python": platform.python_version(),
            "numpy": np.__version__, **extra}


# ---------------------------------------------------------------------------
# commands


def cmd_fit2d(args) -> int:
    from .trainer import fit2d, flatten_scene2d

    cfg = resolve_config(args, "fit2d")
    target, tname = _load_target(args.target, args.size)
    os.makedirs(args.out, exist_ok=True)
    log = lio.JsonlLog(os.path.join(args.out, "log.jsonl"))
    t0 = time.perf_counter()
    res = fit2d(target, cfg, log)
    secs = time.perf_counter() - t0
    lio.save_png(res.image, os.path.join(args.out, "recon.png"))
    lio.save_png(target, os.path.join(args.out, "target.png"))
    lio.save_ply(flatten_scene2d(res.scene), os.path.join(args.out, "final.ply"))
    lio.write_run_json(args.out, _record(args, "fit2d", config=cfg.to_dict(), target=tname,
                                         psnr=res.psnr, ssim=res.ssim, seconds=secs))
    print(f"fit2d {tname} kernel={cfg.kernel.family.cli_name} lambda={cfg.kernel.lam} ags={cfg.ags} "
          f"PSNR {res.psnr:.2f} dB SSIM {res.ssim:.4f} ({secs:.1f} s)")
    return 0


def cmd_fit3d(args) -> int:
    from .trainer import fit3d

    cfg = resolve_config(args, "fit3d")
    manifest = lio.load_manifest(args.scene)
    os.makedirs(args.out, exist_ok=True)
    log = lio.JsonlLog(os.path.join(args.out, "log.jsonl"))
    t0 = time.perf_counter()
    res = fit3d(manifest, cfg, args.out, log)
    secs = time.perf_counter() - t0
    lio.save_png(res.image, os.path.join(args.out, "heldout.png"))
    lio.write_run_json(args.out, _record(args, "fit3d", config=cfg.to_dict(), scene=args.scene,
                                         test_psnr=res.psnr, test_ssim=res.ssim,
                                         splats=len(res.scene), seconds=secs,
                                         test_views=res.extra["test_views"]))
    print(f"fit3d kernel={cfg.kernel.family.cli_name} splats={len(res.scene)} "
          f"held-out PSNR {res.psnr:.2f} dB SSIM {res.ssim:.4f} ({secs:.1f} s)")
    return 0


def cmd_study(args) -> int:
    from .trainer import kernel_study

    cfg = resolve_config(args, "study")
    rows = kernel_study(args.patterns, args.kernels, cfg, args.out, size=args.size,
                        gaussian_ags=args.gaussian_ags)
    lio.write_run_json(args.out, _record(args, "study", config=cfg.to_dict(), patterns=args.patterns,
                                         kernels=args.kernels, size=args.size, rows=rows))
    for r in rows:
        print(f"{r['pattern']:<12} {r['kernel']:<10} PSNR {r['psnr']:7.2f}  SSIM {r['ssim']:.4f}")
    return 0


def cmd_render(args) -> int:
    from .gradients import render_scene

    spec = _kernel_from_args(args)
    settings = rz.RenderSettings(background=tuple(args.background), **_settings_overrides(args))
    scene = lio.load_ply(args.ply)
    cam = lio.load_camera(args.camera)
    out, _, _ = render_scene(scene, cam, spec, settings)
    out_dir = os.path.dirname(os.path.abspath(args.out))
    os.makedirs(out_dir, exist_ok=True)
    lio.save_png(out.image, args.out)
    if args.transmittance:
        lio.save_raw(out.final_transmittance, args.transmittance)
    lio.write_run_json(out_dir, _record(args, "render", kernel=spec.to_dict(), ply=args.ply,
                                        camera=cam.to_dict(), settings=settings.to_dict(),
                                        output=args.out))
    print(f"rendered {len(scene)} primitives to {args.out}")
    return 0


def cmd_eval(args) -> int:
    from .losses import psnr, ssim

    pred, gt = lio.load_png(args.pred), lio.load_png(args.gt)
    if pred.shape != gt.shape:
        raise ConfigError(f"image sizes differ: {pred.shape[:2]} vs {gt.shape[:2]}")
    p, s = psnr(pred, gt), ssim(pred, gt)
    lio.write_run_json(args.out, _record(args, "eval", pred=args.pred, gt=args.gt, psnr=p, ssim=s,
                                         lpips=None))
    print(f"PSNR {p:.3f} dB  SSIM {s:.5f}  LPIPS n/a")
    return 0


def cmd_check_grads(args) -> int:
    from .gradients import gradient_suite

    rows, protocol = gradient_suite(args.kernel, args.scenes, args.splats, args.seed)
    print(f"{'group':<16}{'params':>8}{'max rel err':>14}{'failed':>8}  result")
    for r in rows:
        print(f"{r.group:<16}{r.n_params:>8}{r.max_rel_err:>14.2e}{r.n_failed:>8}  "
              f"{'pass' if r.passed else 'FAIL'}")
    ok = all(r.passed for r in rows)
    lio.write_run_json(args.out, _record(args, "check-grads", protocol=protocol, passed=ok,
                                         rows=[vars(r) for r in rows]))
    return 0 if ok else 2


def cmd_bench(args) -> int:
    from .bench import run_bench

    settings = rz.RenderSettings(**_settings_overrides(args))
    rows = run_bench(args.splats, [KernelSpec.named(k) for k in args.kernels], args.size,
                     args.repeats, args.seed, settings)
    print(f"{'kernel':<10}{'splats':>8}{'forward s':>11}{'backward s':>12}{'fwd fps':>9}")
    for r in rows:
        print(f"{r['kernel']:<10}{r['splats']:>8}{r['forward_s']:>11.4f}{r['backward_s']:>12.4f}"
              f"{r['fps_forward']:>9.2f}")
    lio.write_run_json(args.out, _record(args, "bench", settings=settings.to_dict(), rows=rows,
                                         size=args.size, seed=args.seed))
    return 0


COMMANDS = {"fit2d": cmd_fit2d, "fit3d": cmd_fit3d, "study": cmd_study, "render": cmd_render,
            "eval": cmd_eval, "check-grads": cmd_check_grads, "bench": cmd_bench}


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = build_parser().parse_args(argv)
        args._argv = argv
    except ConfigError as e:
        print(e, file=sys.stderr)
        return 1
    except SystemExit as e:  # --help
        return 0 if not e.code else 1
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, ValueError, KeyError, FileNotFoundError) as e:
        # FormatError is a ValueError: bad inputs are configuration errors
        print(f"error: {e}", file=sys.stderr)
        return 1
    except Exception as e:  # noqa: BLE001
        print(f"runtime failure: {type(e).__name__}: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
