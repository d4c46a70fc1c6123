"""Fit every test pattern with every kernel at equal budget; writes study.csv and PNGs.

    python scripts/kernel_study.py --out runs/study --iters 2000 --budget 2000
"""
import argparse

from linsplat.trainer import DEFAULT_STUDY_KERNELS, DEFAULT_STUDY_PATTERNS, TrainConfig, kernel_study

ap = argparse.ArgumentParser()
ap.add_argument("--out", default="runs/study")
ap.add_argument("--iters", type=int, default=2000)
ap.add_argument("--budget", type=int, default=2000)
ap.add_argument("--size", type=int, default=128)
ap.add_argument("--seed", type=int, default=0)
ap.add_argument("--patterns", default=",".join(DEFAULT_STUDY_PATTERNS))
ap.add_argument("--kernels", default=",".join(DEFAULT_STUDY_KERNELS))
args = ap.parse_args()

cfg = TrainConfig(iterations=args.iters, splat_budget=args.budget, seed=args.seed, densify=False)
rows = kernel_study(args.patterns.split(","), args.kernels.split(","), cfg, args.out, size=args.size)
for r in rows:
    print(f"{r['pattern']:<12}{r['kernel']:<11}{r['psnr']:8.2f} dB  SSIM {r['ssim']:.4f}  {r['seconds']:.0f}s")
