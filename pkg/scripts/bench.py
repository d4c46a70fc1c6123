"""Forward/backward timing of Gaussian vs Linear on a seeded 100k-splat scene."""
import argparse

from linsplat.bench import run_bench

ap = argparse.ArgumentParser()
ap.add_argument("--splats", type=int, default=100_000)
ap.add_argument("--size", type=int, default=256)
ap.add_argument("--repeats", type=int, default=5)
args = ap.parse_args()

rows = run_bench(args.splats, ("gaussian", "linear"), args.size, args.repeats)
for r in rows:
    print(f"{r['kernel']:<9} entries {r['tile_entries']:>8}  fwd {r['forward_s']:.4f}s  bwd {r['backward_s']:.4f}s")
print(f"linear / gaussian forward: {rows[1]['forward_s'] / rows[0]['forward_s']:.3f}")
