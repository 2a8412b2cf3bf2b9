"""Render every mask family the generator knows, at two seeds each.

Stroke masks (thin, medium, thick) are free-hand scribbles of varying
width; thick additionally stamps a rectangle.  rect is a single axis-
aligned box, bernoulli drops pixels independently.  Masks are 1 where
the image is hidden.  Files land in demos/out/ as PGM.
"""
import os

from gradfill import MaskSpec, coverage, generate_mask, save_mask
from gradfill.masks import KINDS

out_dir = os.path.join(os.path.dirname(__file__), "out")
os.makedirs(out_dir, exist_ok=True)

H = W = 32
print(f"{'kind':<12s} {'seed':>4s} {'coverage':>9s}")
for kind in KINDS:
    for seed in (0, 1):
        spec = MaskSpec(kind=kind, seed=seed,
                        p=0.8 if kind == "bernoulli" else None)
        M = generate_mask(spec, H, W)
        print(f"{kind:<12s} {seed:4d} {coverage(M):9.2%}")
        save_mask(os.path.join(out_dir, f"mask_{kind}_{seed}.pgm"), M)

print(f"\n{2 * len(KINDS)} masks written to {out_dir}")
