"""Mask generation: stroke families (thin/medium/thick), rectangles, and
Bernoulli pixel masks.

Every mask is an (H, W) float array with values exactly 0 or 1, where 1
marks the region to inpaint.  Generation is a pure function of
(spec, H, W): the same seed always yields the same mask.

The stroke families are re-parameterized for small grids: random
polylines stamped with a per-family width (thin: 1 pixel, 1-2 strokes;
medium: ~10% of min(H,W), 1-3 strokes; thick: ~25% of min(H,W), 1-4
strokes plus an optional rectangle).  What matters downstream is the
thin < medium < thick coverage ordering, not any particular geometry.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

STROKE_FAMILIES = {
    # width fraction of min(H,W), (min,max) stroke count, optional-rect flag
    "thin": (None, (1, 2), False),     # None: absolute width 1
    "medium": (0.10, (1, 3), False),
    "thick": (0.25, (1, 4), True),
}

KINDS = ("thin", "medium", "thick", "rect", "bernoulli")


@dataclass(frozen=True)
class MaskSpec:
    """What to draw.  p is required for bernoulli; the stroke overrides
    and rect fraction ranges are optional knobs for the other kinds."""
    kind: str
    seed: int = 0
    p: float | None = None
    n_strokes: tuple[int, int] | None = None
    width: float | None = None                  # absolute pixels
    rect_h: tuple[float, float] = (0.25, 0.75)  # height fraction range
    rect_w: tuple[float, float] = (0.25, 0.75)


def _stamp_segment(canvas, ii, jj, p0, p1, radius):
    length = float(np.hypot(p1[0] - p0[0], p1[1] - p0[1]))
    steps = max(2, int(np.ceil(length * 2.0)) + 1)
    for a in np.linspace(0.0, 1.0, steps):
        cy = p0[0] + a * (p1[0] - p0[0])
        cx = p0[1] + a * (p1[1] - p0[1])
        canvas |= (ii - cy) ** 2 + (jj - cx) ** 2 <= radius * radius


def _draw_strokes(rng, H, W, width, count_range, with_rect):
    canvas = np.zeros((H, W), dtype=bool)
    ii, jj = np.mgrid[0:H, 0:W].astype(np.float64)
    radius = width / 2.0
    n = int(rng.integers(count_range[0], count_range[1] + 1))
    for _ in range(n):
        point = np.array([rng.uniform(0, H - 1), rng.uniform(0, W - 1)])
        segments = int(rng.integers(2, 4))
        for _ in range(segments):
            angle = rng.uniform(0.0, 2.0 * np.pi)
            length = rng.uniform(0.3, 0.7) * min(H, W)
            nxt = point + length * np.array([np.sin(angle), np.cos(angle)])
            nxt = np.clip(nxt, [0.0, 0.0], [H - 1.0, W - 1.0])
            _stamp_segment(canvas, ii, jj, point, nxt, radius)
            point = nxt
    if with_rect and rng.random() < 0.5:
        rh = max(1, int(round(rng.uniform(0.2, 0.4) * H)))
        rw = max(1, int(round(rng.uniform(0.2, 0.4) * W)))
        top = int(rng.integers(0, H - rh + 1))
        left = int(rng.integers(0, W - rw + 1))
        canvas[top:top + rh, left:left + rw] = True
    return canvas


def generate_mask(spec, H, W):
    """Render a MaskSpec onto an H x W grid.  Deterministic per seed."""
    if H < 1 or W < 1:
        raise ValueError(f"mask grid must be positive, got {H}x{W}")
    if spec.kind not in KINDS:
        raise ValueError(f"unknown mask kind: {spec.kind!r}")
    rng = np.random.default_rng(spec.seed)
    if spec.kind == "bernoulli":
        if spec.p is None or not 0.0 < spec.p < 1.0:
            raise ValueError(f"bernoulli mask needs p in (0,1), got {spec.p}")
        return (rng.random((H, W)) < spec.p).astype(np.float64)
    if spec.kind == "rect":
        for lo, hi in (spec.rect_h, spec.rect_w):
            if not (0.0 < lo <= hi <= 1.0):
                raise ValueError(f"rect fraction range ({lo}, {hi}) outside (0, 1]")
        rh = max(1, int(round(rng.uniform(*spec.rect_h) * H)))
        rw = max(1, int(round(rng.uniform(*spec.rect_w) * W)))
        rh, rw = min(rh, H), min(rw, W)
        top = int(rng.integers(0, H - rh + 1))
        left = int(rng.integers(0, W - rw + 1))
        mask = np.zeros((H, W), dtype=np.float64)
        mask[top:top + rh, left:left + rw] = 1.0
        return mask
    width_frac, count_range, with_rect = STROKE_FAMILIES[spec.kind]
    width = 1.0 if width_frac is None else max(1.0, width_frac * min(H, W))
    if spec.width is not None:
        width = spec.width
    if not 0.0 < width <= min(H, W):
        raise ValueError(f"stroke width {width} outside (0, min(H,W)={min(H, W)}]")
    if spec.n_strokes is not None:
        count_range = spec.n_strokes
    if count_range[0] < 1 or count_range[0] > count_range[1]:
        raise ValueError(f"bad stroke count range {count_range}")
    return _draw_strokes(rng, H, W, width, count_range, with_rect).astype(np.float64)


def coverage(M):
    """Fraction of pixels marked for inpainting."""
    return float(np.mean(np.asarray(M, dtype=np.float64)))
