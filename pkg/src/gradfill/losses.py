"""The guidance loss family: masked MSE, boundary alignment, and their sum.

All losses accept traced or plain tensors and return scalars on the same
tape, so a guided sampler can backpropagate them through the denoiser.
Images are (H, W, C); masks are (H, W) with values exactly 0 or 1, where
1 marks the region to inpaint.

Normalization: every loss divides by n^2 := H*W (not H*W*C); the
alignment loss additionally averages over channels.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tensor import (
    Tensor, add, divide, multiply, shift_next, sqrt, square, subtract, tsum,
)

# below this 2-norm a pixel's gradient direction is treated as undefined
TAU = 1e-8


@dataclass
class GradientField:
    """Per-pixel finite-difference components; unit norm or exactly zero."""
    dx: Tensor
    dy: Tensor


@dataclass
class LossReport:
    """Scalar summary of one guidance-loss evaluation.

    total = mse + lambda_al * align as assembled.  The *_node handles
    keep the traced scalars alive for callers that need gradients;
    they are None when align was inactive or inputs were untraced.
    """
    total: float
    mse: float
    align: float
    lambda_al: float
    mse_node: Tensor | None = None
    align_node: Tensor | None = None
    total_node: Tensor | None = None


def _as_image(x):
    t = x if isinstance(x, Tensor) else Tensor(x)
    if t.data.ndim != 3:
        raise ValueError(f"expected an (H,W,C) image, got shape {t.data.shape}")
    return t


def _check_mask(M, hw):
    m = np.asarray(M, dtype=np.float64)
    if m.shape != hw:
        raise ValueError(f"mask shape mismatch: {m.shape} vs image {hw}")
    if not np.all((m == 0.0) | (m == 1.0)):
        raise ValueError("mask values must be exactly 0 or 1")
    return m


def masked_mse(I1, I2, M):
    """(1/n^2) * sum over pixels and channels of ((I1-I2) * (1-M))^2."""
    a = _as_image(I1)
    b = _as_image(I2)
    if a.data.shape != b.data.shape:
        raise ValueError(f"image shape mismatch: {a.data.shape} vs {b.data.shape}")
    h, w, _ = a.data.shape
    m = _check_mask(M, (h, w))
    keep = (1.0 - m)[:, :, None]
    diff = subtract(a, b)
    return multiply(tsum(multiply(square(diff), keep)), 1.0 / (h * w))


def normalized_gradient(I, tau=TAU):
    """Forward differences, replicate edge padding, per-pixel normalization.

    dx steps along axis 1 (columns), dy along axis 0 (rows); the last
    column of dx and last row of dy are exactly 0.  Each per-pixel
    vector is divided by its 2-norm when that norm exceeds tau, else set
    to (0, 0).  The branch indicator is taken from forward values (and
    receives no gradient), but within the normalized branch the backward
    rule is the full quotient rule, so autodiff matches finite
    differences of the actual forward computation.

    Works on (H, W) single-channel inputs and on (H, W, C) stacks, in
    which case channels are normalized independently.
    """
    t = I if isinstance(I, Tensor) else Tensor(I)
    if t.data.ndim not in (2, 3):
        raise ValueError(f"expected (H,W) or (H,W,C), got shape {t.data.shape}")
    dx = subtract(shift_next(t, axis=1), t)
    dy = subtract(shift_next(t, axis=0), t)
    nsq = add(square(dx), square(dy))
    valid = (nsq.data > tau * tau).astype(np.float64)
    # 1 where undefined so sqrt stays smooth; the valid factor zeroes those pixels
    safe = add(multiply(nsq, valid), 1.0 - valid)
    inv = divide(valid, sqrt(safe))
    return GradientField(dx=multiply(dx, inv), dy=multiply(dy, inv))


def alignment_loss(I, M):
    """Boundary-smoothness penalty between image and mask gradient fields.

    Per channel: (1/n^2) * || DxI * Dx(1-M) + DyI * Dy(1-M) ||^2, then
    averaged over channels.  Both fields use the identical normalized
    forward-difference operator; the mask term is a constant.
    """
    img = _as_image(I)
    h, w, c = img.data.shape
    m = _check_mask(M, (h, w))
    field = normalized_gradient(img)
    mfield = normalized_gradient(1.0 - m)  # untraced: mask is data, not a variable
    a = mfield.dx.data[:, :, None]
    b = mfield.dy.data[:, :, None]
    r = add(multiply(field.dx, a), multiply(field.dy, b))
    return multiply(tsum(square(r)), 1.0 / (h * w * c))


def collage(x0_hat, x0_target, M):
    """M*x0_hat + (1-M)*x0_target, on the tape when x0_hat is traced."""
    img = _as_image(x0_hat)
    tgt = _as_image(x0_target)
    h, w, _ = img.data.shape
    m = _check_mask(M, (h, w))[:, :, None]
    return add(multiply(img, m), multiply(tgt, 1.0 - m))


def total_loss(x0_target, x0_hat, M, lambda_al, align_active, loss_target="collage"):
    """mse + lambda_al * align, reported with its pieces.

    The alignment term is evaluated on the collage by default; the
    "raw-x0hat" switch scores the raw model estimate instead, for
    comparing the two readings of the objective.
    """
    if lambda_al < 0:
        raise ValueError("lambda_al must be >= 0")
    if loss_target not in ("collage", "raw-x0hat"):
        raise ValueError(f"unknown loss_target: {loss_target!r}")
    mse_t = masked_mse(x0_hat, x0_target, M)
    if align_active and lambda_al > 0:
        subject = collage(x0_hat, x0_target, M) if loss_target == "collage" else x0_hat
        align_t = alignment_loss(subject, M)
        total_t = add(mse_t, multiply(align_t, lambda_al))
        return LossReport(
            total=float(total_t.data), mse=float(mse_t.data),
            align=float(align_t.data), lambda_al=lambda_al,
            mse_node=mse_t, align_node=align_t, total_node=total_t,
        )
    return LossReport(
        total=float(mse_t.data), mse=float(mse_t.data), align=0.0,
        lambda_al=lambda_al, mse_node=mse_t, align_node=None, total_node=mse_t,
    )
