"""Reverse-diffusion chains with masked-completion guidance.

Four methods share one chain skeleton and differ only in the per-step
rule:

- "combine-image": denoise, replace the clean estimate outside the mask
  with the reference image, take the posterior step on that collage.
- "combine-noisy": take the unguided posterior step, then overwrite the
  unmasked region with a freshly noised copy of the reference at the
  destination noise level.
- "gradpaint": the combine-image step plus a normalized gradient
  update; the gradient of the masked reconstruction and seam alignment
  losses is taken through the denoiser with respect to x_t.
- "gradpaint-fast": gradpaint that stops building gradients after half
  the chain and falls back to plain combine-image steps.

Randomness policy: each chain consumes draws from one generator in a
fixed order (initial x_T, then per step the posterior noise z when
t > 1, then the re-noising draw for combine-noisy).  Telemetry and loss
evaluation never touch the generator, so two methods given the same
seed see identical noise where their rules coincide.  In particular
gradpaint with learning_rate 0 reproduces combine-image bit for bit.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace

import numpy as np

from .losses import LossReport, collage, total_loss
from .schedule import NoiseSchedule, ddpm_posterior_step, estimate_x0, make_linear_schedule
from .tensor import Tape, backward

METHODS = ("combine-image", "combine-noisy", "gradpaint", "gradpaint-fast")

TRACE_COLUMNS = ("step", "mse", "align", "total", "grad_norm_mse",
                 "grad_norm_align", "t", "wall_clock_s")


@dataclass(frozen=True)
class GuidanceConfig:
    """Knobs shared by every method; the gradient fields only matter for
    gradpaint variants.  loss_target picks what the losses see: the
    collage of the clean estimate with the reference ("collage") or the
    raw clean estimate ("raw-x0hat")."""
    steps: int = 100
    lambda_al: float = 400.0
    learning_rate: float = 0.005
    align_active_fraction: float = 0.45
    grad_stop_fraction: float = 1.0
    loss_target: str = "collage"
    rng_seed: int = 0

    def __post_init__(self):
        if self.steps < 2:
            raise ValueError(f"steps must be >= 2, got {self.steps}")
        if self.lambda_al < 0.0:
            raise ValueError(f"lambda_al must be >= 0, got {self.lambda_al}")
        if self.learning_rate < 0.0:
            raise ValueError(f"learning_rate must be >= 0, got {self.learning_rate}")
        for name in ("align_active_fraction", "grad_stop_fraction"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must be in [0,1], got {v}")
        if self.loss_target not in ("collage", "raw-x0hat"):
            raise ValueError(f"unknown loss_target: {self.loss_target!r}")


@dataclass
class StepRecord:
    t: int
    report: LossReport | None
    grad_norm_mse: float = 0.0
    grad_norm_align: float = 0.0
    grad_norm_total: float = 0.0
    wall_clock_s: float = 0.0
    x0_hat: np.ndarray | None = None


@dataclass
class ChainTrace:
    method: str
    records: list[StepRecord] = field(default_factory=list)

    def rows(self):
        out = []
        for i, r in enumerate(self.records):
            rep = r.report
            out.append({
                "step": i,
                "mse": "" if rep is None else repr(rep.mse),
                "align": "" if rep is None else repr(rep.align),
                "total": "" if rep is None else repr(rep.total),
                "grad_norm_mse": repr(r.grad_norm_mse),
                "grad_norm_align": repr(r.grad_norm_align),
                "t": r.t,
                "wall_clock_s": repr(r.wall_clock_s),
            })
        return out

    def to_csv(self, path):
        with open(path, "w", encoding="ascii") as f:
            f.write(",".join(TRACE_COLUMNS) + "\n")
            for row in self.rows():
                f.write(",".join(str(row[c]) for c in TRACE_COLUMNS) + "\n")


class ChainAborted(RuntimeError):
    """Raised when a chain state or gradient goes non-finite.  Carries
    the failing timestep, the last loss report, and the partial trace."""

    def __init__(self, t, report=None, trace=None):
        super().__init__(f"chain aborted at t={t}: non-finite state")
        self.t = t
        self.report = report
        self.trace = trace


def _check_image(I, name="image"):
    I = np.asarray(I, dtype=np.float64)
    if I.ndim != 3:
        raise ValueError(f"{name} must be (H, W, C), got shape {I.shape}")
    if not np.all(np.isfinite(I)):
        raise ValueError(f"{name} contains non-finite values")
    return I


def _check_mask(M, shape):
    M = np.asarray(M, dtype=np.float64)
    if M.shape != shape[:2]:
        raise ValueError(f"mask shape {M.shape} does not match image {shape[:2]}")
    if not np.all((M == 0.0) | (M == 1.0)):
        raise ValueError("mask must be exactly binary")
    return M


def sample_unconditional(denoiser, schedule, shape, seed, rng=None):
    """Run the plain reverse chain from pure noise; returns x_0."""
    if rng is None:
        rng = np.random.default_rng(seed)
    x = rng.standard_normal(shape)
    for t in range(schedule.T, 0, -1):
        z = rng.standard_normal(shape) if t > 1 else np.zeros(shape)
        eps = denoiser(x, t)
        x0_hat = estimate_x0(x, eps, t, schedule)
        x = ddpm_posterior_step(x, x0_hat, t, schedule, z).data
        if not np.all(np.isfinite(x)):
            raise ChainAborted(t)
    return x


def _combine_image_core(x_t, denoiser, I, M, t, schedule, z):
    """Denoise, collage the clean estimate, posterior step.  Returns the
    new state and the raw clean estimate (both plain arrays)."""
    eps = denoiser(x_t, t)
    x0_hat = estimate_x0(x_t, eps, t, schedule)
    x0_col = collage(x0_hat.data, I, M)
    x_prev = ddpm_posterior_step(x_t, x0_col, t, schedule, z)
    return x_prev.data, x0_hat.data


def combine_image_step(x_t, denoiser, I, M, t, schedule, z):
    """One guided step: posterior step on the collaged clean estimate."""
    x_prev, _ = _combine_image_core(x_t, denoiser, I, M, t, schedule, z)
    return x_prev


def _combine_noisy_core(x_t, denoiser, I, M, t, schedule, z, eps_prime):
    eps = denoiser(x_t, t)
    x0_hat = estimate_x0(x_t, eps, t, schedule)
    x_prev = ddpm_posterior_step(x_t, x0_hat, t, schedule, z).data
    ab_prev = schedule.alpha_bar[t - 1]
    noised = np.sqrt(ab_prev) * I + np.sqrt(1.0 - ab_prev) * eps_prime
    M3 = M[:, :, None]
    return M3 * x_prev + (1.0 - M3) * noised, x0_hat.data


def combine_noisy_step(x_t, denoiser, I, M, t, schedule, z, eps_prime):
    """One guided step: unguided posterior step, then overwrite the
    unmasked region with the reference noised to level t-1."""
    x_prev, _ = _combine_noisy_core(x_t, denoiser, I, M, t, schedule, z, eps_prime)
    return x_prev


def _gradpaint_core(x_t, denoiser, I, M, t, schedule, z, cfg):
    """Combine-image step plus the normalized gradient update.  Returns
    (x_prev, x0_hat, report, gn_mse, gn_align, gn_total)."""
    progress = (schedule.T - t) / schedule.T
    if progress >= cfg.grad_stop_fraction:
        x_prev, x0_hat = _combine_image_core(x_t, denoiser, I, M, t, schedule, z)
        return x_prev, x0_hat, None, 0.0, 0.0, 0.0

    tape = Tape()
    xt = tape.leaf(x_t)
    eps = denoiser(xt, t)
    x0_hat = estimate_x0(xt, eps, t, schedule)
    align_on = progress < cfg.align_active_fraction
    report = total_loss(I, x0_hat, M, cfg.lambda_al, align_on, cfg.loss_target)

    g = backward(report.mse_node)[xt]
    gn_mse = float(np.linalg.norm(g))
    gn_align = 0.0
    if report.align_node is not None:
        g_align = backward(report.align_node)[xt]
        gn_align = float(np.linalg.norm(g_align))
        g = g + cfg.lambda_al * g_align
    if not np.all(np.isfinite(g)):
        raise ChainAborted(t, report=report)
    gn_total = float(np.linalg.norm(g))
    # Drop the node handles so step records do not pin the tape.
    report = LossReport(total=report.total, mse=report.mse,
                        align=report.align, lambda_al=report.lambda_al)

    # Same collage/posterior arithmetic as combine-image, on the same
    # values, so learning_rate 0 reproduces it exactly.
    x0_col = collage(x0_hat.data, I, M)
    x_prev = ddpm_posterior_step(x_t, x0_col, t, schedule, z).data
    if cfg.learning_rate > 0.0 and gn_total > 0.0:
        x_prev = x_prev - cfg.learning_rate * (g / gn_total)
    return x_prev, x0_hat.data, report, gn_mse, gn_align, gn_total


def gradpaint_step(x_t, denoiser, I, M, t, schedule, z, cfg):
    """One guided step: combine-image plus a unit-norm gradient update
    scaled by cfg.learning_rate."""
    x_prev, _, _, _, _, _ = _gradpaint_core(x_t, denoiser, I, M, t, schedule, z, cfg)
    return x_prev


def _telemetry_report(I, x0_hat, M, cfg, progress):
    align_on = progress < cfg.align_active_fraction
    rep = total_loss(I, x0_hat, M, cfg.lambda_al, align_on, cfg.loss_target)
    return LossReport(total=rep.total, mse=rep.mse, align=rep.align,
                      lambda_al=rep.lambda_al)


def inpaint(method, denoiser, I, M, cfg, schedule=None, telemetry=True,
            snapshot_every=0):
    """Run a full guided chain.  Returns (output image, ChainTrace).

    The output equals I exactly outside the mask (the final state is
    collaged with the reference).  snapshot_every > 0 stores the clean
    estimate every that-many steps in the trace records.
    """
    if method not in METHODS:
        raise ValueError(f"unknown method: {method!r}")
    I = _check_image(I)
    M = _check_mask(M, I.shape)
    if schedule is None:
        schedule = make_linear_schedule(cfg.steps)
    elif schedule.T != cfg.steps:
        raise ValueError(
            f"schedule has {schedule.T} steps but config says {cfg.steps}")
    eff = cfg
    if method == "gradpaint-fast" and cfg.grad_stop_fraction >= 1.0:
        eff = replace(cfg, grad_stop_fraction=0.5)

    rng = np.random.default_rng(cfg.rng_seed)
    shape = I.shape
    x = rng.standard_normal(shape)
    trace = ChainTrace(method=method)
    T = schedule.T
    for t in range(T, 0, -1):
        started = time.perf_counter()
        z = rng.standard_normal(shape) if t > 1 else np.zeros(shape)
        progress = (T - t) / T
        report = None
        gn_mse = gn_align = gn_total = 0.0
        try:
            if method == "combine-image":
                x, x0_hat = _combine_image_core(x, denoiser, I, M, t, schedule, z)
            elif method == "combine-noisy":
                eps_prime = rng.standard_normal(shape)
                x, x0_hat = _combine_noisy_core(
                    x, denoiser, I, M, t, schedule, z, eps_prime)
            else:
                x, x0_hat, report, gn_mse, gn_align, gn_total = _gradpaint_core(
                    x, denoiser, I, M, t, schedule, z, eff)
        except ChainAborted as e:
            e.trace = trace
            raise
        if not np.all(np.isfinite(x)):
            raise ChainAborted(t, report=report, trace=trace)
        if telemetry and report is None:
            report = _telemetry_report(I, x0_hat, M, eff, progress)
        snap = None
        if snapshot_every > 0 and (T - t) % snapshot_every == 0:
            snap = x0_hat.copy()
        trace.records.append(StepRecord(
            t=t, report=report, grad_norm_mse=gn_mse, grad_norm_align=gn_align,
            grad_norm_total=gn_total,
            wall_clock_s=time.perf_counter() - started, x0_hat=snap))
    out = np.where(M[:, :, None] == 1.0, x, I)
    return out, trace
