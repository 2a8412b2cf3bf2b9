"""Noise schedules and the DDPM estimation / posterior step equations.

Index convention: alpha_bar[t] for t = 0..T with alpha_bar[0] = 1 (empty
product).  sigma[t] is the posterior standard deviation of the step
t -> t-1; sigma[1] = 0 falls out of the beta-tilde formula because
alpha_bar[0] = 1, so the final denoising step is deterministic.
"""

from __future__ import annotations

import numpy as np

from . import formats
from .tensor import Tensor, multiply, subtract, add


class NoiseSchedule:
    """Immutable ᾱ/σ sequences for a T-step chain."""

    def __init__(self, alpha_bar, sigma):
        alpha_bar = np.array(alpha_bar, dtype=np.float64)  # own copy; frozen below
        sigma = np.array(sigma, dtype=np.float64)
        if alpha_bar.ndim != 1 or sigma.shape != alpha_bar.shape:
            raise ValueError("alpha_bar and sigma must be equal-length vectors")
        T = alpha_bar.shape[0] - 1
        if T < 1:
            raise ValueError("schedule needs at least one step")
        if abs(alpha_bar[0] - 1.0) > 1e-12:
            raise ValueError("alpha_bar[0] must be 1 (empty product)")
        if np.any(np.diff(alpha_bar) >= 0):
            raise ValueError("alpha_bar must be strictly decreasing")
        if np.any(sigma < 0):
            raise ValueError("sigma must be nonnegative")
        if sigma[1] != 0.0:
            raise ValueError("sigma at the final denoising step must be 0")
        self.T = T
        self.alpha_bar = alpha_bar
        self.sigma = sigma
        alpha_bar.setflags(write=False)
        sigma.setflags(write=False)


def make_linear_schedule(T):
    """Linear-beta schedule defined natively at T steps.

    beta_t runs linearly from 1e-4*(1000/T) to 0.02*(1000/T); the
    rescaling keeps total injected noise comparable across step counts.
    Betas are clamped into (0, 0.999).
    """
    if T < 2:
        raise ValueError(f"make_linear_schedule: T must be >= 2, got {T}")
    scale = 1000.0 / T
    betas = np.linspace(1e-4 * scale, 0.02 * scale, T)
    betas = np.clip(betas, np.finfo(np.float64).tiny, 0.999)
    alpha_bar = np.concatenate([[1.0], np.cumprod(1.0 - betas)])
    # sigma_t^2 = beta-tilde_t = (1 - abar_{t-1})/(1 - abar_t) * beta_t
    sig2 = (1.0 - alpha_bar[:-1]) / (1.0 - alpha_bar[1:]) * betas
    sigma = np.sqrt(np.concatenate([[0.0], sig2]))
    return NoiseSchedule(alpha_bar, sigma)


def _check_t(s, t):
    if not 1 <= t <= s.T:
        raise ValueError(f"step index t={t} outside 1..{s.T}")


def estimate_x0(x_t, eps, t, s):
    """Invert forward mixing: (x_t - sqrt(1-abar_t)*eps) / sqrt(abar_t).

    Differentiable through both tensor arguments; the schedule scalars
    enter as constants.
    """
    _check_t(s, t)
    abar = s.alpha_bar[t]
    if abar < 1e-12:
        raise ValueError(f"estimate_x0: alpha_bar[{t}]={abar} below division guard")
    c = float(np.sqrt(1.0 - abar))
    inv = float(1.0 / np.sqrt(abar))
    return multiply(subtract(x_t, multiply(eps, c)), inv)


def posterior_coefficients(t, s):
    """The x0-hat and x_t weights of the reverse-step mean.

    c0 = (abar_{t-1} - abar_t) * sqrt(abar_{t-1}) / (abar_{t-1} * (1 - abar_t))
    c1 = (1 - abar_{t-1}) * sqrt(abar_t) / ((1 - abar_t) * sqrt(abar_{t-1}))

    Algebraically identical to the familiar beta-tilde posterior mean
    weights sqrt(abar_{t-1}) beta_t / (1-abar_t) and
    sqrt(alpha_t) (1-abar_{t-1}) / (1-abar_t).
    """
    _check_t(s, t)
    ab_t = s.alpha_bar[t]
    ab_p = s.alpha_bar[t - 1]
    c0 = (ab_p - ab_t) * np.sqrt(ab_p) / (ab_p * (1.0 - ab_t))
    c1 = (1.0 - ab_p) * np.sqrt(ab_t) / ((1.0 - ab_t) * np.sqrt(ab_p))
    return float(c0), float(c1)


def ddpm_posterior_step(x_t, x0_hat, t, s, z):
    """x_{t-1} = c0*x0_hat + c1*x_t + sigma_t*z; differentiable in both."""
    if t == 0:
        raise ValueError("ddpm_posterior_step: no step below t=0")
    _check_t(s, t)
    c0, c1 = posterior_coefficients(t, s)
    mean = add(multiply(x0_hat, c0), multiply(x_t, c1))
    sig = float(s.sigma[t])
    if sig == 0.0:
        return mean
    return add(mean, multiply(z, sig))


def forward_mix(x0, eps, t, s):
    """x_t = sqrt(abar_t)*x0 + sqrt(1-abar_t)*eps (the forward corruption)."""
    _check_t(s, t)
    abar = s.alpha_bar[t]
    return add(multiply(x0, float(np.sqrt(abar))),
               multiply(eps, float(np.sqrt(1.0 - abar))))


def save_schedule(s, path_prefix):
    """Serialize as two GPT1 vectors: <prefix>_alpha_bar.gpt1, <prefix>_sigma.gpt1."""
    formats.save_tensor(f"{path_prefix}_alpha_bar.gpt1", s.alpha_bar)
    formats.save_tensor(f"{path_prefix}_sigma.gpt1", s.sigma)


def load_schedule(path_prefix):
    """Rebuild a schedule from its two GPT1 vectors (f32 precision)."""
    alpha_bar = formats.load_tensor(f"{path_prefix}_alpha_bar.gpt1")
    sigma = formats.load_tensor(f"{path_prefix}_sigma.gpt1")
    return NoiseSchedule(alpha_bar, sigma)
