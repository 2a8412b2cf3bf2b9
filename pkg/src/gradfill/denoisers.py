"""Noise estimators: an exact Gaussian-mixture denoiser and a small
trainable conv stack.

The analytic denoiser is the verification workhorse: for a GMM prior
with isotropic per-component std s, the corrupted marginal at step t is
itself a GMM,

    p_t(x) = sum_k w_k N(sqrt(abar_t) mu_k, (abar_t s^2 + 1 - abar_t) Id),

so the exact noise estimate eps = -sqrt(1-abar_t) * grad log p_t(x) is
available in closed form through logsumexp-weighted responsibilities.
Everything is built from tape primitives, so guided samplers can
backpropagate through it.
"""

from __future__ import annotations

import json
import os

import numpy as np

from . import formats
from .tensor import (
    Tape, Tensor, add, backward, conv2d, exp, logsumexp, multiply, square,
    stack, subtract, tanh, tmean, tsum,
)


class GMMPrior:
    """Mixture of K isotropic Gaussians over images.

    weights: (K,) positive, summing to 1 within 1e-9.
    means:   (K, H, W, C).
    s:       shared per-component standard deviation.
    """

    def __init__(self, weights, means, s):
        weights = np.asarray(weights, dtype=np.float64)
        means = np.asarray(means, dtype=np.float64)
        if weights.ndim != 1 or means.ndim != 4 or means.shape[0] != weights.shape[0]:
            raise ValueError(
                f"need weights (K,) and means (K,H,W,C), got {weights.shape} and {means.shape}"
            )
        if np.any(weights <= 0):
            raise ValueError("mixture weights must be positive")
        if abs(float(weights.sum()) - 1.0) > 1e-9:
            raise ValueError(f"mixture weights sum to {weights.sum()}, not 1")
        if not s > 0:
            raise ValueError("component std s must be positive")
        if not (np.all(np.isfinite(weights)) and np.all(np.isfinite(means))):
            raise ValueError("non-finite prior parameters")
        self.weights = weights
        self.means = means
        self.s = float(s)
        weights.setflags(write=False)
        means.setflags(write=False)

    @property
    def K(self):
        return self.weights.shape[0]

    @property
    def image_shape(self):
        return self.means.shape[1:]

    def component(self, k):
        """The single-component prior {mu_k, s} (weight 1)."""
        return GMMPrior(np.ones(1), self.means[k:k + 1], self.s)


def _component_eps(x_t, m_k, coef):
    return multiply(subtract(x_t, m_k), coef)


def gmm_eps(prior, x_t, t, s, cond=None):
    """Exact eps estimate under the mixture marginal at step t.

    cond restricts the mixture to one component (the class-conditional
    analog); the restricted path is the identical expression used for
    K=1, so conditioning equals the single-component prior exactly.
    Differentiable w.r.t. x_t, responsibilities included.
    """
    if not isinstance(x_t, Tensor):
        x_t = Tensor(x_t)
    if x_t.data.shape != prior.image_shape:
        raise ValueError(
            f"x_t shape {x_t.data.shape} does not match prior images {prior.image_shape}"
        )
    abar = s.alpha_bar[t] if 1 <= t <= s.T else None
    if abar is None:
        raise ValueError(f"step index t={t} outside 1..{s.T}")
    var = abar * prior.s ** 2 + (1.0 - abar)
    if var < 1e-12:
        raise ValueError(f"gmm_eps: degenerate marginal variance {var} at t={t}")
    root = float(np.sqrt(abar))
    coef = float(np.sqrt(1.0 - abar) / var)
    if cond is not None:
        if not 0 <= cond < prior.K:
            raise ValueError(f"cond={cond} outside components 0..{prior.K - 1}")
        return _component_eps(x_t, root * prior.means[cond], coef)
    if prior.K == 1:
        return _component_eps(x_t, root * prior.means[0], coef)
    # responsibilities over components; the -d/2 log(2 pi var) constant cancels
    half_inv_var = -1.0 / (2.0 * var)
    diffs = []
    logits = []
    for k in range(prior.K):
        d = subtract(x_t, root * prior.means[k])
        diffs.append(d)
        logits.append(add(multiply(tsum(square(d)), half_inv_var),
                          float(np.log(prior.weights[k]))))
    lse = logsumexp(stack(logits))
    acc = None
    for k in range(prior.K):
        term = multiply(diffs[k], exp(subtract(logits[k], lse)))
        acc = term if acc is None else add(acc, term)
    return multiply(acc, coef)


class AnalyticGMMDenoiser:
    """Callable (x_t, t) -> eps for a fixed prior/schedule, optionally
    restricted to one mixture component."""

    def __init__(self, prior, schedule, cond=None):
        self.prior = prior
        self.schedule = schedule
        self.cond = cond

    @property
    def image_shape(self):
        return self.prior.image_shape

    def __call__(self, x_t, t):
        return gmm_eps(self.prior, x_t, t, self.schedule, self.cond)


class ConvDenoiser:
    """Four 3x3 conv layers, 32 hidden channels, tanh, additive sinusoidal
    time embedding broadcast per channel on the hidden layers.

    The final layer is zero-initialized so an untrained model predicts
    exactly zero noise.  Convolutions use zero padding, so any H,W works;
    only the channel count is fixed.
    """

    def __init__(self, channels=1, hidden=32, layers=4, emb_dim=16, kernel=3, seed=0):
        if layers < 2:
            raise ValueError("need at least two conv layers")
        if emb_dim % 2 != 0:
            raise ValueError("emb_dim must be even (sin/cos pairs)")
        self.channels = channels
        self.hidden = hidden
        self.layers = layers
        self.emb_dim = emb_dim
        self.kernel = kernel
        rng = np.random.default_rng(seed)
        self.params = {}
        cin = channels
        for l in range(layers):
            cout = channels if l == layers - 1 else hidden
            fan_in = kernel * kernel * cin
            scale = 0.0 if l == layers - 1 else 1.0 / np.sqrt(fan_in)
            self.params[f"k{l}"] = rng.standard_normal((kernel, kernel, cin, cout)) * scale
            self.params[f"b{l}"] = np.zeros(cout)
            if l < layers - 1:
                self.params[f"w{l}"] = rng.standard_normal((emb_dim, cout)) / np.sqrt(emb_dim)
            cin = cout

    def embedding(self, t):
        """Sinusoidal features of the raw step index, transformer-style."""
        half = self.emb_dim // 2
        freqs = np.exp(-np.log(10000.0) * np.arange(half) / half)
        ang = t * freqs
        return np.concatenate([np.sin(ang), np.cos(ang)])

    def apply(self, p, x, t):
        """Forward pass with an explicit name->Tensor parameter map, so a
        trainer can substitute tape leaves for the stored arrays."""
        if not isinstance(x, Tensor):
            x = Tensor(x)
        if x.data.ndim != 3 or x.data.shape[2] != self.channels:
            raise ValueError(
                f"input shape {x.data.shape} does not match {self.channels} channels"
            )
        emb = self.embedding(t)[:, None]  # (E, 1), broadcast against (E, C)
        h = x
        for l in range(self.layers - 1):
            tbias = tsum(multiply(p[f"w{l}"], emb), axis=0)
            h = add(add(conv2d(h, p[f"k{l}"]), p[f"b{l}"]), tbias)
            h = tanh(h)
        last = self.layers - 1
        return add(conv2d(h, p[f"k{last}"]), p[f"b{last}"])

    def __call__(self, x_t, t):
        # parameters enter as constants: gradients flow to x_t only
        p = {name: Tensor._make(v) for name, v in self.params.items()}
        return self.apply(p, x_t, t)


def train_denoiser(model, sample_x0, s, steps, lr, seed, momentum=0.9):
    """Stochastic denoising-objective training.

    Per step: draw x0 from the dataset sampler, t uniform in 1..T, fresh
    standard-normal eps; corrupt; minimize mean squared error between
    eps and the model estimate (per-entry mean, so the constant-zero
    predictor scores 1.0).  Plain SGD with momentum.  Returns the
    trained model and the per-step loss log.
    """
    rng = np.random.default_rng(seed)
    losses = []
    velocity = {name: np.zeros_like(v) for name, v in model.params.items()}
    for step in range(steps):
        x0 = np.asarray(sample_x0(rng), dtype=np.float64)
        t = int(rng.integers(1, s.T + 1))
        eps = rng.standard_normal(x0.shape)
        abar = s.alpha_bar[t]
        x_t = np.sqrt(abar) * x0 + np.sqrt(1.0 - abar) * eps
        tape = Tape()
        leaves = {name: tape.leaf(v) for name, v in model.params.items()}
        pred = model.apply(leaves, Tensor._make(x_t), t)
        loss = tmean(square(subtract(pred, Tensor._make(eps))))
        value = float(loss.data)
        if not np.isfinite(value):
            raise RuntimeError(f"training diverged: non-finite loss at step {step}")
        losses.append(value)
        grads = backward(loss)
        for name, leaf in leaves.items():
            velocity[name] = momentum * velocity[name] + grads[leaf]
            model.params[name] = model.params[name] - lr * velocity[name]
    return model, losses


def save_model(model, directory):
    """Parameters as GPT1 tensors plus a JSON manifest."""
    os.makedirs(directory, exist_ok=True)
    manifest = {
        "format": "conv-denoiser",
        "meta": {
            "channels": model.channels, "hidden": model.hidden,
            "layers": model.layers, "emb_dim": model.emb_dim,
            "kernel": model.kernel,
        },
        "params": {},
    }
    for name, value in sorted(model.params.items()):
        fname = f"{name}.gpt1"
        formats.save_tensor(os.path.join(directory, fname), value)
        manifest["params"][name] = fname
    with open(os.path.join(directory, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_model(directory):
    with open(os.path.join(directory, "manifest.json")) as fh:
        manifest = json.load(fh)
    if manifest.get("format") != "conv-denoiser":
        raise ValueError(f"{directory}: not a conv-denoiser manifest")
    meta = manifest["meta"]
    model = ConvDenoiser(
        channels=meta["channels"], hidden=meta["hidden"], layers=meta["layers"],
        emb_dim=meta["emb_dim"], kernel=meta["kernel"], seed=0,
    )
    for name, fname in manifest["params"].items():
        model.params[name] = formats.load_tensor(os.path.join(directory, fname))
    return model
