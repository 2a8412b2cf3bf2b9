"""Experiment harness: analytic priors built from mean patterns, task
construction, a strict JSON experiment config, and a deterministic
evaluation loop that writes CSV records and image outputs.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .denoisers import AnalyticGMMDenoiser, ConvDenoiser, GMMPrior, train_denoiser
from .formats import save_image, save_tensor
from .masks import KINDS as MASK_KINDS
from .masks import MaskSpec, generate_mask
from .metrics import run_method_eval, write_records_csv
from .samplers import METHODS, GuidanceConfig
from .schedule import make_linear_schedule
from .seeding import chain_seeds

PATTERNS = ("ramp-x", "ramp-y", "ramp-diag", "halfplane-x", "halfplane-y",
            "blob", "constant", "neg-constant")

CONFIG_VERSION = 1


def mean_pattern(kind, H, W, C, amplitude=0.8):
    """A smooth (H, W, C) mean image in [-amplitude, amplitude]."""
    if kind not in PATTERNS:
        raise ValueError(f"unknown pattern: {kind!r}")
    a = float(amplitude)
    ii, jj = np.mgrid[0:H, 0:W].astype(np.float64)
    if kind == "ramp-x":
        base = a * (2.0 * jj / max(W - 1, 1) - 1.0)
    elif kind == "ramp-y":
        base = a * (2.0 * ii / max(H - 1, 1) - 1.0)
    elif kind == "ramp-diag":
        base = a * (2.0 * (ii + jj) / max(H + W - 2, 1) - 1.0)
    elif kind == "halfplane-x":
        base = np.where(jj < W / 2.0, -a, a)
    elif kind == "halfplane-y":
        base = np.where(ii < H / 2.0, -a, a)
    elif kind == "blob":
        sig = 0.25 * min(H, W)
        r2 = (ii - (H - 1) / 2.0) ** 2 + (jj - (W - 1) / 2.0) ** 2
        base = a * (2.0 * np.exp(-r2 / (2.0 * sig * sig)) - 1.0)
    elif kind == "constant":
        base = np.full((H, W), a)
    else:  # neg-constant
        base = np.full((H, W), -a)
    return np.repeat(base[:, :, None], C, axis=2)


def make_prior(patterns, H, W, C, s, amplitude=0.8, weights=None):
    """Gaussian mixture prior with one component per named pattern."""
    K = len(patterns)
    if K == 0:
        raise ValueError("need at least one pattern")
    means = np.stack([mean_pattern(p, H, W, C, amplitude) for p in patterns])
    if weights is None:
        weights = np.full(K, 1.0 / K)
    return GMMPrior(weights=np.asarray(weights, dtype=np.float64),
                    means=means, s=s)


def draw_from_prior(prior, rng, component=None, clip=True):
    """Sample an image from the prior (component k, or by weight)."""
    if component is None:
        component = int(rng.choice(prior.K, p=prior.weights))
    x = prior.means[component] + prior.s * rng.standard_normal(prior.image_shape)
    if clip:
        x = np.clip(x, -1.0, 1.0)
    return x, component


def greyfill(I, M):
    """Baseline completion: zero (mid-grey) inside the mask."""
    I = np.asarray(I, dtype=np.float64)
    return np.where(np.asarray(M)[:, :, None] == 1.0, 0.0, I)


# -- frozen benchmark tasks -------------------------------------------------
#
# The constants below were fixed once by a calibration pass and are not
# meant to be tuned per run; the regression suite depends on them.
#
# The paired-ordering study runs against a small trained denoiser: with
# the exact mixture score the clean estimate is already the posterior
# mean, so guided and unguided methods converge to nearly the same
# completions and the comparison has nothing to resolve.  A conv model
# with a limited receptive field leaves real headroom for the gradient
# update to move information from the context into the masked region.
# The alignment window covers the whole chain here: on smooth mixture
# worlds the seam signal stays informative to the end, instead of being
# overwhelmed by early-step noise.

ORDERING_TASK = {
    "shape": (16, 16, 1),
    "patterns": ("ramp-x", "ramp-y", "halfplane-x", "halfplane-y"),
    "s": 0.4,
    "amplitude": 0.8,
    "mask_kind": "thick",
    "steps": 50,
    "model": {"hidden": 16, "layers": 3, "seed": 0},
    "train": {"steps": 8000, "lr": 0.003, "seed": 0},
    "guidance": {"steps": 50, "lambda_al": 400.0, "learning_rate": 0.005,
                 "align_active_fraction": 1.0},
}

# The scattered-mask study uses the analytic denoiser: its greyfill
# contrast measures completion quality against the prior, which a
# desk-scale trained model cannot reach (its unconditional samples
# already score worse than greyfill).  The harmonization step size is
# larger than the default: scattered masks leave no contiguous seam,
# so the update has to move the whole completion toward the context
# pattern, and the default step calibrated for seam repair barely
# shifts the trajectory.

OOD_TASK = {
    "shape": (16, 16, 1),
    "patterns": ("halfplane-x", "halfplane-y"),
    "s": 0.4,
    "amplitude": 0.8,
    "mask_p": 0.8,
    "steps": 50,
    "guidance": {"steps": 50, "learning_rate": 0.02},
}


def task_guidance(task, **overrides):
    """GuidanceConfig for a frozen task, with optional field overrides."""
    fields = dict(task["guidance"])
    fields.update(overrides)
    return GuidanceConfig(**fields)


def build_prior_and_denoiser(shape, patterns, s, amplitude, steps):
    H, W, C = shape
    prior = make_prior(patterns, H, W, C, s, amplitude)
    schedule = make_linear_schedule(steps)
    return prior, AnalyticGMMDenoiser(prior, schedule), schedule


@lru_cache(maxsize=1)
def build_ordering_model():
    """Train the ordering-study denoiser from the frozen recipe.

    Deterministic: same weights every call (the result is cached for
    the process).  Takes a noticeable moment; studies share one model.
    """
    spec = ORDERING_TASK
    H, W, C = spec["shape"]
    prior = make_prior(spec["patterns"], H, W, C, spec["s"], spec["amplitude"])
    schedule = make_linear_schedule(spec["steps"])

    def sample_x0(rng):
        x, _ = draw_from_prior(prior, rng, clip=False)
        return x

    model = ConvDenoiser(channels=C, hidden=spec["model"]["hidden"],
                         layers=spec["model"]["layers"],
                         seed=spec["model"]["seed"])
    model, _ = train_denoiser(model, sample_x0, schedule,
                              steps=spec["train"]["steps"],
                              lr=spec["train"]["lr"],
                              seed=spec["train"]["seed"])
    return prior, model, schedule


def ordering_tasks(n_tasks, global_seed=0):
    """Paired-comparison tasks: reference drawn from the prior, thick
    stroke mask, one triple (I, M, reference) per seed."""
    spec = ORDERING_TASK
    prior, model, schedule = build_ordering_model()
    H, W, _ = spec["shape"]
    tasks = []
    for i in range(n_tasks):
        s_img, s_mask = chain_seeds(global_seed, i, n=2)
        rng = np.random.default_rng(s_img)
        reference, _ = draw_from_prior(prior, rng)
        M = generate_mask(MaskSpec(kind=spec["mask_kind"], seed=s_mask), H, W)
        if M.sum() == 0 or M.sum() == M.size:
            M[H // 2, W // 2] = 1.0
            M[0, 0] = 0.0
        tasks.append((reference, M, reference))
    return prior, model, schedule, tasks


def ood_tasks(n_tasks, global_seed=0):
    """Scattered-mask tasks: reference drawn from the prior, dense
    Bernoulli mask, so most pixels must be synthesized."""
    spec = OOD_TASK
    prior, denoiser, schedule = build_prior_and_denoiser(
        spec["shape"], spec["patterns"], spec["s"], spec["amplitude"],
        spec["steps"])
    H, W, _ = spec["shape"]
    tasks = []
    for i in range(n_tasks):
        s_img, s_mask = chain_seeds(global_seed, i, n=2)
        rng = np.random.default_rng(s_img)
        reference, _ = draw_from_prior(prior, rng)
        M = generate_mask(MaskSpec(kind="bernoulli", seed=s_mask,
                                   p=spec["mask_p"]), H, W)
        tasks.append((reference, M, reference))
    return prior, denoiser, schedule, tasks


# -- experiment config ------------------------------------------------------

_GUIDANCE_KEYS = {"steps", "lambda_al", "learning_rate",
                  "align_active_fraction", "grad_stop_fraction",
                  "loss_target"}
_PRIOR_KEYS = {"patterns", "s", "amplitude", "weights"}
_MASK_KEYS = {"kind", "p"}
_TOP_KEYS = {"version", "shape", "prior", "mask", "methods", "guidance",
             "n_runs", "seed"}


@dataclass(frozen=True)
class ExperimentConfig:
    """Declarative description of one evaluation run.  Parsing is
    strict: unknown keys and version mismatches are errors."""
    shape: tuple[int, int, int]
    prior_patterns: tuple[str, ...]
    prior_s: float
    prior_amplitude: float = 0.8
    prior_weights: tuple[float, ...] | None = None
    mask_kind: str = "thick"
    mask_p: float | None = None
    methods: tuple[str, ...] = ("combine-image", "gradpaint")
    guidance: GuidanceConfig = field(default_factory=GuidanceConfig)
    n_runs: int = 4
    seed: int = 0

    def __post_init__(self):
        if len(self.shape) != 3 or any(v < 1 for v in self.shape):
            raise ValueError(f"bad shape: {self.shape}")
        if self.mask_kind not in MASK_KINDS:
            raise ValueError(f"unknown mask kind: {self.mask_kind!r}")
        for m in self.methods:
            if m not in METHODS:
                raise ValueError(f"unknown method: {m!r}")
        if not self.methods:
            raise ValueError("need at least one method")
        if self.n_runs < 0:
            raise ValueError(f"n_runs must be >= 0, got {self.n_runs}")

    def to_json(self):
        payload = {
            "version": CONFIG_VERSION,
            "shape": list(self.shape),
            "prior": {
                "patterns": list(self.prior_patterns),
                "s": self.prior_s,
                "amplitude": self.prior_amplitude,
            },
            "mask": {"kind": self.mask_kind},
            "methods": list(self.methods),
            "guidance": {
                "steps": self.guidance.steps,
                "lambda_al": self.guidance.lambda_al,
                "learning_rate": self.guidance.learning_rate,
                "align_active_fraction": self.guidance.align_active_fraction,
                "grad_stop_fraction": self.guidance.grad_stop_fraction,
                "loss_target": self.guidance.loss_target,
            },
            "n_runs": self.n_runs,
            "seed": self.seed,
        }
        if self.prior_weights is not None:
            payload["prior"]["weights"] = list(self.prior_weights)
        if self.mask_p is not None:
            payload["mask"]["p"] = self.mask_p
        return json.dumps(payload, indent=2, sort_keys=True)


def _require_keys(d, allowed, where):
    unknown = set(d) - allowed
    if unknown:
        raise ValueError(f"unknown config key in {where}: {sorted(unknown)}")


def parse_config(text):
    """Parse an ExperimentConfig from JSON text, strictly."""
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as e:
        raise ValueError(f"config is not valid JSON: {e}") from e
    if not isinstance(raw, dict):
        raise ValueError("config root must be an object")
    _require_keys(raw, _TOP_KEYS, "top level")
    version = raw.get("version")
    if version != CONFIG_VERSION:
        raise ValueError(f"unsupported config version: {version!r}")
    for key in ("shape", "prior"):
        if key not in raw:
            raise ValueError(f"config is missing {key!r}")
    prior = raw["prior"]
    _require_keys(prior, _PRIOR_KEYS, "prior")
    if "patterns" not in prior or "s" not in prior:
        raise ValueError("prior needs patterns and s")
    mask = raw.get("mask", {"kind": "thick"})
    _require_keys(mask, _MASK_KEYS, "mask")
    guidance_raw = raw.get("guidance", {})
    _require_keys(guidance_raw, _GUIDANCE_KEYS, "guidance")
    guidance = GuidanceConfig(**guidance_raw)
    weights = prior.get("weights")
    return ExperimentConfig(
        shape=tuple(int(v) for v in raw["shape"]),
        prior_patterns=tuple(prior["patterns"]),
        prior_s=float(prior["s"]),
        prior_amplitude=float(prior.get("amplitude", 0.8)),
        prior_weights=None if weights is None else tuple(float(w) for w in weights),
        mask_kind=mask.get("kind", "thick"),
        mask_p=None if mask.get("p") is None else float(mask["p"]),
        methods=tuple(raw.get("methods", ["combine-image", "gradpaint"])),
        guidance=guidance,
        n_runs=int(raw.get("n_runs", 4)),
        seed=int(raw.get("seed", 0)),
    )


def load_config(path):
    with open(path, "r", encoding="utf-8") as f:
        return parse_config(f.read())


def run_eval(config, out_dir):
    """Run every method in the config over shared tasks and write
    records.csv plus the first run's outputs per method.  Every file
    written is byte-for-byte deterministic given the config."""
    os.makedirs(out_dir, exist_ok=True)
    H, W, C = config.shape
    prior = make_prior(config.prior_patterns, H, W, C, config.prior_s,
                       config.prior_amplitude, config.prior_weights)
    schedule = make_linear_schedule(config.guidance.steps)
    denoiser = AnalyticGMMDenoiser(prior, schedule)
    tasks = []
    for i in range(config.n_runs):
        s_img, s_mask = chain_seeds(config.seed, i, n=2)
        rng = np.random.default_rng(s_img)
        reference, _ = draw_from_prior(prior, rng)
        M = generate_mask(MaskSpec(kind=config.mask_kind, seed=s_mask,
                                   p=config.mask_p), H, W)
        if M.sum() == 0:
            M[H // 2, W // 2] = 1.0
        tasks.append((reference, M, reference))
    all_records = []
    for method in config.methods:
        records, outputs = run_method_eval(
            method, denoiser, prior, tasks, config.guidance,
            schedule=schedule, mask_kind=config.mask_kind,
            base_seed=config.seed)
        all_records.extend(records)
        if outputs:
            stem = os.path.join(out_dir, f"output_{method}_run0")
            save_tensor(stem + ".gpt1", outputs[0])
            save_image(stem + (".pgm" if C == 1 else ".ppm"),
                       np.clip(outputs[0], -1.0, 1.0))
    write_records_csv(os.path.join(out_dir, "records.csv"), all_records)
    with open(os.path.join(out_dir, "config.json"), "w", encoding="utf-8") as f:
        f.write(config.to_json() + "\n")
    return all_records
