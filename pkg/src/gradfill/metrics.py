"""Evaluation metrics and small studies built on the samplers.

All metrics are plain floats computed with numpy/scipy; none of them
touch the autodiff tape.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy.special import logsumexp

from .seeding import chain_seeds
from .losses import alignment_loss
from .masks import MaskSpec, generate_mask
from .samplers import inpaint

# The CSV schema holds only quantities that are reproducible from the
# config and seed; wall clock stays on the in-memory record (studies
# that compare timing read it there) so a re-run writes byte-identical
# files.
EVAL_COLUMNS = ("method", "mask_kind", "run", "seed", "nll_prior",
                "seam_energy", "masked_rmse")


@dataclass
class EvalRecord:
    method: str
    mask_kind: str
    run: int
    seed: int
    nll_prior: float
    seam_energy: float
    masked_rmse: float
    wall_clock_s: float

    def row(self):
        return {
            "method": self.method,
            "mask_kind": self.mask_kind,
            "run": self.run,
            "seed": self.seed,
            "nll_prior": repr(self.nll_prior),
            "seam_energy": repr(self.seam_energy),
            "masked_rmse": repr(self.masked_rmse),
        }


def write_records_csv(path, records):
    with open(path, "w", encoding="ascii") as f:
        f.write(",".join(EVAL_COLUMNS) + "\n")
        for rec in records:
            row = rec.row()
            f.write(",".join(str(row[c]) for c in EVAL_COLUMNS) + "\n")


def nll_under_prior(prior, x):
    """Exact negative log density of x under a Gaussian mixture whose
    components share isotropic variance s^2."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != prior.image_shape:
        raise ValueError(f"shape {x.shape} does not match prior {prior.image_shape}")
    d = x.size
    s2 = prior.s * prior.s
    quad = ((x[None] - prior.means) ** 2).sum(axis=(1, 2, 3)) / (2.0 * s2)
    log_norm = 0.5 * d * np.log(2.0 * np.pi * s2)
    return float(-logsumexp(np.log(prior.weights) - quad - log_norm))


def seam_energy(x, M):
    """Alignment loss of an image against a mask, as a float."""
    return float(alignment_loss(x, M).data)


def masked_rmse(x, reference, M):
    """RMSE over the masked region only; 0 when the mask is empty."""
    x = np.asarray(x, dtype=np.float64)
    reference = np.asarray(reference, dtype=np.float64)
    M = np.asarray(M, dtype=np.float64)
    count = M.sum() * x.shape[2]
    if count == 0:
        return 0.0
    diff = (x - reference) * M[:, :, None]
    return float(np.sqrt((diff * diff).sum() / count))


def centered_rect_mask(H, W, cover):
    """Centered rectangle covering approximately `cover` of the grid;
    cover 0 gives an empty mask, cover 1 the full grid."""
    if not 0.0 <= cover <= 1.0:
        raise ValueError(f"coverage must be in [0,1], got {cover}")
    mask = np.zeros((H, W), dtype=np.float64)
    if cover == 0.0:
        return mask
    rh = min(H, max(1, int(round(np.sqrt(cover) * H))))
    rw = min(W, max(1, int(round(np.sqrt(cover) * W))))
    top = (H - rh) // 2
    left = (W - rw) // 2
    mask[top:top + rh, left:left + rw] = 1.0
    return mask


def diversity_study(method, denoiser, I, coverages, n_samples, cfg,
                    schedule=None, base_seed=0):
    """Per-pixel output variance inside the mask versus mask coverage.

    For each coverage a centered rectangle is carved out of I and the
    chain is run n_samples times with distinct seeds; the statistic is
    the mean over masked pixels of the across-sample variance.  The
    same seeds are reused for every coverage (and for every method when
    callers share base_seed), so comparisons ride on common random
    numbers.  Coverage 0 has no masked pixels and reports variance 0.
    """
    if n_samples < 2:
        raise ValueError(f"need at least 2 samples, got {n_samples}")
    I = np.asarray(I, dtype=np.float64)
    H, W, _ = I.shape
    seeds = [chain_seeds(base_seed, i)[0] for i in range(n_samples)]
    rows = []
    for cover in coverages:
        M = centered_rect_mask(H, W, cover)
        actual = float(M.mean())
        if M.sum() == 0:
            rows.append({"coverage": cover, "coverage_actual": actual,
                         "variance": 0.0, "n": n_samples})
            continue
        outs = []
        for seed in seeds:
            out, _ = inpaint(method, denoiser, I, M,
                             replace(cfg, rng_seed=int(seed)),
                             schedule=schedule, telemetry=False)
            outs.append(out)
        stack = np.stack(outs)
        var = stack.var(axis=0, ddof=0)
        inside = var[M == 1.0].mean()
        rows.append({"coverage": cover, "coverage_actual": actual,
                     "variance": float(inside), "n": n_samples})
    return rows


def timing_sweep(fractions, tasks, denoiser, prior, cfg, schedule=None,
                 base_seed=0):
    """Quality/time trade-off of the gradient stop fraction.

    tasks is a list of (I, M, reference) triples; reference may be None
    to skip masked RMSE.  Each fraction runs gradpaint on every task
    with seeds shared across fractions and reports mean metrics plus
    total wall-clock seconds.
    """
    rows = []
    for frac in fractions:
        nlls, seams, rmses = [], [], []
        elapsed = 0.0
        for i, (I, M, reference) in enumerate(tasks):
            seed = int(chain_seeds(base_seed, i)[0])
            run_cfg = replace(cfg, grad_stop_fraction=frac, rng_seed=seed)
            out, trace = inpaint("gradpaint", denoiser, I, M, run_cfg,
                                 schedule=schedule, telemetry=False)
            elapsed += sum(r.wall_clock_s for r in trace.records)
            nlls.append(nll_under_prior(prior, out))
            seams.append(seam_energy(out, M))
            if reference is not None:
                rmses.append(masked_rmse(out, reference, M))
        rows.append({
            "grad_stop_fraction": frac,
            "nll_prior": float(np.mean(nlls)),
            "seam_energy": float(np.mean(seams)),
            "masked_rmse": float(np.mean(rmses)) if rmses else 0.0,
            "wall_clock_s": elapsed,
        })
    return rows


def run_method_eval(method, denoiser, prior, tasks, cfg, schedule=None,
                    mask_kind="", base_seed=0):
    """Run one method over (I, M, reference) tasks and collect records."""
    records = []
    outputs = []
    for i, (I, M, reference) in enumerate(tasks):
        seed = int(chain_seeds(base_seed, i)[0])
        out, trace = inpaint(method, denoiser, I, M,
                             replace(cfg, rng_seed=seed),
                             schedule=schedule, telemetry=False)
        records.append(EvalRecord(
            method=method, mask_kind=mask_kind, run=i, seed=seed,
            nll_prior=nll_under_prior(prior, out),
            seam_energy=seam_energy(out, M),
            masked_rmse=(masked_rmse(out, reference, M)
                         if reference is not None else 0.0),
            wall_clock_s=sum(r.wall_clock_s for r in trace.records)))
        outputs.append(out)
    return records, outputs
