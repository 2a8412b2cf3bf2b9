"""How much gradient work does the quality actually need?

The gradient update is the expensive part of a guided chain: it
backpropagates through the denoiser at every step.  The stop fraction
cuts that work off partway through the chain (0.5 is the gradpaint-fast
setting; 1.0 never stops).  This sweep runs the same tasks at several
fractions, with shared seeds, and prints quality against wall clock.
"""
import numpy as np

from gradfill import (AnalyticGMMDenoiser, MaskSpec, ORDERING_TASK, chain_seeds,
                      draw_from_prior, generate_mask, make_linear_schedule,
                      make_prior, task_guidance, timing_sweep)

prior = make_prior(("ramp-x", "ramp-y", "halfplane-x", "halfplane-y"),
                   16, 16, 1, s=0.4)
schedule = make_linear_schedule(50)
denoiser = AnalyticGMMDenoiser(prior, schedule)

tasks = []
for i in range(8):
    s_img, s_mask = (int(v) for v in chain_seeds(6, i, n=2))
    I, _ = draw_from_prior(prior, np.random.default_rng(s_img))
    M = generate_mask(MaskSpec(kind="thick", seed=s_mask), 16, 16)
    tasks.append((I, M, I))

cfg = task_guidance(ORDERING_TASK)
fractions = (0.13, 0.25, 0.5, 0.75, 1.0)
rows = timing_sweep(fractions, tasks, denoiser, prior, cfg,
                    schedule=schedule, base_seed=0)

print(f"{'stop':>5s} {'nll':>8s} {'seam':>9s} {'rmse':>7s} {'wall_s':>7s}")
for r in rows:
    print(f"{r['grad_stop_fraction']:5.2f} {r['nll_prior']:8.2f} "
          f"{r['seam_energy']:9.5f} {r['masked_rmse']:7.4f} "
          f"{r['wall_clock_s']:7.2f}")

full = rows[-1]["wall_clock_s"]
half = next(r for r in rows if r["grad_stop_fraction"] == 0.5)["wall_clock_s"]
print(f"\nstopping at 0.5 spends {half / full:.0%} of the full-chain time")
