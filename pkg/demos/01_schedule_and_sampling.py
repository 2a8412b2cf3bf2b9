"""Build a noise schedule, inspect it, and run the plain reverse chain.

The prior here is a two-component Gaussian mixture over 12x12 images
(a left-lit and a right-lit halfplane), so the exact denoiser is
available in closed form and the chain can be checked against the
distribution it is supposed to sample.
"""
import numpy as np

from gradfill import (AnalyticGMMDenoiser, chain_seeds, make_linear_schedule,
                      make_prior, nll_under_prior, sample_unconditional)

# The schedule: alpha_bar runs from 1 (clean) down to nearly 0 (noise),
# sigma is the posterior standard deviation per step, zero at the end.
schedule = make_linear_schedule(50)
print(f"steps            {schedule.T}")
print(f"alpha_bar[1]     {schedule.alpha_bar[1]:.6f}")
print(f"alpha_bar[T]     {schedule.alpha_bar[schedule.T]:.3e}")
print(f"sigma[1]         {schedule.sigma[1]}")
print(f"sigma[T]         {schedule.sigma[schedule.T]:.4f}")

prior = make_prior(("halfplane-x", "halfplane-y"), 12, 12, 1, s=0.4)
denoiser = AnalyticGMMDenoiser(prior, schedule)

# Draw a batch of unconditional samples.  Each sample should land near
# one of the two component means, in proportion to the mixture weights.
hits = np.zeros(prior.K, dtype=int)
nlls = []
for i in range(40):
    seed = int(chain_seeds(1, i)[0])
    x = sample_unconditional(denoiser, schedule, prior.image_shape, seed)
    dists = [float(np.sum((x - prior.means[k]) ** 2)) for k in range(prior.K)]
    hits[int(np.argmin(dists))] += 1
    nlls.append(nll_under_prior(prior, x))

print(f"\ncomponent hits   {hits.tolist()}  (weights {prior.weights.tolist()})")
print(f"mean sample NLL  {np.mean(nlls):.2f}")
print(f"prior-mean NLL   {nll_under_prior(prior, prior.means[0]):.2f}  (best case)")
