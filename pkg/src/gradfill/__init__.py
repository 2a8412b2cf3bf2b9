"""gradfill: masked image completion with guided reverse diffusion.

A small numpy/scipy implementation of denoising diffusion sampling with
three masked-completion guidance strategies, an analytic Gaussian
mixture score model for exact verification, a reverse-mode tape for the
gradient guidance, and an evaluation harness.
"""

from .denoisers import (AnalyticGMMDenoiser, ConvDenoiser, GMMPrior, gmm_eps,
                        load_model, save_model, train_denoiser)
from .formats import (FormatError, load_image, load_mask, load_tensor,
                      save_image, save_mask, save_tensor)
from .harness import (ExperimentConfig, OOD_TASK, ORDERING_TASK,
                      build_ordering_model, draw_from_prior, greyfill,
                      load_config, make_prior, mean_pattern, ood_tasks,
                      ordering_tasks, parse_config, run_eval, task_guidance)
from .losses import (GradientField, LossReport, alignment_loss, collage,
                     masked_mse, normalized_gradient, total_loss)
from .masks import MaskSpec, coverage, generate_mask
from .metrics import (EVAL_COLUMNS, EvalRecord, centered_rect_mask,
                      diversity_study, masked_rmse, nll_under_prior,
                      run_method_eval, seam_energy, timing_sweep,
                      write_records_csv)
from .samplers import (METHODS, ChainAborted, ChainTrace, GuidanceConfig,
                       StepRecord, combine_image_step, combine_noisy_step,
                       gradpaint_step, inpaint, sample_unconditional)
from .schedule import (NoiseSchedule, ddpm_posterior_step, estimate_x0,
                       forward_mix, load_schedule, make_linear_schedule,
                       posterior_coefficients, save_schedule)
from .seeding import chain_seeds
from .tensor import GradientMap, ShapeError, Tape, Tensor, backward

__version__ = "0.1.0"

__all__ = [
    "AnalyticGMMDenoiser", "ChainAborted", "ChainTrace", "ConvDenoiser",
    "EvalRecord", "ExperimentConfig", "FormatError", "GMMPrior",
    "GradientField", "GradientMap", "GuidanceConfig", "LossReport",
    "MaskSpec", "METHODS", "NoiseSchedule", "OOD_TASK", "ORDERING_TASK",
    "ShapeError", "StepRecord",
    "Tape", "Tensor", "alignment_loss", "backward", "build_ordering_model",
    "centered_rect_mask", "chain_seeds", "collage",
    "combine_image_step", "combine_noisy_step", "coverage", "diversity_study",
    "ddpm_posterior_step", "draw_from_prior", "estimate_x0", "forward_mix",
    "generate_mask", "gmm_eps", "gradpaint_step", "greyfill", "inpaint",
    "EVAL_COLUMNS", "run_method_eval", "write_records_csv",
    "load_config", "load_image", "load_mask", "load_model", "load_schedule",
    "load_tensor", "make_linear_schedule", "make_prior", "masked_mse",
    "masked_rmse", "mean_pattern", "nll_under_prior", "normalized_gradient",
    "ood_tasks", "ordering_tasks",
    "parse_config", "posterior_coefficients", "run_eval", "sample_unconditional",
    "save_image", "save_mask", "save_model", "save_schedule", "save_tensor",
    "seam_energy", "task_guidance", "timing_sweep", "total_loss",
    "train_denoiser",
]
