"""Command line front end.

Subcommands: sample, inpaint, make-masks, train-denoiser, eval, sweep,
diversity.  Exit status 0 on success, 1 on runtime failure (bad input
file, aborted chain), 2 on usage errors (argparse's convention).
"""

from __future__ import annotations

import argparse
import csv
import os
import sys

import numpy as np

from .denoisers import AnalyticGMMDenoiser, ConvDenoiser, save_model, train_denoiser
from .formats import FormatError, load_image, load_mask, save_image, save_mask, save_tensor
from .harness import (build_prior_and_denoiser, draw_from_prior, load_config,
                      make_prior, run_eval)
from .masks import KINDS, MaskSpec, coverage, generate_mask
from .metrics import diversity_study, masked_rmse, nll_under_prior, seam_energy, timing_sweep
from .samplers import METHODS, ChainAborted, GuidanceConfig, inpaint, sample_unconditional
from .schedule import make_linear_schedule
from .seeding import chain_seeds


def _shape(text):
    parts = tuple(int(v) for v in text.split(","))
    if len(parts) == 3:
        return parts
    if len(parts) == 2:
        return parts + (1,)
    raise argparse.ArgumentTypeError(f"bad shape {text!r}, want H,W or H,W,C")


def _floats(text):
    return [float(v) for v in text.split(",")]


def _patterns(text):
    return tuple(text.split(","))


def _add_prior_args(p):
    p.add_argument("--shape", type=_shape, default=(16, 16, 1),
                   help="H,W,C of the working grid (default 16,16,1)")
    p.add_argument("--patterns", type=_patterns, default=("ramp-x", "ramp-y"),
                   help="comma list of prior mean patterns")
    p.add_argument("--prior-s", type=float, default=0.25,
                   help="per-component standard deviation")
    p.add_argument("--amplitude", type=float, default=0.8,
                   help="mean pattern amplitude")


def _add_guidance_args(p):
    p.add_argument("--steps", type=int, default=100)
    p.add_argument("--lambda-al", type=float, default=400.0)
    p.add_argument("--lr", type=float, default=0.005,
                   help="normalized gradient update size")
    p.add_argument("--align-active-fraction", type=float, default=0.45)
    p.add_argument("--grad-stop-fraction", type=float, default=1.0)
    p.add_argument("--loss-target", choices=("collage", "raw-x0hat"),
                   default="collage")


def _guidance(args, seed):
    return GuidanceConfig(
        steps=args.steps, lambda_al=args.lambda_al,
        learning_rate=args.lr,
        align_active_fraction=args.align_active_fraction,
        grad_stop_fraction=args.grad_stop_fraction,
        loss_target=args.loss_target, rng_seed=seed)


def _save_output(path, image):
    if path.endswith(".gpt1"):
        save_tensor(path, image)
    else:
        save_image(path, image)


def _cmd_sample(args):
    H, W, C = args.shape
    prior = make_prior(args.patterns, H, W, C, args.prior_s, args.amplitude)
    schedule = make_linear_schedule(args.steps)
    denoiser = AnalyticGMMDenoiser(prior, schedule, cond=args.cond)
    x = sample_unconditional(denoiser, schedule, (H, W, C), args.seed)
    _save_output(args.out, np.clip(x, -1.0, 1.0) if not args.out.endswith(".gpt1") else x)
    print(f"wrote {args.out}")
    return 0


def _cmd_inpaint(args):
    H, W, C = args.shape
    prior = make_prior(args.patterns, H, W, C, args.prior_s, args.amplitude)
    schedule = make_linear_schedule(args.steps)
    denoiser = AnalyticGMMDenoiser(prior, schedule)
    if (args.image is None) != (args.mask is None):
        print("error: --image and --mask must be given together", file=sys.stderr)
        return 2
    if args.image is not None:
        I = load_image(args.image)
        M = load_mask(args.mask)
        if I.shape[:2] != (H, W) or I.shape[2] != C:
            H, W, C = I.shape
            prior = make_prior(args.patterns, H, W, C, args.prior_s, args.amplitude)
            denoiser = AnalyticGMMDenoiser(prior, schedule)
    else:
        # Built-in task: reference drawn from the prior, stroke mask.
        s_img, s_mask = chain_seeds(args.seed, 0, n=2)
        rng = np.random.default_rng(s_img)
        I, _ = draw_from_prior(prior, rng)
        M = generate_mask(MaskSpec(kind=args.mask_kind, seed=s_mask), H, W)
    cfg = _guidance(args, args.seed)
    out, trace = inpaint(args.method, denoiser, I, M, cfg, schedule=schedule)
    _save_output(args.out, out)
    print(f"wrote {args.out}")
    if args.trace is not None:
        trace.to_csv(args.trace)
        print(f"wrote {args.trace}")
    print(f"nll_prior={nll_under_prior(prior, out):.6f} "
          f"seam_energy={seam_energy(out, M):.6e} "
          f"mask_coverage={coverage(M):.3f}")
    return 0


def _cmd_make_masks(args):
    H, W = args.shape[0], args.shape[1]
    os.makedirs(args.out_dir, exist_ok=True)
    for i in range(args.n):
        spec = MaskSpec(kind=args.kind, seed=args.seed + i, p=args.p)
        M = generate_mask(spec, H, W)
        path = os.path.join(args.out_dir, f"mask_{args.kind}_{i:03d}.pgm")
        save_mask(path, M)
        print(f"wrote {path} coverage={coverage(M):.3f}")
    return 0


def _cmd_train_denoiser(args):
    H, W, C = args.shape
    prior = make_prior(args.patterns, H, W, C, args.prior_s, args.amplitude)

    def sample_x0(rng):
        x, _ = draw_from_prior(prior, rng, clip=False)
        return x

    schedule = make_linear_schedule(args.steps)
    model = ConvDenoiser(channels=C, hidden=args.hidden, layers=args.layers,
                         seed=args.seed)
    model, losses = train_denoiser(model, sample_x0, schedule,
                                   steps=args.train_steps, lr=args.lr,
                                   seed=args.seed)
    save_model(model, args.out_dir)
    print(f"wrote {args.out_dir} "
          f"(first loss {losses[0]:.4f}, last loss {losses[-1]:.4f})")
    return 0


def _cmd_eval(args):
    config = load_config(args.config)
    records = run_eval(config, args.out_dir)
    print(f"wrote {os.path.join(args.out_dir, 'records.csv')} "
          f"({len(records)} records)")
    return 0


def _cmd_sweep(args):
    spec_shape = args.shape
    H, W, C = spec_shape
    prior = make_prior(args.patterns, H, W, C, args.prior_s, args.amplitude)
    schedule = make_linear_schedule(args.steps)
    denoiser = AnalyticGMMDenoiser(prior, schedule)
    tasks = []
    for i in range(args.n_tasks):
        s_img, s_mask = chain_seeds(args.seed, i, n=2)
        rng = np.random.default_rng(s_img)
        reference, _ = draw_from_prior(prior, rng)
        M = generate_mask(MaskSpec(kind=args.mask_kind, seed=s_mask), H, W)
        if M.sum() == 0:
            M[H // 2, W // 2] = 1.0
        tasks.append((reference, M, reference))
    cfg = _guidance(args, args.seed)
    rows = timing_sweep(args.fractions, tasks, denoiser, prior, cfg,
                        schedule=schedule, base_seed=args.seed)
    _write_dict_rows(args.out, rows)
    print(f"wrote {args.out}")
    return 0


def _cmd_diversity(args):
    H, W, C = args.shape
    prior = make_prior(args.patterns, H, W, C, args.prior_s, args.amplitude)
    schedule = make_linear_schedule(args.steps)
    denoiser = AnalyticGMMDenoiser(prior, schedule)
    rng = np.random.default_rng(chain_seeds(args.seed, 0)[0])
    I, _ = draw_from_prior(prior, rng)
    cfg = _guidance(args, args.seed)
    rows = diversity_study(args.method, denoiser, I, args.coverages, args.n,
                           cfg, schedule=schedule, base_seed=args.seed)
    _write_dict_rows(args.out, rows)
    print(f"wrote {args.out}")
    return 0


def _write_dict_rows(path, rows):
    with open(path, "w", encoding="ascii", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=list(rows[0].keys()))
        writer.writeheader()
        for row in rows:
            writer.writerow({k: repr(v) if isinstance(v, float) else v
                             for k, v in row.items()})


def build_parser():
    parser = argparse.ArgumentParser(
        prog="gradfill",
        description="Masked image completion with guided reverse diffusion.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("sample", help="draw unconditional samples")
    _add_prior_args(p)
    p.add_argument("--steps", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--cond", type=int, default=None,
                   help="condition on one mixture component")
    p.add_argument("--out", required=True, help=".pgm/.ppm or .gpt1 path")
    p.set_defaults(func=_cmd_sample)

    p = sub.add_parser("inpaint", help="complete a masked image")
    p.add_argument("--method", choices=METHODS, default="gradpaint")
    p.add_argument("--image", help="input .pgm/.ppm (omit for built-in task)")
    p.add_argument("--mask", help="mask .pgm with values 0/255")
    p.add_argument("--mask-kind", choices=KINDS, default="thick",
                   help="mask family for the built-in task")
    p.add_argument("--out", required=True)
    p.add_argument("--trace", help="write per-step telemetry CSV here")
    p.add_argument("--seed", type=int, default=0)
    _add_prior_args(p)
    _add_guidance_args(p)
    p.set_defaults(func=_cmd_inpaint)

    p = sub.add_parser("make-masks", help="generate mask files")
    p.add_argument("--kind", choices=KINDS, default="thick")
    p.add_argument("--n", type=int, default=4)
    p.add_argument("--shape", type=_shape, default=(16, 16, 1))
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--p", type=float, default=None, help="bernoulli rate")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=_cmd_make_masks)

    p = sub.add_parser("train-denoiser", help="fit the small conv denoiser")
    _add_prior_args(p)
    p.add_argument("--steps", type=int, default=100)
    p.add_argument("--train-steps", type=int, default=200)
    p.add_argument("--lr", type=float, default=0.01)
    p.add_argument("--hidden", type=int, default=16)
    p.add_argument("--layers", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=_cmd_train_denoiser)

    p = sub.add_parser("eval", help="run a JSON experiment config")
    p.add_argument("--config", required=True)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("sweep", help="gradient stop fraction trade-off")
    _add_prior_args(p)
    _add_guidance_args(p)
    p.add_argument("--fractions", type=_floats, default=[0.0, 0.25, 0.5, 1.0])
    p.add_argument("--n-tasks", type=int, default=4)
    p.add_argument("--mask-kind", choices=KINDS, default="thick")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("diversity", help="output variance versus coverage")
    _add_prior_args(p)
    _add_guidance_args(p)
    p.add_argument("--method", choices=METHODS, default="gradpaint")
    p.add_argument("--coverages", type=_floats, default=[0.0, 0.2, 0.5, 0.9])
    p.add_argument("--n", type=int, default=8)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_diversity)

    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, FormatError, ChainAborted, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
