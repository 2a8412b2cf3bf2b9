"""Metric and study tests: exact NLL values, seam/RMSE identities,
coverage masks, diversity and timing sweeps on a tiny world."""
import csv

import numpy as np
import pytest
from scipy.special import logsumexp

from gradfill.denoisers import AnalyticGMMDenoiser, GMMPrior
from gradfill.losses import alignment_loss
from gradfill.metrics import (EVAL_COLUMNS, EvalRecord, centered_rect_mask,
                              diversity_study, masked_rmse, nll_under_prior,
                              run_method_eval, seam_energy, timing_sweep,
                              write_records_csv)
from gradfill.samplers import GuidanceConfig
from gradfill.schedule import make_linear_schedule


def two_component_prior(H=4, W=4, s=0.5):
    means = np.zeros((2, H, W, 1))
    means[0] = 0.6
    means[1] = -0.6
    return GMMPrior(np.array([0.5, 0.5]), means, s)


def test_nll_single_gaussian_at_mean():
    # One component, x at its mean: NLL = 0.5 d log(2 pi s^2) exactly.
    means = np.full((1, 2, 2, 1), 0.3)
    prior = GMMPrior(np.array([1.0]), means, 0.5)
    got = nll_under_prior(prior, means[0])
    want = 0.5 * 4 * np.log(2.0 * np.pi * 0.25)
    assert got == pytest.approx(want, rel=1e-12)
    assert got == pytest.approx(0.9031654105789096 * 4 / 4, rel=1e-12)


def test_nll_matches_direct_logsumexp():
    prior = two_component_prior()
    rng = np.random.default_rng(0)
    for _ in range(5):
        x = rng.normal(0.0, 0.7, (4, 4, 1))
        quad = ((x[None] - prior.means) ** 2).sum(axis=(1, 2, 3)) / (2 * 0.25)
        ln = 0.5 * 16 * np.log(2 * np.pi * 0.25)
        want = -logsumexp(np.log([0.5, 0.5]) - quad - ln)
        assert nll_under_prior(prior, x) == pytest.approx(want, rel=1e-12)


def test_nll_is_permutation_invariant_in_components():
    prior = two_component_prior()
    flipped = GMMPrior(prior.weights[::-1].copy(), prior.means[::-1].copy(),
                       prior.s)
    rng = np.random.default_rng(1)
    x = rng.normal(0.0, 0.5, (4, 4, 1))
    assert nll_under_prior(prior, x) == pytest.approx(
        nll_under_prior(flipped, x), rel=1e-12)


def test_nll_shape_check():
    prior = two_component_prior()
    with pytest.raises(ValueError, match="does not match prior"):
        nll_under_prior(prior, np.zeros((3, 4, 1)))


def test_seam_energy_is_alignment_loss():
    rng = np.random.default_rng(2)
    x = rng.normal(0.0, 1.0, (6, 6, 1))
    M = np.zeros((6, 6))
    M[2:5, 2:5] = 1.0
    assert seam_energy(x, M) == float(alignment_loss(x, M).data)
    assert seam_energy(x, M) > 0.0


def test_masked_rmse_cases():
    x = np.zeros((4, 4, 1))
    ref = np.ones((4, 4, 1))
    M = np.zeros((4, 4))
    assert masked_rmse(x, ref, M) == 0.0
    M[0, 0] = 1.0
    assert masked_rmse(x, ref, M) == pytest.approx(1.0, rel=1e-12)
    # Differences outside the mask are invisible.
    noisy = ref.copy()
    noisy[3, 3, 0] = 100.0
    assert masked_rmse(x, noisy, M) == pytest.approx(1.0, rel=1e-12)
    x2 = ref.copy()
    x2[0, 0, 0] = 1.0 - 0.5
    assert masked_rmse(x2, ref, M) == pytest.approx(0.5, rel=1e-12)


def test_centered_rect_mask_properties():
    M = centered_rect_mask(16, 16, 0.25)
    assert M.shape == (16, 16)
    assert set(np.unique(M)) <= {0.0, 1.0}
    assert M.mean() == pytest.approx(0.25, abs=0.05)
    # The masked region is one solid centered rectangle.
    rows = np.where(M.any(axis=1))[0]
    cols = np.where(M.any(axis=0))[0]
    assert np.array_equal(rows, np.arange(rows[0], rows[-1] + 1))
    assert np.array_equal(cols, np.arange(cols[0], cols[-1] + 1))
    assert M[rows[0]:rows[-1] + 1, cols[0]:cols[-1] + 1].all()
    assert centered_rect_mask(8, 8, 0.0).sum() == 0
    assert centered_rect_mask(8, 8, 1.0).sum() == 64
    with pytest.raises(ValueError, match="coverage must be in"):
        centered_rect_mask(8, 8, 1.2)


def test_eval_record_csv_round_trip(tmp_path):
    rec = EvalRecord(method="combine-image", mask_kind="thick", run=3,
                     seed=12345, nll_prior=1.25, seam_energy=0.001953125,
                     masked_rmse=0.5, wall_clock_s=0.125)
    path = tmp_path / "records.csv"
    write_records_csv(path, [rec])
    with open(path, encoding="ascii") as f:
        rows = list(csv.DictReader(f))
    assert tuple(rows[0].keys()) == EVAL_COLUMNS
    assert rows[0]["method"] == "combine-image"
    assert float(rows[0]["nll_prior"]) == 1.25
    assert float(rows[0]["seam_energy"]) == 0.001953125
    assert int(rows[0]["run"]) == 3


def test_write_records_header_only_for_empty_list(tmp_path):
    path = tmp_path / "empty.csv"
    write_records_csv(path, [])
    text = open(path, encoding="ascii").read()
    assert text == ",".join(EVAL_COLUMNS) + "\n"


class _World:
    def __init__(self, T=20, H=6):
        self.prior = two_component_prior(H, H, s=0.4)
        self.schedule = make_linear_schedule(T)
        self.denoiser = AnalyticGMMDenoiser(self.prior, self.schedule)
        rng = np.random.default_rng(5)
        self.I, _ = (self.prior.means[0]
                     + rng.normal(0, 0.1, (H, H, 1)), None)
        self.cfg = GuidanceConfig(steps=T, align_active_fraction=1.0)


def test_diversity_study_shape_and_determinism():
    w = _World()
    rows = diversity_study("combine-image", w.denoiser, w.I,
                           (0.0, 0.25, 0.75), 4, w.cfg,
                           schedule=w.schedule, base_seed=7)
    assert [r["coverage"] for r in rows] == [0.0, 0.25, 0.75]
    assert rows[0]["variance"] == 0.0
    assert rows[1]["variance"] > 0.0
    assert rows[2]["variance"] > 0.0
    assert all(r["n"] == 4 for r in rows)
    again = diversity_study("combine-image", w.denoiser, w.I,
                            (0.0, 0.25, 0.75), 4, w.cfg,
                            schedule=w.schedule, base_seed=7)
    assert rows == again
    with pytest.raises(ValueError, match="at least 2 samples"):
        diversity_study("combine-image", w.denoiser, w.I, (0.5,), 1, w.cfg,
                        schedule=w.schedule)


def test_timing_sweep_rows():
    w = _World()
    M = centered_rect_mask(6, 6, 0.4)
    tasks = [(w.I, M, w.I)]
    rows = timing_sweep((0.25, 1.0), tasks, w.denoiser, w.prior, w.cfg,
                        schedule=w.schedule, base_seed=3)
    assert [r["grad_stop_fraction"] for r in rows] == [0.25, 1.0]
    for r in rows:
        assert r["wall_clock_s"] > 0.0
        assert np.isfinite(r["nll_prior"])
        assert np.isfinite(r["seam_energy"])
        assert r["masked_rmse"] >= 0.0
    # More gradient steps cost more time; seeds are shared across rows.
    assert rows[1]["wall_clock_s"] > rows[0]["wall_clock_s"]


def test_run_method_eval_records_and_outputs():
    w = _World()
    M = centered_rect_mask(6, 6, 0.4)
    tasks = [(w.I, M, w.I), (w.I, M, None)]
    records, outputs = run_method_eval("combine-image", w.denoiser, w.prior,
                                       tasks, w.cfg, schedule=w.schedule,
                                       mask_kind="rect", base_seed=1)
    assert len(records) == 2 and len(outputs) == 2
    assert [r.run for r in records] == [0, 1]
    assert all(r.method == "combine-image" for r in records)
    assert all(r.mask_kind == "rect" for r in records)
    assert records[0].masked_rmse > 0.0
    assert records[1].masked_rmse == 0.0  # no reference given
    assert records[0].seed != records[1].seed
    assert all(np.isfinite(r.nll_prior) for r in records)
    # Outputs respect the unmasked region.
    keep = M == 0.0
    for out in outputs:
        assert np.array_equal(out[keep], w.I[keep])
