"""Mask generation: binarity, determinism, family coverage ordering, and
spec validation."""

import numpy as np
import pytest

from gradfill.masks import KINDS, MaskSpec, coverage, generate_mask


def test_all_kinds_binary_and_shaped():
    for kind in KINDS:
        spec = MaskSpec(kind=kind, seed=3, p=0.5 if kind == "bernoulli" else None)
        M = generate_mask(spec, 16, 16)
        assert M.shape == (16, 16)
        assert M.dtype == np.float64
        assert np.all((M == 0.0) | (M == 1.0))


def test_determinism_and_seed_sensitivity():
    a = generate_mask(MaskSpec(kind="thick", seed=7), 16, 16)
    b = generate_mask(MaskSpec(kind="thick", seed=7), 16, 16)
    np.testing.assert_array_equal(a, b)
    seen = {generate_mask(MaskSpec(kind="thick", seed=s), 16, 16).tobytes()
            for s in range(10)}
    assert len(seen) > 1


def test_family_coverage_ordering():
    def mean_cover(kind):
        vals = [coverage(generate_mask(MaskSpec(kind=kind, seed=s), 16, 16))
                for s in range(60)]
        return float(np.mean(vals))

    thin, medium, thick = map(mean_cover, ("thin", "medium", "thick"))
    assert 0.0 < thin < medium < thick < 1.0


def test_bernoulli_coverage_tracks_p():
    for p in (0.2, 0.8):
        covers = [coverage(generate_mask(MaskSpec(kind="bernoulli", seed=s, p=p),
                                         16, 16))
                  for s in range(100)]
        assert abs(np.mean(covers) - p) < 0.02


def test_rect_is_one_solid_rectangle():
    for seed in range(20):
        M = generate_mask(MaskSpec(kind="rect", seed=seed), 12, 18)
        rows = np.where(M.any(axis=1))[0]
        cols = np.where(M.any(axis=0))[0]
        assert rows.size > 0 and cols.size > 0
        box = M[rows[0]:rows[-1] + 1, cols[0]:cols[-1] + 1]
        assert np.all(box == 1.0)
        assert M.sum() == box.size


def test_rect_fraction_ranges_respected():
    spec = MaskSpec(kind="rect", seed=0, rect_h=(1.0, 1.0), rect_w=(1.0, 1.0))
    M = generate_mask(spec, 8, 8)
    assert coverage(M) == 1.0


def test_stroke_overrides():
    wide = generate_mask(MaskSpec(kind="thin", seed=5, width=6.0), 16, 16)
    default = generate_mask(MaskSpec(kind="thin", seed=5), 16, 16)
    assert coverage(wide) > coverage(default)
    many = [coverage(generate_mask(
        MaskSpec(kind="thin", seed=s, n_strokes=(4, 4)), 16, 16))
        for s in range(20)]
    few = [coverage(generate_mask(
        MaskSpec(kind="thin", seed=s, n_strokes=(1, 1)), 16, 16))
        for s in range(20)]
    assert np.mean(many) > np.mean(few)


def test_validation_errors():
    with pytest.raises(ValueError, match="unknown mask kind"):
        generate_mask(MaskSpec(kind="blob"), 8, 8)
    with pytest.raises(ValueError, match="needs p in"):
        generate_mask(MaskSpec(kind="bernoulli"), 8, 8)
    with pytest.raises(ValueError, match="needs p in"):
        generate_mask(MaskSpec(kind="bernoulli", p=1.0), 8, 8)
    with pytest.raises(ValueError, match="outside \\(0, 1\\]"):
        generate_mask(MaskSpec(kind="rect", rect_h=(0.0, 0.5)), 8, 8)
    with pytest.raises(ValueError, match="outside \\(0, 1\\]"):
        generate_mask(MaskSpec(kind="rect", rect_w=(0.5, 1.5)), 8, 8)
    with pytest.raises(ValueError, match="stroke width"):
        generate_mask(MaskSpec(kind="thin", width=20.0), 8, 8)
    with pytest.raises(ValueError, match="stroke width"):
        generate_mask(MaskSpec(kind="thin", width=0.0), 8, 8)
    with pytest.raises(ValueError, match="bad stroke count"):
        generate_mask(MaskSpec(kind="thin", n_strokes=(3, 2)), 8, 8)
    with pytest.raises(ValueError, match="must be positive"):
        generate_mask(MaskSpec(kind="thin"), 0, 8)


def test_coverage_function():
    M = np.zeros((4, 4))
    assert coverage(M) == 0.0
    M[0, :] = 1.0
    assert coverage(M) == 0.25
