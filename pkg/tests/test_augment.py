"""Tests for seed-addressable augmentations: determinism, locality, statistics."""

from collections import deque

import numpy as np
import pytest

from twoview.augment import (
    AugStrategy,
    BoundsError,
    CorruptParams,
    CropParams,
    EraseParams,
    RngStream,
    ViewPair,
    _dfdc_selim_impl,
    _erase_rect,
    _ra_aug_impl,
    _random_resized_crop_impl,
    _sample_crop_rect,
    _sample_erase_rect,
    apply_augment,
    crop_enlarged,
    dfdc_selim,
    make_pair,
    ra_aug,
    random_erase,
    random_resized_crop,
)
from twoview.ndgrad import ContractError


class ScriptedGen:
    """Duck-typed generator whose first draws are scripted, then a real one."""

    def __init__(self, uniform=(), random=(), integers=(), seed=0):
        self.u = deque(uniform)
        self.r = deque(random)
        self.i = deque(integers)
        self.gen = np.random.default_rng(seed)

    def uniform(self, low=0.0, high=1.0, size=None):
        if self.u and size is None:
            return self.u.popleft()
        return self.gen.uniform(low, high, size)

    def random(self, size=None):
        if self.r and size is None:
            return self.r.popleft()
        return self.gen.random(size)

    def integers(self, low, high=None):
        if self.i:
            return self.i.popleft()
        return self.gen.integers(low, high)

    def normal(self, loc=0.0, scale=1.0, size=None):
        return self.gen.normal(loc, scale, size)


def sample_image(seed=0, size=64):
    rng = np.random.default_rng(seed)
    return rng.uniform(0.05, 0.95, (size, size, 3))


class TestRngStream:
    def test_same_address_same_sequence(self):
        a = RngStream(seed=7, epoch=2, index=5, view=1)
        b = RngStream(seed=7, epoch=2, index=5, view=1)
        assert np.array_equal(a.generator().random(16), b.generator().random(16))

    def test_distinct_addresses_differ(self):
        base = RngStream(seed=7, epoch=2, index=5, view=1).generator().random(8)
        for other in (
            RngStream(8, 2, 5, 1),
            RngStream(7, 3, 5, 1),
            RngStream(7, 2, 6, 1),
            RngStream(7, 2, 5, 0),
        ):
            assert not np.array_equal(base, other.generator().random(8))

    def test_streams_look_independent(self):
        # Crude cross-correlation check over many sibling addresses.
        draws = np.array(
            [RngStream(seed=1, epoch=0, index=i, view=0).generator().random(4) for i in range(500)]
        )
        corr = np.corrcoef(draws.T)
        off_diag = corr[~np.eye(4, dtype=bool)]
        assert np.max(np.abs(off_diag)) < 0.15

    def test_negative_fields_rejected(self):
        with pytest.raises(ContractError):
            RngStream(seed=-1)
        with pytest.raises(ContractError):
            RngStream(seed=0, epoch=-2)


class TestRandomErase:
    def test_deterministic_per_address(self):
        img = sample_image(1)
        rng = RngStream(seed=3, epoch=0, index=4, view=1)
        assert np.array_equal(random_erase(img, rng), random_erase(img, rng))

    def test_forced_rect_locality(self):
        img = sample_image(2)
        out = _erase_rect(img, (0, 0, 8, 8), np.random.default_rng(0))
        assert np.array_equal(out[8:, :], img[8:, :])
        assert np.array_equal(out[:, 8:], img[:, 8:])
        assert not np.array_equal(out[:8, :8], img[:8, :8])

    def test_changes_confined_to_sampled_rect(self):
        img = sample_image(3)
        for idx in range(50):
            rng = RngStream(seed=11, epoch=0, index=idx, view=0)
            out = random_erase(img, rng)
            rect = _sample_erase_rect(64, 64, rng.generator(), EraseParams())
            assert rect is not None
            top, left, rh, rw = rect
            outside = np.ones((64, 64), dtype=bool)
            outside[top : top + rh, left : left + rw] = False
            assert np.array_equal(out[outside], img[outside])

    def test_realized_stats_within_ranges(self):
        params = EraseParams()
        none_count = 0
        for idx in range(2000):
            gen = RngStream(seed=5, epoch=0, index=idx, view=0).generator()
            rect = _sample_erase_rect(64, 64, gen, params)
            if rect is None:
                none_count += 1
                continue
            _, _, rh, rw = rect
            assert 0.02 <= (rh * rw) / 4096.0 <= 0.2
            assert 0.5 <= rh / rw <= 2.0
        assert none_count < 20

    def test_values_stay_valid(self):
        img = sample_image(4)
        out = random_erase(img, RngStream(seed=9))
        assert out.min() >= 0.0 and out.max() <= 1.0 and out.shape == img.shape


class TestRandomResizedCrop:
    def test_forced_full_crop_is_identity(self):
        img = sample_image(5)
        gen = ScriptedGen(uniform=[1.0, 0.0], integers=[0, 0])
        out = _random_resized_crop_impl(img, gen, CropParams())
        assert np.max(np.abs(out - img)) < 1e-12

    def test_constant_image_preserved(self):
        img = np.full((64, 64, 3), 0.6)
        out = random_resized_crop(img, RngStream(seed=2))
        np.testing.assert_allclose(out, 0.6, atol=1e-12)

    def test_realized_area_within_range(self):
        params = CropParams()
        for idx in range(2000):
            gen = RngStream(seed=6, epoch=1, index=idx, view=0).generator()
            rect = _sample_crop_rect(64, 64, gen, params)
            assert rect is not None
            _, _, ch, cw = rect
            assert 1.0 / 1.3 <= (ch * cw) / 4096.0 <= 1.0
            assert 0.9 <= ch / cw <= 1.1

    def test_deterministic_and_shape_preserving(self):
        img = sample_image(6)
        rng = RngStream(seed=8, index=3)
        a = random_resized_crop(img, rng)
        b = random_resized_crop(img, rng)
        assert np.array_equal(a, b) and a.shape == img.shape


class TestRaAug:
    def test_identity_branch(self):
        img = sample_image(7)
        out = _ra_aug_impl(img, ScriptedGen(random=[0.1]), EraseParams(), CropParams())
        assert np.array_equal(out, img)

    def test_erase_branch_locality(self):
        img = sample_image(8)
        out = _ra_aug_impl(img, ScriptedGen(random=[0.5], seed=3), EraseParams(), CropParams())
        diff = np.any(out != img, axis=2)
        rows = np.flatnonzero(diff.any(axis=1))
        cols = np.flatnonzero(diff.any(axis=0))
        changed_box = diff[rows[0] : rows[-1] + 1, cols[0] : cols[-1] + 1]
        assert changed_box.all()  # the changed region is one solid rectangle
        assert diff.sum() == changed_box.size

    def test_branch_frequencies(self):
        counts = {"id": 0, "re": 0, "crop": 0}
        n = 3000
        for idx in range(n):
            gen = RngStream(seed=10, epoch=0, index=idx, view=0).generator()
            u = gen.random()
            if u < 1 / 3:
                counts["id"] += 1
            elif u < 2 / 3:
                counts["re"] += 1
            else:
                counts["crop"] += 1
        for v in counts.values():
            assert abs(v / n - 1 / 3) < 0.05

    def test_deterministic(self):
        img = sample_image(9)
        rng = RngStream(seed=12, epoch=2, index=7, view=1)
        assert np.array_equal(ra_aug(img, rng), ra_aug(img, rng))


class TestDfdcSelim:
    def test_no_stage_fires_identity(self):
        img = sample_image(10)
        out = _dfdc_selim_impl(img, ScriptedGen(random=[0.9] * 5), CorruptParams())
        assert np.array_equal(out, img)

    def test_blur_sigma_zero_identity(self):
        img = sample_image(11)
        # Only the blur stage fires, with sigma forced to 0.
        gen = ScriptedGen(random=[0.9, 0.9, 0.1, 0.9, 0.9], uniform=[0.0])
        out = _dfdc_selim_impl(img, gen, CorruptParams())
        assert np.array_equal(out, img)

    def test_constant_survives_noise_free_realizations(self):
        img = np.full((64, 64, 3), 0.45)
        # Fire quality, blur, shift, scale; skip the noise stage.
        gen = ScriptedGen(random=[0.1, 0.9, 0.1, 0.1, 0.1], seed=5)
        out = _dfdc_selim_impl(img, gen, CorruptParams())
        np.testing.assert_allclose(out, 0.45, atol=1e-12)

    def test_deterministic_and_valid(self):
        img = sample_image(12)
        rng = RngStream(seed=13, epoch=1, index=2, view=0)
        a = dfdc_selim(img, rng)
        b = dfdc_selim(img, rng)
        assert np.array_equal(a, b)
        assert a.shape == img.shape and a.min() >= 0.0 and a.max() <= 1.0


class TestApplyAugmentAndPairs:
    @pytest.mark.parametrize("kind", ["none", "re", "randcrop", "raaug", "dfdc"])
    def test_type_contract_sweep(self, kind):
        img = sample_image(13)
        strategy = AugStrategy(kind=kind)
        for idx in range(25):
            out = apply_augment(img, strategy, RngStream(seed=14, index=idx))
            assert out.shape == img.shape
            assert out.dtype == np.float64
            assert out.min() >= 0.0 and out.max() <= 1.0

    def test_strategy_none_identity(self):
        img = sample_image(14)
        pair = make_pair(img, 0, AugStrategy("none"), RngStream(1), RngStream(2))
        assert np.array_equal(pair.x1, img) and np.array_equal(pair.x2, img)

    def test_identical_addresses_identical_views(self):
        img = sample_image(15)
        rng = RngStream(seed=4, epoch=1, index=9, view=0)
        pair = make_pair(img, 1, AugStrategy("raaug"), rng, rng)
        assert np.array_equal(pair.x1, pair.x2)

    def test_label_copied_not_altered(self):
        img = sample_image(16)
        for label in (0, 1):
            pair = make_pair(
                img, label, AugStrategy("raaug"), RngStream(5, view=0), RngStream(5, view=1)
            )
            assert isinstance(pair, ViewPair) and pair.label == label

    def test_unknown_kind_rejected(self):
        with pytest.raises(ContractError):
            AugStrategy("jpeg")

    def test_bad_range_rejected(self):
        with pytest.raises(ContractError):
            AugStrategy("re", erase=EraseParams(area_range=(0.3, 0.1)))


class TestCropEnlarged:
    def test_hand_geometry_13px(self):
        img = sample_image(17)
        out = crop_enlarged(img, (27, 27, 10, 10), 1.3, out_size=13)
        # Enlarging 10x10 about center (32, 32) by 1.3 gives the 13x13 region
        # with top-left (25, 25); at out_size 13 the resize is the identity.
        assert np.array_equal(out, img[25:38, 25:38])

    def test_factor_one_full_image(self):
        img = sample_image(18)
        out = crop_enlarged(img, (0, 0, 64, 64), 1.0, out_size=64)
        assert np.array_equal(out, img)

    def test_clipping_at_border(self):
        img = sample_image(19)
        out = crop_enlarged(img, (0, 0, 10, 10), 2.0, out_size=20)
        # Enlarged box would start at -5; clipping pins it to the corner.
        assert np.array_equal(out, img[0:20, 0:20])

    def test_bbox_out_of_bounds(self):
        img = sample_image(20)
        for bbox in [(-1, 0, 5, 5), (0, 62, 5, 5), (60, 0, 10, 5), (0, 0, 0, 5)]:
            with pytest.raises(BoundsError):
                crop_enlarged(img, bbox, 1.3)

    def test_factor_below_one_rejected(self):
        with pytest.raises(ContractError):
            crop_enlarged(sample_image(21), (10, 10, 5, 5), 0.9)
