import numpy as np
import pytest

from medmatting.core import AlphaMatte, DomainError
from medmatting.harness.augment import AugmentParams, apply_params, augment, draw_params
from medmatting.harness.schedule import lr_schedule
from medmatting.harness.synth import SyntheticScene, compose, synth_dataset


class TestCompose:
    def test_hard_matte_piecewise_constant(self):
        a = np.zeros((16, 16))
        a[4:12, 4:12] = 1.0
        scene = SyntheticScene(fg=0.9, bg=0.1, alpha=AlphaMatte(a), noise_sigma=0.0)
        img = compose(scene)
        assert (img.pixels[a == 1.0] == 0.9).all()
        assert (img.pixels[a == 0.0] == 0.1).all()

    def test_recomposition_residual_gaussian_tail(self):
        # clipping can only shrink |image - composite| below |noise|, and
        # P(|noise| > 3 sigma) ~ 0.27%, so >= 99% of pixels stay within 3 sigma
        rng = np.random.default_rng(0)
        sigma = 0.02
        total, within = 0, 0
        for seed in range(8):
            a = np.clip(np.random.default_rng(seed).uniform(-0.2, 1.2, (32, 32)), 0, 1)
            scene = SyntheticScene(fg=0.85, bg=0.15, alpha=AlphaMatte(a), noise_sigma=sigma)
            img = compose(scene, rng)
            composite = a * 0.85 + (1 - a) * 0.15
            residual = np.abs(img.pixels - composite)
            within += (residual <= 3 * sigma).sum()
            total += residual.size
        assert within / total >= 0.99

    def test_smooth_field_fg(self):
        a = np.full((16, 16), 0.5)
        fg = np.tile(np.linspace(0.6, 0.9, 16), (16, 1))
        scene = SyntheticScene(fg=fg, bg=0.2, alpha=AlphaMatte(a))
        img = compose(scene)
        np.testing.assert_allclose(img.pixels, 0.5 * fg + 0.5 * 0.2, atol=1e-12)

    def test_noise_requires_rng(self):
        scene = SyntheticScene(fg=0.9, bg=0.1, alpha=AlphaMatte(np.ones((16, 16))), noise_sigma=0.1)
        with pytest.raises(ValueError):
            compose(scene, rng=None)


class TestSynthDataset:
    def test_bitwise_reproducible(self):
        d1 = synth_dataset(4, 32, seed=7)
        d2 = synth_dataset(4, 32, seed=7)
        for (i1, a1, m1), (i2, a2, m2) in zip(d1, d2):
            assert i1.pixels.tobytes() == i2.pixels.tobytes()
            assert a1.alpha.tobytes() == a2.alpha.tobytes()
            for x, y in zip(m1.masks, m2.masks):
                assert x.mask.tobytes() == y.mask.tobytes()

    def test_different_seeds_differ(self):
        d1 = synth_dataset(1, 32, seed=1)
        d2 = synth_dataset(1, 32, seed=2)
        assert d1[0][0].pixels.tobytes() != d2[0][0].pixels.tobytes()

    def test_alpha_valid_and_nontrivial(self):
        for image, alpha, annotations in synth_dataset(8, 32, seed=3):
            a = alpha.alpha
            assert a.min() >= 0.0 and a.max() <= 1.0
            assert a.max() > 0.5  # blob core is opaque
            assert len(annotations.masks) == 4
            supports = [m.mask.sum() for m in annotations.masks]
            assert all(s2 <= s1 for s1, s2 in zip(supports, supports[1:]))

    def test_count_and_size_validation(self):
        with pytest.raises(ValueError):
            synth_dataset(0, 32, seed=0)
        with pytest.raises(ValueError):
            synth_dataset(1, 8, seed=0)


class TestAugment:
    def make_tuple(self, seed=0, size=16):
        rng = np.random.default_rng(seed)
        image = rng.uniform(0, 1, (size, size))
        alpha = np.clip(rng.uniform(-0.2, 1.2, (size, size)), 0, 1)
        masks = tuple(rng.integers(0, 2, (size, size)).astype(np.uint8) for _ in range(2))
        return image, alpha, masks

    def test_identity_params_unchanged(self):
        image, alpha, masks = self.make_tuple(1)
        out_img, out_alpha, out_masks = apply_params(AugmentParams(), image, alpha, masks)
        np.testing.assert_array_equal(out_img, image)
        np.testing.assert_array_equal(out_alpha, alpha)
        for a, b in zip(out_masks, masks):
            np.testing.assert_array_equal(a, b)

    def test_double_flip_is_involution(self):
        image, alpha, masks = self.make_tuple(2)
        params = AugmentParams(flip_h=True, flip_v=True)
        once = apply_params(params, image, alpha, masks)
        twice = apply_params(params, *once)
        np.testing.assert_array_equal(twice[0], image)
        np.testing.assert_array_equal(twice[1], alpha)
        for a, b in zip(twice[2], masks):
            np.testing.assert_array_equal(a, b)

    def test_ranges_preserved(self):
        image, alpha, masks = self.make_tuple(3)
        rng = np.random.default_rng(4)
        for _ in range(5):
            out_img, out_alpha, out_masks = augment(image, alpha, masks, rng)
            assert out_img.min() >= 0.0 and out_img.max() <= 1.0
            assert out_alpha.min() >= 0.0 and out_alpha.max() <= 1.0
            for m in out_masks:
                assert set(np.unique(m)) <= {0, 1}

    def test_joint_transform_consistency(self):
        # a mask equal to a thresholded alpha stays equal under flips
        image, alpha, _ = self.make_tuple(5)
        mask = (alpha >= 0.5).astype(np.uint8)
        params = AugmentParams(flip_h=True)
        _, out_alpha, (out_mask,) = apply_params(params, image, alpha, (mask,))
        np.testing.assert_array_equal(out_mask, (out_alpha >= 0.5).astype(np.uint8))

    def test_draw_params_deterministic(self):
        p1 = draw_params((16, 16), np.random.default_rng(9))
        p2 = draw_params((16, 16), np.random.default_rng(9))
        assert p1.flip_h == p2.flip_h and p1.angle_deg == p2.angle_deg
        np.testing.assert_array_equal(p1.shift_x, p2.shift_x)

    def test_color_image_augment(self):
        rng = np.random.default_rng(10)
        image = rng.uniform(0, 1, (16, 16, 3))
        out_img, _, _ = augment(image, None, (), rng)
        assert out_img.shape == (16, 16, 3)


class TestLrSchedule:
    def test_endpoints(self):
        assert lr_schedule(0, 100, 1e-3, 10) == 0.0
        assert lr_schedule(10, 100, 1e-3, 10) == pytest.approx(1e-3)
        assert lr_schedule(100, 100, 1e-3, 10) == pytest.approx(0.0, abs=1e-18)

    def test_decay_midpoint_is_half(self):
        base = 5e-4
        assert lr_schedule(55, 100, base, 10) == pytest.approx(base / 2, abs=1e-12)

    def test_linear_warmup(self):
        for s in range(10):
            assert lr_schedule(s, 100, 1.0, 10) == pytest.approx(s / 10)

    def test_out_of_range_rejected(self):
        with pytest.raises(DomainError):
            lr_schedule(-1, 100, 1e-3, 10)
        with pytest.raises(DomainError):
            lr_schedule(101, 100, 1e-3, 10)

    def test_no_warmup(self):
        assert lr_schedule(0, 100, 1.0, 0) == pytest.approx(1.0)
