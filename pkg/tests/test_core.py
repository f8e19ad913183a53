import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from mpmath import mp
from PIL import Image as PILImage

from medmatting import core
from medmatting.core import (
    AlphaMatte,
    BinaryMask,
    DomainError,
    FormatError,
    Image,
    ShapeError,
    Trimap,
    TrimapLabel,
    alpha_entropy,
)


def binary_entropy_oracle(a: float, dps: int = 50) -> float:
    """Arbitrary-precision -a*ln(a) - (1-a)*ln(1-a), convention 0*ln(0)=0."""
    mp.dps = dps
    x = mp.mpf(a)
    if x == 0 or x == 1:
        return 0.0
    return float(-x * mp.log(x) - (1 - x) * mp.log(1 - x))


class TestAlphaEntropy:
    def test_all_zero_alpha(self):
        u = alpha_entropy(AlphaMatte(np.zeros((8, 8))))
        assert (u.values == 0.0).all()

    def test_all_half_alpha_is_ln2(self):
        u = alpha_entropy(AlphaMatte(np.full((8, 8), 0.5)))
        np.testing.assert_allclose(u.values, np.log(2.0), rtol=0, atol=1e-15)

    def test_point_nine_matches_high_precision(self):
        expected = binary_entropy_oracle(0.9)  # ~0.32508297339144845
        u = alpha_entropy(AlphaMatte(np.full((8, 8), 0.9)))
        np.testing.assert_allclose(u.values, expected, rtol=0, atol=1e-12)
        assert abs(expected - 0.3251) < 5e-5

    def test_matches_high_precision_on_random_pixels(self):
        rng = np.random.default_rng(7)
        a = rng.uniform(0.0, 1.0, size=(25, 40))
        u = alpha_entropy(AlphaMatte(a)).values
        for i, j in zip(*np.unravel_index(rng.choice(1000, 50), a.shape)):
            assert abs(u[i, j] - binary_entropy_oracle(a[i, j])) < 1e-12

    @given(st.floats(min_value=0.0, max_value=1.0, allow_nan=False))
    @settings(max_examples=100, deadline=None)
    def test_symmetry(self, a):
        grid = np.full((8, 8), a)
        u1 = alpha_entropy(grid).values
        u2 = alpha_entropy(1.0 - grid).values
        np.testing.assert_allclose(u1, u2, rtol=0, atol=1e-12)

    def test_zero_exactly_at_endpoints_max_at_half(self):
        a = np.linspace(0.0, 1.0, 101).reshape(1, -1).repeat(8, axis=0)
        a = np.vstack([a] * 1)[:8, :]
        u = alpha_entropy(np.clip(a, 0, 1)[:8, :101]).values
        assert u[0, 0] == 0.0 and u[0, -1] == 0.0
        assert np.argmax(u[0]) == 50
        assert u.max() <= np.log(2.0)

    def test_out_of_range_rejected(self):
        with pytest.raises(DomainError):
            alpha_entropy(np.full((8, 8), 1.5))

    def test_accepts_raw_arrays(self):
        u = alpha_entropy(np.full((8, 8), 0.25))
        assert u.values.shape == (8, 8)


class TestTypes:
    def test_image_channels_and_shape(self):
        img = Image(np.zeros((10, 12)))
        assert (img.channels, img.height, img.width) == (1, 10, 12)
        rgb = Image(np.zeros((10, 12, 3)))
        assert rgb.channels == 3

    def test_image_rejects_small_and_out_of_range(self):
        with pytest.raises(ShapeError):
            Image(np.zeros((4, 20)))
        with pytest.raises(DomainError):
            Image(np.full((10, 10), 2.0))
        with pytest.raises(ShapeError):
            Image(np.zeros((10, 10, 2)))

    def test_alpha_shape_and_range(self):
        with pytest.raises(DomainError):
            AlphaMatte(np.full((9, 9), -0.1))
        with pytest.raises(ShapeError):
            AlphaMatte(np.zeros((3, 3, 3)))

    def test_mask_strictly_binary(self):
        BinaryMask(np.eye(8, dtype=np.uint8))
        with pytest.raises(DomainError):
            BinaryMask(np.full((8, 8), 0.5))

    def test_trimap_labels(self):
        t = Trimap(np.full((8, 8), int(TrimapLabel.UNKNOWN)))
        assert t.region(TrimapLabel.UNKNOWN).all()
        with pytest.raises(DomainError):
            Trimap(np.full((8, 8), 7))

    def test_gray_averages_channels(self):
        px = np.zeros((8, 8, 3))
        px[..., 0] = 0.3
        px[..., 1] = 0.6
        px[..., 2] = 0.9
        np.testing.assert_allclose(Image(px).gray(), 0.6)


class TestRasterIO:
    def test_load_all_zero_and_all_255(self, tmp_path):
        p0 = tmp_path / "zero.png"
        PILImage.fromarray(np.zeros((16, 16), dtype=np.uint8)).save(p0)
        assert (core.load_image(p0).pixels == 0.0).all()

        p1 = tmp_path / "one.png"
        PILImage.fromarray(np.full((16, 16), 255, dtype=np.uint8)).save(p1)
        assert (core.load_image(p1).pixels == 1.0).all()

    def test_load_midgray_matches_integer_division(self, tmp_path):
        p = tmp_path / "mid.png"
        PILImage.fromarray(np.full((16, 16), 128, dtype=np.uint8)).save(p)
        expected = 128 / 255  # 0.50196..., exact float64 division oracle
        assert (core.load_image(p).pixels == expected).all()

    def test_missing_file(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            core.load_image(tmp_path / "nope.png")

    def test_unsupported_bit_depth(self, tmp_path):
        p = tmp_path / "deep.png"
        PILImage.fromarray(np.zeros((16, 16), dtype=np.uint16)).save(p)
        with pytest.raises(FormatError):
            core.load_image(p)

    def test_roundtrip_bit_identical(self, tmp_path):
        rng = np.random.default_rng(3)
        raw = rng.integers(0, 256, size=(16, 16), dtype=np.uint8)
        p = tmp_path / "img.png"
        PILImage.fromarray(raw).save(p)
        img = core.load_image(p)
        q = tmp_path / "copy.png"
        core.save_image(q, img)
        again = core.load_image(q)
        assert (img.pixels == again.pixels).all()
        assert (np.asarray(PILImage.open(q)) == raw).all()

    def test_alpha_roundtrip(self, tmp_path):
        rng = np.random.default_rng(4)
        a = AlphaMatte(rng.integers(0, 256, size=(12, 12)) / 255.0)
        p = tmp_path / "a.png"
        core.save_alpha(p, a)
        np.testing.assert_array_equal(core.load_alpha(p).alpha, a.alpha)

    def test_mask_roundtrip_0_255(self, tmp_path):
        m = BinaryMask((np.arange(64).reshape(8, 8) % 2).astype(np.uint8))
        p = tmp_path / "m.png"
        core.save_mask(p, m)
        assert set(np.unique(np.asarray(PILImage.open(p)))) <= {0, 255}
        np.testing.assert_array_equal(core.load_mask(p).mask, m.mask)

    def test_trimap_roundtrip_encoding(self, tmp_path):
        lab = np.zeros((8, 8), dtype=np.uint8)
        lab[2:4] = int(TrimapLabel.UNKNOWN)
        lab[5:] = int(TrimapLabel.FOREGROUND)
        p = tmp_path / "t.png"
        core.save_trimap(p, Trimap(lab))
        raster = np.asarray(PILImage.open(p))
        assert set(np.unique(raster)) == {0, 128, 255}
        np.testing.assert_array_equal(core.load_trimap(p).labels, lab)

    def test_trimap_rejects_other_values(self, tmp_path):
        p = tmp_path / "bad.png"
        PILImage.fromarray(np.full((8, 8), 77, dtype=np.uint8)).save(p)
        with pytest.raises(FormatError):
            core.load_trimap(p)
