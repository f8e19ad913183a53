import math

import numpy as np
import pytest
import torch
from mpmath import mp

from helpers import relative_gradient_error
from medmatting.core import DomainError, ShapeError
from medmatting.losses import (
    LossWeights,
    OawsSchedule,
    UwsState,
    alpha_l1,
    ce_loss,
    clamped_gamma,
    grad_loss,
    kl_loss,
    matt_loss,
    oaws_gamma,
    oaws_total,
    seg_loss,
    sobel_gradients,
    uws_total,
)
from medmatting.maskgen import GaussianLatent


def gaussian_latent(mean, log_var):
    return GaussianLatent(
        mean=torch.as_tensor(mean, dtype=torch.float64),
        log_variance=torch.as_tensor(log_var, dtype=torch.float64),
    )


def sobel_oracle(img: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Direct 3x3 Sobel convolution with replicate (edge) padding."""
    kx = np.array([[-1, 0, 1], [-2, 0, 2], [-1, 0, 1]], dtype=np.float64)
    ky = kx.T
    padded = np.pad(img, 1, mode="edge")
    h, w = img.shape
    gx = np.zeros_like(img, dtype=np.float64)
    gy = np.zeros_like(img, dtype=np.float64)
    for i in range(h):
        for j in range(w):
            win = padded[i : i + 3, j : j + 3]
            gx[i, j] = (win * kx).sum()
            gy[i, j] = (win * ky).sum()
    return gx, gy


class TestCeLoss:
    def test_perfect_onehot_prediction(self):
        mask = torch.tensor([[1.0, 0.0], [0.0, 1.0]])
        score = torch.stack([1.0 - mask, mask], dim=0)
        assert ce_loss(score, mask).item() <= 1e-11

    def test_uniform_scores_give_ln2(self):
        score = torch.full((2, 4, 4), 0.5, dtype=torch.float64)
        mask = torch.zeros(4, 4)
        assert ce_loss(score, mask).item() == pytest.approx(math.log(2.0), abs=1e-12)

    def test_two_pixel_hand_oracle(self):
        # foreground (channel 1) probabilities 0.9 and 0.2, labels both 1:
        # loss = -(ln 0.9 + ln 0.2) / 2
        score = torch.tensor([[[0.1, 0.8]], [[0.9, 0.2]]], dtype=torch.float64)
        mask = torch.ones(1, 2, dtype=torch.float64)
        expected = -(math.log(0.9) + math.log(0.2)) / 2.0
        assert expected == pytest.approx(0.8573, abs=1e-4)
        assert ce_loss(score, mask).item() == pytest.approx(expected, abs=1e-12)

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            ce_loss(torch.rand(2, 4, 4), torch.zeros(5, 5))

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(0)
        fg = torch.as_tensor(rng.uniform(0.1, 0.9, (8, 8)))
        mask = torch.as_tensor(rng.integers(0, 2, (8, 8)).astype(np.float64))

        def fn(fg_probs):
            score = torch.stack([1.0 - fg_probs, fg_probs], dim=0)
            return ce_loss(score, mask)

        assert relative_gradient_error(fn, fg) < 1e-3


class TestKlLoss:
    def test_identical_parameters_zero(self):
        q = gaussian_latent([0.3, -1.2], [0.1, 0.4])
        assert kl_loss(q, q).item() == pytest.approx(0.0, abs=1e-14)

    def test_unit_shift_closed_form(self):
        # KL(N(1,1) || N(0,1)) = 0.5 * mu^2 = 0.5
        q = gaussian_latent([1.0], [0.0])
        p = gaussian_latent([0.0], [0.0])
        assert kl_loss(q, p).item() == pytest.approx(0.5, abs=1e-14)

    def test_nonnegative_on_random_pairs(self):
        rng = np.random.default_rng(1)
        for _ in range(1000):
            q = gaussian_latent(rng.normal(size=4), rng.uniform(-2, 2, 4))
            p = gaussian_latent(rng.normal(size=4), rng.uniform(-2, 2, 4))
            assert kl_loss(q, p).item() >= -1e-12

    def test_matches_quadrature_oracle(self):
        # KL = integral q(z) * log(q(z)/p(z)) dz, evaluated by dense quadrature
        from scipy import stats

        mu_q, var_q, mu_p, var_p = 0.7, 1.3, -0.4, 0.6
        z = np.linspace(-15, 15, 400001)
        qpdf = stats.norm.pdf(z, mu_q, math.sqrt(var_q))
        ppdf = stats.norm.pdf(z, mu_p, math.sqrt(var_p))
        integrand = qpdf * (np.log(qpdf) - np.log(ppdf))
        expected = np.trapezoid(integrand, z)
        q = gaussian_latent([mu_q], [math.log(var_q)])
        p = gaussian_latent([mu_p], [math.log(var_p)])
        assert kl_loss(q, p).item() == pytest.approx(expected, abs=1e-8)

    def test_dimension_mismatch(self):
        with pytest.raises(ShapeError):
            kl_loss(gaussian_latent([0.0], [0.0]), gaussian_latent([0.0, 0.0], [0.0, 0.0]))

    def test_gradient_matches_finite_differences(self):
        p = gaussian_latent([0.1, -0.5, 0.2], [0.3, -0.2, 0.0])

        def fn(packed):
            q = GaussianLatent(mean=packed[0], log_variance=packed[1])
            return kl_loss(q, p)

        packed = torch.tensor([[0.6, 0.1, -0.9], [-0.4, 0.8, 0.2]], dtype=torch.float64)
        assert relative_gradient_error(fn, packed) < 1e-3


class TestAlphaL1:
    def test_equal_is_zero(self):
        a = torch.rand(8, 8, dtype=torch.float64)
        assert alpha_l1(a, a).item() == 0.0

    def test_constant_offset(self):
        a = torch.full((8, 8), 0.4, dtype=torch.float64)
        assert alpha_l1(a + 0.1, a).item() == pytest.approx(0.1, abs=1e-14)

    def test_matches_elementwise_oracle(self):
        rng = np.random.default_rng(2)
        a = rng.uniform(0, 1, (8, 8))
        b = rng.uniform(0, 1, (8, 8))
        expected = sum(abs(a[i, j] - b[i, j]) for i in range(8) for j in range(8)) / 64
        assert alpha_l1(a, b).item() == pytest.approx(expected, abs=1e-9)

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(3)
        gt = torch.as_tensor(rng.uniform(0, 1, (8, 8)))
        pred = torch.as_tensor(rng.uniform(0, 1, (8, 8)))
        assert relative_gradient_error(lambda x: alpha_l1(x, gt), pred) < 1e-3


class TestGradLoss:
    def test_equal_inputs_zero(self):
        rng = np.random.default_rng(4)
        a = torch.as_tensor(rng.uniform(0, 1, (8, 8)))
        u = torch.full((8, 8), 0.5, dtype=torch.float64)
        assert grad_loss(a, u, a).item() == 0.0

    def test_empty_region_zero(self):
        rng = np.random.default_rng(5)
        a = torch.as_tensor(rng.uniform(0, 1, (8, 8)))
        b = torch.as_tensor(rng.uniform(0, 1, (8, 8)))
        u = torch.zeros(8, 8, dtype=torch.float64)
        assert grad_loss(a, u, b, region_threshold=0.1).item() == 0.0

    def test_ramp_vs_constant_matches_sobel_oracle(self):
        ramp = np.tile(np.linspace(0.0, 1.0, 5), (5, 1))
        const = np.full((5, 5), 0.5)
        gx_r, gy_r = sobel_oracle(ramp)
        gx_c, gy_c = sobel_oracle(const)
        expected = (np.abs(gx_r - gx_c) + np.abs(gy_r - gy_c)).mean()
        u = np.ones((5, 5))
        got = grad_loss(ramp, u, const, region_threshold=0.1).item()
        assert got == pytest.approx(expected, abs=1e-6)

    def test_constant_gt_full_region_is_mean_sobel_magnitude(self):
        rng = np.random.default_rng(6)
        pred = rng.uniform(0, 1, (10, 10))
        gt = np.full((10, 10), 0.3)
        gx, gy = sobel_oracle(pred)
        expected = (np.abs(gx) + np.abs(gy)).mean()
        got = grad_loss(pred, np.ones((10, 10)), gt).item()
        assert got == pytest.approx(expected, abs=1e-9)

    def test_region_restriction(self):
        rng = np.random.default_rng(7)
        pred = rng.uniform(0, 1, (8, 8))
        gt = rng.uniform(0, 1, (8, 8))
        umap = np.zeros((8, 8))
        umap[:4] = 0.6
        gx_p, gy_p = sobel_oracle(pred)
        gx_g, gy_g = sobel_oracle(gt)
        l1 = np.abs(gx_p - gx_g) + np.abs(gy_p - gy_g)
        expected = l1[:4].mean()
        assert grad_loss(pred, umap, gt).item() == pytest.approx(expected, abs=1e-9)

    def test_sobel_gradients_shapes(self):
        gx, gy = sobel_gradients(torch.rand(3, 8, 8))
        assert gx.shape == (3, 8, 8) and gy.shape == (3, 8, 8)

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(8)
        gt = torch.as_tensor(rng.uniform(0, 1, (8, 8)))
        pred = torch.as_tensor(rng.uniform(0, 1, (8, 8)))
        u = torch.full((8, 8), 0.4, dtype=torch.float64)
        err = relative_gradient_error(lambda x: grad_loss(x, u, gt), pred)
        assert err < 1e-3


class TestTaskAggregates:
    def test_seg_loss_defaults(self):
        w = LossWeights()
        assert seg_loss(0.3, 0.02, w).item() == pytest.approx(0.5, abs=1e-12)

    def test_zero_components(self):
        w = LossWeights()
        assert seg_loss(0.0, 0.0, w).item() == 0.0
        assert matt_loss(0.0, 0.0, w).item() == 0.0

    def test_matt_loss_arithmetic(self):
        w = LossWeights(zeta=1.0, xi=1.0)
        assert matt_loss(0.2, 0.1, w).item() == pytest.approx(0.3, abs=1e-12)

    def test_negative_weight_rejected(self):
        with pytest.raises(DomainError):
            LossWeights(mu=-1.0)


class TestUws:
    def test_unit_sigmas(self):
        s = UwsState(1.0, 1.0)
        assert uws_total(1.0, 1.0, s).item() == pytest.approx(1.5, abs=1e-12)

    def test_default_init_log_term(self):
        s = UwsState()  # sigma1 = sigma2 = 4
        assert s.sigma1 == pytest.approx(4.0)
        assert uws_total(0.0, 0.0, s).item() == pytest.approx(math.log(16.0), abs=1e-12)

    def test_monotonicity_in_sigma1(self):
        seg, matt = 2.0, 3.0
        prev_seg_term, prev_log_term = None, None
        for sig in (0.5, 1.0, 2.0, 4.0):
            s = UwsState(sig, 1.0)
            seg_term = seg / sig**2
            log_term = math.log(sig)
            if prev_seg_term is not None:
                assert seg_term < prev_seg_term
                assert log_term > prev_log_term
            prev_seg_term, prev_log_term = seg_term, log_term
            expected = seg / sig**2 + matt / 2.0 + math.log(sig * 1.0)
            assert uws_total(seg, matt, s).item() == pytest.approx(expected, abs=1e-10)

    def test_nonpositive_sigma_rejected(self):
        with pytest.raises(DomainError):
            UwsState(0.0, 1.0)

    def test_sigma_gradients_match_finite_differences(self):
        seg, matt = 0.7, 0.9

        def fn(log_sigmas):
            inv1 = torch.exp(-2.0 * log_sigmas[0])
            inv2 = torch.exp(-2.0 * log_sigmas[1])
            return seg * inv1 + 0.5 * matt * inv2 + log_sigmas[0] + log_sigmas[1]

        x = torch.tensor([math.log(4.0), math.log(4.0)], dtype=torch.float64)
        assert relative_gradient_error(fn, x) < 1e-3

    def test_state_parameters_receive_autograd(self):
        s = UwsState()
        total = uws_total(torch.tensor(1.0), torch.tensor(2.0), s)
        total.backward()
        assert s.log_sigma1.grad is not None and s.log_sigma2.grad is not None


class TestOaws:
    def test_gamma_at_zero(self):
        for t in (0.0, 0.3, 0.5):
            sched = OawsSchedule(t=t)
            assert oaws_gamma(0, sched) == pytest.approx(0.5 + t, abs=1e-15)

    def test_envelope(self):
        sched = OawsSchedule(a=0.05, b=0.03, t=0.50)
        for n in range(501):
            g = oaws_gamma(n, sched)
            assert abs(g - sched.t) <= 0.5 * math.exp(-sched.a * n) + 1e-15

    def test_gamma_in_unit_interval_for_default_target(self):
        sched = OawsSchedule()
        assert all(0.0 <= oaws_gamma(n, sched) <= 1.0 for n in range(501))

    def test_decay_bound_at_n200(self):
        sched = OawsSchedule(a=0.05, b=0.03, t=0.50)
        assert abs(oaws_gamma(200, sched) - 0.5) <= 0.5 * math.exp(-0.05 * 200)
        assert 0.5 * math.exp(-0.05 * 200) <= 2.3e-5

    def test_n10_matches_high_precision(self):
        mp.dps = 50
        a, b, t, n = mp.mpf("0.05"), mp.mpf("0.03"), mp.mpf("0.5"), 10
        expected = float(mp.mpf("0.5") * mp.e ** (-a * n) * mp.cos(b * n * n) + t)
        assert oaws_gamma(10, OawsSchedule()) == pytest.approx(expected, abs=1e-12)

    def test_linear_phase_switch(self):
        mp.dps = 50
        a, b, t, n = mp.mpf("0.05"), mp.mpf("0.03"), mp.mpf("0.5"), 10
        expected = float(mp.mpf("0.5") * mp.e ** (-a * n) * mp.cos(b * n) + t)
        got = oaws_gamma(10, OawsSchedule(phase="linear"))
        assert got == pytest.approx(expected, abs=1e-12)

    def test_total_endpoints_and_midpoint(self):
        assert oaws_total(5.0, 9.0, 1.0).item() == pytest.approx(5.0)
        assert oaws_total(5.0, 9.0, 0.0).item() == pytest.approx(9.0)
        assert oaws_total(2.0, 4.0, 0.5).item() == pytest.approx(3.0, abs=1e-12)

    def test_total_rejects_out_of_range_gamma(self):
        with pytest.raises(DomainError):
            oaws_total(1.0, 1.0, 1.2)

    def test_clamped_gamma_records_clipping(self):
        g, clipped = clamped_gamma(0, OawsSchedule(t=0.8))
        assert g == 1.0 and clipped
        g, clipped = clamped_gamma(0, OawsSchedule(t=0.5))
        assert g == pytest.approx(1.0) and not clipped

    def test_negative_epoch_rejected(self):
        with pytest.raises(DomainError):
            oaws_gamma(-1)
