import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from apbface.losses import (LossReport, LossWeights, gan_d_loss, gan_d_loss_grads, gan_g_loss,
                            gan_g_loss_grad, l1_loss, l1_loss_grad, masked_l1_loss,
                            masked_l1_loss_grad, predictor_loss, reenactor_loss)
from oracles import gan_losses_oracle, l1_oracle, masked_l1_oracle

LOG2 = float(np.log(2.0))


class TestL1:
    def test_identical_is_zero(self):
        x = np.random.default_rng(0).normal(size=(4, 5))
        assert l1_loss(x, x) == 0.0

    def test_zeros_vs_ones(self):
        assert l1_loss(np.zeros((3, 3)), np.ones((3, 3))) == 1.0

    def test_matches_loop_oracle(self):
        rng = np.random.default_rng(1)
        a, b = rng.normal(size=(6, 7)), rng.normal(size=(6, 7))
        assert abs(l1_loss(a, b) - l1_oracle(a, b)) <= 1e-9

    def test_shape_mismatch(self):
        with pytest.raises(ValueError, match="shape mismatch"):
            l1_loss(np.zeros(3), np.zeros(4))

    def test_grad_direction(self):
        a, b = np.array([1.0, -2.0]), np.array([0.0, 0.0])
        assert np.array_equal(l1_loss_grad(a, b), np.array([0.5, -0.5]))


class TestMaskedL1:
    def test_full_mask_equals_l1_exactly(self):
        rng = np.random.default_rng(2)
        a, b = rng.normal(size=(2, 3, 8, 8)), rng.normal(size=(2, 3, 8, 8))
        assert masked_l1_loss(a, b, np.ones((8, 8))) == l1_loss(a, b)

    def test_difference_outside_mask_ignored(self):
        a = np.zeros((8, 8))
        b = np.zeros((8, 8))
        mask = np.zeros((8, 8))
        mask[:4] = 1
        b[6, 6] = 100.0
        assert masked_l1_loss(a, b, mask) == 0.0

    def test_matches_loop_oracle(self):
        rng = np.random.default_rng(3)
        a, b = rng.normal(size=(3, 10, 10)), rng.normal(size=(3, 10, 10))
        mask = (rng.uniform(size=(10, 10)) > 0.5).astype(float)
        assert abs(masked_l1_loss(a, b, mask) - masked_l1_oracle(a, b, mask)) <= 1e-9

    def test_empty_mask_rejected(self):
        with pytest.raises(ValueError, match="empty mask"):
            masked_l1_loss(np.ones((4, 4)), np.zeros((4, 4)), np.zeros((4, 4)))

    def test_grad_zero_outside_mask(self):
        rng = np.random.default_rng(4)
        a, b = rng.normal(size=(2, 4, 4)), rng.normal(size=(2, 4, 4))
        mask = np.zeros((4, 4))
        mask[1, 1] = 1
        g = masked_l1_loss_grad(a, b, mask)
        assert np.all(g[:, 0, :] == 0)
        assert np.all(g[:, 1, 1] != 0)


class TestGanLosses:
    def test_zero_logits_give_log2(self):
        z = np.zeros((3, 3))
        assert abs(gan_d_loss(z, z) - LOG2) < 1e-12
        assert abs(gan_g_loss(z) - LOG2) < 1e-12

    def test_saturation_limits_safe(self):
        d = gan_d_loss(np.array([1e3]), np.array([-1e3]))
        g = gan_g_loss(np.array([-1e3]))
        assert d < 1e-10
        assert abs(g - 1e3) < 1e-6  # linear tail, no overflow

    def test_matches_exact_sigmoid_oracle(self):
        rng = np.random.default_rng(5)
        real, fake = rng.normal(scale=3, size=(6, 6)), rng.normal(scale=3, size=(6, 6))
        d_ref, g_ref = gan_losses_oracle(real, fake)
        assert abs(gan_d_loss(real, fake) - d_ref) <= 1e-7
        assert abs(gan_g_loss(fake) - g_ref) <= 1e-7

    def test_non_finite_rejected(self):
        with pytest.raises(ValueError, match="non-finite logit"):
            gan_g_loss(np.array([np.nan]))
        with pytest.raises(ValueError, match="non-finite logit"):
            gan_d_loss(np.array([np.inf]), np.array([0.0]))

    def test_g_loss_monotone_decreasing_in_logit(self):
        zs = np.linspace(-4, 4, 9)
        values = [gan_g_loss(np.array([z])) for z in zs]
        assert all(a > b for a, b in zip(values, values[1:]))

    def test_grads_match_finite_difference(self):
        rng = np.random.default_rng(6)
        real, fake = rng.normal(size=4), rng.normal(size=4)
        dr, df = gan_d_loss_grads(real, fake)
        h = 1e-7
        for i in range(4):
            bumped = real.copy(); bumped[i] += h
            fd = (gan_d_loss(bumped, fake) - gan_d_loss(real, fake)) / h
            assert abs(fd - dr[i]) < 1e-5
            bumped = fake.copy(); bumped[i] += h
            fd = (gan_d_loss(real, bumped) - gan_d_loss(real, fake)) / h
            assert abs(fd - df[i]) < 1e-5
        gf = gan_g_loss_grad(fake)
        for i in range(4):
            bumped = fake.copy(); bumped[i] += h
            fd = (gan_g_loss(bumped) - gan_g_loss(fake)) / h
            assert abs(fd - gf[i]) < 1e-5


class TestComposites:
    def test_predictor_loss_paper_weights(self):
        w = LossWeights()
        assert (w.predictor_l1, w.predictor_adv) == (100.0, 0.1)
        assert (w.reenactor_l1, w.reenactor_mask, w.reenactor_adv) == (100.0, 100.0, 1.0)

    def test_predictor_loss_composition(self):
        rng = np.random.default_rng(7)
        pred, gt = rng.uniform(size=(5, 2)), rng.uniform(size=(5, 2))
        logit = np.array([0.3])
        report = predictor_loss(pred, gt, logit, LossWeights(), resolution=64)
        expected = 100.0 * l1_oracle(pred * 64, gt * 64) + 0.1 * gan_losses_oracle(logit, logit)[1]
        assert abs(report.total - expected) < 1e-9

    def test_reenactor_loss_identical_images_reduce_to_adv(self):
        rng = np.random.default_rng(8)
        img = rng.uniform(-1, 1, size=(3, 8, 8))
        mask = np.ones((8, 8))
        logits = rng.normal(size=(2, 2))
        report = reenactor_loss(img, img, mask, logits, LossWeights())
        assert report.terms["l1"] == 0.0
        assert report.terms["mask"] == 0.0
        assert abs(report.total - gan_g_loss(logits)) < 1e-12

    def test_reenactor_full_mask_terms_equal(self):
        rng = np.random.default_rng(9)
        a, b = rng.uniform(-1, 1, size=(3, 8, 8)), rng.uniform(-1, 1, size=(3, 8, 8))
        report = reenactor_loss(a, b, np.ones((8, 8)), np.zeros((2, 2)), LossWeights())
        assert report.terms["l1"] == report.terms["mask"]

    def test_weights_round_trip(self):
        w = LossWeights(predictor_adv=0.25)
        assert LossWeights.from_dict(w.to_dict()) == w

    def test_negative_weight_rejected(self):
        with pytest.raises(ValueError):
            LossWeights(predictor_l1=-1.0)


class TestLossReport:
    def test_total_recomposition_enforced(self):
        with pytest.raises(ValueError, match="recompose"):
            LossReport({"a": 1.0}, {"a": 2.0}, total=5.0)

    def test_auto_total(self):
        report = LossReport({"a": 1.5, "b": 2.0}, {"a": 2.0, "b": 1.0})
        assert report.total == 5.0

    @given(st.lists(st.floats(min_value=0, max_value=10), min_size=1, max_size=4),
           st.lists(st.floats(min_value=0, max_value=100), min_size=4, max_size=4))
    @settings(max_examples=50, deadline=None)
    def test_recomposition_identity_random(self, terms, weights):
        named = {f"t{i}": v for i, v in enumerate(terms)}
        w = {f"t{i}": weights[i] for i in range(len(terms))}
        report = LossReport(named, w)
        assert abs(report.total - sum(w[k] * named[k] for k in named)) <= 1e-9 * max(1.0, abs(report.total))
