import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lda_fas.errors import ConfigurationError, ContractViolation
from lda_fas.lda_head import (
    AuxHeads,
    LdaConfig,
    PrototypeBank,
    aux_loss,
    class_similarity,
    init_bank,
    inter_center_loss,
    intra_center_loss,
    lda_loss,
    lda_s_loss,
    prototype_data_loss,
    spoof_score,
)

from conftest import unit_rows

# Frozen from scalar arithmetic in the math module:
#   0.8 * e^8 / (e^8 + 1)
COS_08_00 = 0.7997317198956269
#   0.5*cos(0.7) - sqrt(0.75)*sin(0.7)  and  log1p(exp(64 * (-0.5 - that)))
COS_PLUS_M = -0.17548778907285428
LOSS_MARGIN_EXAMPLE = 9.555046365111166e-10
#   1 / (1 + exp(-6.4))
SIGMOID_6_4 = 0.9983411989198255


def e(*v):
    return np.array(v, dtype=np.float64)


def bank_with_sims(sims_live, sims_spoof):
    """Bank in R^2 whose prototypes have the given cosines with f = (1, 0)."""
    def rows(sims):
        return np.array([[c, math.sqrt(1 - c * c)] for c in sims])
    return PrototypeBank(rows(sims_live), rows(sims_spoof))


class TestClassSimilarity:
    def test_single_prototype_returns_its_cosine(self):
        pred = class_similarity(e(1, 0), bank_with_sims([0.5], [0.1]), 0.1)
        np.testing.assert_allclose(pred.cos[0], [0.5, 0.1], atol=1e-15)

    def test_equal_similarities(self):
        pred = class_similarity(e(1, 0), bank_with_sims([0.3, 0.3], [0.0]), 0.1)
        np.testing.assert_allclose(pred.cos[0, 0], 0.3, atol=1e-15)

    def test_softmax_weighted_example(self):
        pred = class_similarity(e(1, 0), bank_with_sims([0.8, 0.0], [0.0]), 0.1)
        np.testing.assert_allclose(pred.weights[0][0], [math.exp(8) / (math.exp(8) + 1), 1 / (math.exp(8) + 1)])
        np.testing.assert_allclose(pred.cos[0, 0], COS_08_00, rtol=1e-12)

    @settings(max_examples=50, deadline=None)
    @given(seed=st.integers(0, 2**31), k=st.integers(1, 6), tau=st.floats(0.01, 10))
    def test_cosine_is_convex_combination(self, seed, k, tau):
        rng = np.random.default_rng(seed)
        f = unit_rows(rng, (5, 4))
        bank = PrototypeBank(unit_rows(rng, (k, 4)), unit_rows(rng, (2, 4)))
        pred = class_similarity(f, bank, tau)
        for j in (0, 1):
            assert np.all(pred.cos[:, j] <= pred.sims[j].max(axis=1) + 1e-12)
            assert np.all(pred.cos[:, j] >= pred.sims[j].min(axis=1) - 1e-12)


class TestPrototypeDataLoss:
    def test_margin_free_reduces_to_cross_entropy(self):
        c1, c2 = 0.3, -0.2
        loss, _ = prototype_data_loss(e(c1, c2)[None], [0], 1.0, 0.0)
        np.testing.assert_allclose(loss[0], -math.log(math.exp(c1) / (math.exp(c1) + math.exp(c2))), rtol=1e-14)

    @pytest.mark.parametrize("s", [1.0, 16.0, 64.0])
    def test_symmetric_case_is_log2(self, s):
        loss, _ = prototype_data_loss(e(0.4, 0.4)[None], [1], s, 0.0)
        np.testing.assert_allclose(loss[0], math.log(2), rtol=1e-14)

    def test_margin_example(self):
        cos = e(0.5, -0.5)[None]
        loss, _ = prototype_data_loss(cos, [0], 64.0, 0.7)
        # recover cos(theta_y + m) from the loss: loss = log1p(exp(s * (c_o - target)))
        target = -0.5 - math.log(math.expm1(loss[0])) / 64.0
        np.testing.assert_allclose(target, COS_PLUS_M, atol=1e-6)
        np.testing.assert_allclose(loss[0], LOSS_MARGIN_EXAMPLE, rtol=1e-6)
        assert loss[0] < 1e-8

    def test_loss_nonnegative_and_gradients_finite_at_boundaries(self):
        cos = np.array([[1.0, -1.0], [-1.0, 1.0], [0.0, 0.0], [-0.99, 0.5]])
        loss, grad = prototype_data_loss(cos, [0, 0, 1, 0], 64.0, 0.7)
        assert np.all(loss >= 0)
        assert np.all(np.isfinite(grad))

    def test_target_continuous_and_monotone_past_pi_minus_m(self):
        # the margin target must keep decreasing as the own-class cosine falls
        m = 0.7
        c = np.linspace(-1 + 1e-6, 1 - 1e-6, 20001)
        cos = np.stack([c, np.zeros_like(c)], axis=1)
        loss, _ = prototype_data_loss(cos, np.zeros(c.size, dtype=int), 1.0, m)
        target = -np.log(np.expm1(loss))  # s = 1, c_o = 0
        assert np.all(np.diff(target) > 0)
        c_switch = -math.cos(m)
        near = np.array([[c_switch - 1e-9, 0.0], [c_switch + 1e-9, 0.0]])
        both = -np.log(np.expm1(prototype_data_loss(near, [0, 0], 1.0, m)[0]))
        assert abs(both[1] - both[0]) < 1e-8

    def test_bad_label(self):
        with pytest.raises(ContractViolation):
            prototype_data_loss(e(0.1, 0.2)[None], [2], 64.0, 0.7)


class TestCenterLosses:
    def test_inter_example(self):
        # intra sims: live pair 0.2, spoof pair 0.9; max cross 0.1
        live = np.array([[1, 0, 0, 0], [0.2, math.sqrt(1 - 0.04), 0, 0]])
        spoof = np.array([[0.1, -0.02, math.sqrt(1 - 0.01 - 0.0004), 0.0]])
        bank = PrototypeBank(live, spoof)
        cross = bank.live @ bank.spoof.T
        assert abs(cross.max() - 0.1) < 1e-15
        value, _, _ = inter_center_loss(bank, 0.5)
        np.testing.assert_allclose(value, 0.1 - 0.2 + 0.5, atol=1e-15)

    def test_inter_inactive(self):
        live = np.array([[1.0, 0], [0.9, math.sqrt(1 - 0.81)]])
        spoof = np.array([[-0.9, -math.sqrt(1 - 0.81)]])
        assert inter_center_loss(PrototypeBank(live, spoof), 0.5)[0] == 0.0

    def test_inter_single_prototypes_is_zero(self, rng):
        value, gl, gs = inter_center_loss(PrototypeBank(unit_rows(rng, (1, 3)), unit_rows(rng, (1, 3))), 0.5)
        assert value == 0.0
        assert not gl.any() and not gs.any()

    def test_intra_example(self):
        live = np.array([[1.0, 0.0], [0.3, math.sqrt(1 - 0.09)]])
        spoof = np.array([[1.0, 0.0], [-0.2, math.sqrt(1 - 0.04)]])
        value, _, _ = intra_center_loss(PrototypeBank(live, spoof), 0.0)
        np.testing.assert_allclose(value, 0.3, atol=1e-15)

    def test_intra_inactive_below_delta(self):
        live = np.array([[1.0, 0.0], [-1.0, 0.0]])
        assert intra_center_loss(PrototypeBank(live, live[:1]), 0.0)[0] == 0.0

    def test_intra_always_active_at_minus_one(self, rng):
        bank = PrototypeBank(unit_rows(rng, (4, 3)), unit_rows(rng, (3, 3)))
        expected = sum(float(np.sum(np.triu(p @ p.T, 1)[np.triu_indices(len(p), 1)] + 1)) for p in (bank.live, bank.spoof))
        np.testing.assert_allclose(intra_center_loss(bank, -1.0)[0], expected, rtol=1e-13)


class TestLdaLoss:
    def test_zero_lambdas_equal_mean_pd(self, rng):
        f = unit_rows(rng, (6, 5))
        y = rng.integers(0, 2, 6)
        bank = PrototypeBank(unit_rows(rng, (3, 5)), unit_rows(rng, (2, 5)))
        cfg = LdaConfig(lambda1=0.0, lambda2=0.0)
        pred = class_similarity(f, bank, cfg.tau_w)
        expected = prototype_data_loss(pred.cos, y, cfg.s, cfg.m)[0].mean()
        np.testing.assert_allclose(lda_loss(f, y, bank, cfg).total, expected, rtol=1e-14)

    def test_center_terms_added_once_per_batch(self, rng):
        bank = PrototypeBank(unit_rows(rng, (3, 5)), unit_rows(rng, (3, 5)))
        cfg = LdaConfig(lambda1=1.0, lambda2=1.0, delta2=-1.0)
        one = lda_loss(unit_rows(rng, (1, 5)), [0], bank, cfg)
        many = lda_loss(unit_rows(rng, (8, 5)), np.zeros(8, int), bank, cfg)
        np.testing.assert_allclose(one.total - one.pd, many.total - many.pd, rtol=1e-13)

    def test_empty_batch(self, rng):
        bank = PrototypeBank(unit_rows(rng, (2, 3)), unit_rows(rng, (2, 3)))
        with pytest.raises(ContractViolation):
            lda_loss(np.zeros((0, 3)), [], bank, LdaConfig())


class TestAux:
    def heads(self, rng, n=4):
        return AuxHeads(rng.standard_normal((4, n)), rng.standard_normal(4), rng.standard_normal((3, n)),
                        rng.standard_normal(3))

    def test_zero_weights_give_zero(self, rng):
        loss, gf, _ = aux_loss(unit_rows(rng, (3, 4)), self.heads(rng), [0, 1, 2], [0, 1, 2], 0.0, 0.0)
        assert loss == 0.0 and not gf.any()

    def test_uniform_logits_give_log_n(self, rng):
        heads = AuxHeads(np.zeros((4, 4)), np.zeros(4), np.zeros((3, 4)), np.zeros(3))
        loss, _, _ = aux_loss(unit_rows(rng, (5, 4)), heads, [0, 1, 2, 3, 0], [0, 1, 2, 0, 1], 1.0, 1.0)
        np.testing.assert_allclose(loss, math.log(4) + math.log(3), rtol=1e-14)

    def test_out_of_range_label(self, rng):
        with pytest.raises(ContractViolation):
            aux_loss(unit_rows(rng, (1, 4)), self.heads(rng), [4], [0], 0.1, 0.1)

    def test_lambda_aux_zero_equals_lda(self, rng):
        f, y = unit_rows(rng, (4, 4)), [0, 1, 1, 0]
        bank = PrototypeBank(unit_rows(rng, (2, 4)), unit_rows(rng, (3, 4)))
        cfg = LdaConfig(lambda_aux=0.0)
        a = lda_s_loss(f, y, bank, cfg, self.heads(rng), [0, 1, 2, 0], [0, 1, 2, 0])
        assert a.total == lda_loss(f, y, bank, cfg).total

    def test_additivity(self, rng):
        f, y = unit_rows(rng, (4, 4)), [0, 1, 1, 0]
        bank = PrototypeBank(unit_rows(rng, (2, 4)), unit_rows(rng, (3, 4)))
        heads, st_, il = self.heads(rng), [0, 1, 2, 0], [0, 1, 2, 0]
        cfg = LdaConfig(lambda_aux=1.0)
        aux = aux_loss(f, heads, st_, il, cfg.lambda_s, cfg.lambda_i)[0]
        np.testing.assert_allclose(lda_s_loss(f, y, bank, cfg, heads, st_, il).total,
                                   lda_loss(f, y, bank, cfg).total + aux, rtol=1e-14)


class TestSpoofScore:
    def test_equal_cosines(self):
        pred = class_similarity(e(1, 0), bank_with_sims([0.4], [0.4]), 0.1)
        np.testing.assert_allclose(spoof_score(pred, 64.0), 0.5, atol=1e-12)

    def test_logistic_example(self):
        pred = class_similarity(e(1, 0), bank_with_sims([0.2], [0.3]), 0.1)
        np.testing.assert_allclose(spoof_score(pred, 64.0)[0], SIGMOID_6_4, rtol=1e-9)

    def test_monotone_in_spoof_cosine(self):
        scores = [spoof_score(class_similarity(e(1, 0), bank_with_sims([0.0], [c]), 0.1), 64.0)[0]
                  for c in np.linspace(-0.3, 0.3, 13)]
        assert np.all(np.diff(scores) > 0)


class TestInitAndConfig:
    def test_bank_shape_norm_determinism(self):
        a, b = init_bank(4, 8, 3), init_bank(4, 8, 3)
        assert a.counts == (4, 4) and a.dim == 8
        np.testing.assert_allclose(np.linalg.norm(np.vstack([a.live, a.spoof]), axis=1), 1.0, atol=1e-9)
        np.testing.assert_array_equal(a.live, b.live)
        a.validate()

    def test_unknown_config_key(self):
        with pytest.raises(ConfigurationError):
            LdaConfig.from_dict({"s": 10, "margin": 0.1})

    @pytest.mark.parametrize("bad", [{"s": 0}, {"tau_w": -1}, {"m": 2.0}, {"k_init": 0}, {"lambda1": -0.1}])
    def test_invalid_values(self, bad):
        with pytest.raises(ConfigurationError):
            LdaConfig.from_dict(bad)
