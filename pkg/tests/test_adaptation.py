import numpy as np
import pytest

from lda_fas.adaptation import adapt, class_mean_prototype
from lda_fas.errors import ConfigurationError, ContractViolation, DegenerateInputError
from lda_fas.lda_head import PrototypeBank, class_similarity
from lda_fas.model import forward, init_params

from conftest import unit_rows


class TestClassMean:
    def test_singleton(self):
        np.testing.assert_array_equal(class_mean_prototype([[1.0, 0.0]]), [1.0, 0.0])

    def test_symmetric_pair(self):
        np.testing.assert_allclose(class_mean_prototype([[1.0, 0.0], [0.0, 1.0]]), [0.70711, 0.70711], atol=1e-5)

    def test_antipodal_pair_is_degenerate(self):
        with pytest.raises(DegenerateInputError):
            class_mean_prototype([[1.0, 0.0], [-1.0, 0.0]])

    def test_empty(self):
        with pytest.raises(ContractViolation):
            class_mean_prototype(np.zeros((0, 3)))


class TestAdapt:
    @pytest.fixture
    def setup(self, rng):
        params = init_params([2, 16, 6], 0)
        bank = PrototypeBank(unit_rows(rng, (2, 6)), unit_rows(rng, (4, 6)))
        x = rng.standard_normal((12, 2))
        y = np.array([0, 1] * 6)
        return params, bank, x, y

    def test_counts_grow_by_one(self, setup):
        params, bank, x, y = setup
        assert adapt(bank, params, x, y).counts == (3, 5)

    def test_originals_bitwise_unchanged(self, setup):
        params, bank, x, y = setup
        before = bank.copy()
        out = adapt(bank, params, x, y)
        np.testing.assert_array_equal(out.live[:2], before.live)
        np.testing.assert_array_equal(out.spoof[:4], before.spoof)
        np.testing.assert_array_equal(bank.live, before.live)

    def test_new_prototypes_are_class_means(self, setup):
        params, bank, x, y = setup
        out = adapt(bank, params, x, y)
        emb, _ = forward(params, x)
        for j, row in ((0, out.live[-1]), (1, out.spoof[-1])):
            mean = emb[y == j].mean(axis=0)
            np.testing.assert_allclose(row, mean / np.linalg.norm(mean), atol=1e-15)
            np.testing.assert_allclose(np.linalg.norm(row), 1.0, atol=1e-12)

    def test_missing_class(self, setup):
        params, bank, x, _ = setup
        with pytest.raises(ConfigurationError):
            adapt(bank, params, x, np.zeros(len(x), dtype=int))

    def test_class_cosine_stays_within_prototype_range(self, setup, rng):
        params, bank, x, y = setup
        out = adapt(bank, params, x, y)
        pred = class_similarity(unit_rows(rng, (50, 6)), out, 0.1)
        for j in (0, 1):
            assert np.all(pred.cos[:, j] <= pred.sims[j].max(axis=1) + 1e-12)
            assert np.all(pred.cos[:, j] >= pred.sims[j].min(axis=1) - 1e-12)
