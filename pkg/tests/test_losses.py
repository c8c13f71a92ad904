import math

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal
from scipy.special import log_softmax

from conftest import make_graph
from core.autodiff import Tensor
from core.losses import (
    LdamMargins,
    adversary_loss,
    classification_loss,
    constant_sensitive,
    imputation_loss,
    merge_sensitive,
)
from errors import DegenerateGroupError


class TestClassificationLoss:
    def test_uniform_prediction(self):
        loss = classification_loss(Tensor(np.full(4, 0.5)), [1, 0, 1, 0], np.ones(4, dtype=bool))
        assert loss.item() == pytest.approx(math.log(2))

    def test_hand_value(self):
        loss = classification_loss(Tensor([0.9, 0.2]), [1, 0], np.ones(2, dtype=bool))
        assert loss.item() == pytest.approx(-(math.log(0.9) + math.log(0.8)) / 2)
        assert loss.item() == pytest.approx(0.1643, abs=1e-4)

    def test_perfect_prediction_hits_the_floor(self):
        loss = classification_loss(Tensor([1.0, 0.0]), [1, 0], np.ones(2, dtype=bool))
        assert 0.0 <= loss.item() < 1e-11

    def test_only_training_nodes_count(self):
        mask = np.array([True, False])
        loss = classification_loss(Tensor([0.9, 0.01]), [1, 1], mask)
        assert loss.item() == pytest.approx(-math.log(0.9))

    def test_empty_mask(self):
        with pytest.raises(DegenerateGroupError):
            classification_loss(Tensor([0.5]), [1], np.zeros(1, dtype=bool))


class TestLdam:
    def test_margin_ratio(self):
        m = LdamMargins.from_labels([0] * 81 + [1] * 16, np.ones(97, dtype=bool), 0.5)
        assert m.delta0 / m.delta1 == pytest.approx((16 / 81) ** 0.25, rel=1e-12)

    def test_swapping_counts_swaps_margins(self):
        a = LdamMargins.from_labels([0] + [1] * 16, np.ones(17, dtype=bool), 1.0)
        b = LdamMargins.from_labels([0] * 16 + [1], np.ones(17, dtype=bool), 1.0)
        assert a.delta0 == b.delta1
        assert a.delta1 == b.delta0

    def test_absent_class(self):
        with pytest.raises(DegenerateGroupError):
            LdamMargins.from_labels([1, 1, 0], np.array([True, True, False]), 0.5)

    def test_zero_margin_uniform_logits(self):
        margins = LdamMargins.from_labels([0, 1], np.ones(2, dtype=bool), 0.0)
        loss = imputation_loss(Tensor(np.zeros((2, 2))), [0, 1], np.ones(2, dtype=bool), margins)
        assert loss.item() == pytest.approx(math.log(2))

    def test_hand_value(self):
        targets = np.array([0] * 16 + [1])
        margins = LdamMargins.from_labels(targets, np.ones(17, dtype=bool), 1.0)
        assert margins.delta0 == pytest.approx(0.5)
        logits = np.zeros((17, 2))
        logits[0] = [1.0, 0.0]
        only_first = np.zeros(17, dtype=bool)
        only_first[0] = True
        loss = imputation_loss(Tensor(logits), targets, only_first, margins)
        assert loss.item() == pytest.approx(math.log(1 + math.exp(-0.5)))
        assert loss.item() == pytest.approx(0.4741, abs=1e-4)

    def test_zero_margin_equals_cross_entropy(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            logits = rng.standard_normal((30, 2)) * 3
            targets = np.array([0, 1] * 15)
            margins = LdamMargins.from_labels(targets, np.ones(30, dtype=bool), 0.0)
            got = imputation_loss(Tensor(logits), targets, np.ones(30, dtype=bool), margins).item()
            expected = -np.mean(log_softmax(logits, axis=1)[np.arange(30), targets])
            assert abs(got - expected) <= 1e-12

    def test_margin_raises_the_loss(self):
        targets = np.array([0, 0, 0, 1])
        pool = np.ones(4, dtype=bool)
        logits = Tensor(np.random.default_rng(1).standard_normal((4, 2)))
        plain = imputation_loss(logits, targets, pool, LdamMargins.from_labels(targets, pool, 0.0)).item()
        margined = imputation_loss(logits, targets, pool, LdamMargins.from_labels(targets, pool, 0.5)).item()
        assert margined > plain


class TestMergeSensitive:
    def _graph(self, observed):
        return make_graph(4, [(0, 1)], labels=[1, 0, 1, 0], sensitive=[1, 1, 0, 0], observed_mask=observed)

    def test_full_observation_is_ground_truth(self):
        g = self._graph(np.ones(4, dtype=bool))
        merged = merge_sensitive(Tensor([0.3, 0.6, 0.9, 0.1]), g)
        assert_array_equal(merged.s_hat.values[:, 0], [1, 1, 0, 0])

    def test_label_proxy_returns_imputations(self):
        g = self._graph(np.zeros(4, dtype=bool))
        si = Tensor([0.3, 0.6, 0.9, 0.1])
        merged = merge_sensitive(si, g, "label-proxy")
        assert_array_equal(merged.s_hat.values, si.values)
        assert set(merged.source) == {"label-proxy"}

    def test_half_observed(self):
        observed = np.array([True, False, True, False])
        g = self._graph(observed)
        si = np.array([0.3, 0.6, 0.9, 0.1])
        merged = merge_sensitive(Tensor(si), g)
        values = merged.s_hat.values[:, 0]
        assert_array_equal(values[observed], g.sensitive[observed])
        assert_allclose(values[~observed], si[~observed])
        assert list(merged.source) == ["observed", "imputed", "observed", "imputed"]

    def test_observed_mode_needs_observations(self):
        with pytest.raises(DegenerateGroupError):
            merge_sensitive(Tensor(np.full(4, 0.5)), self._graph(np.zeros(4, dtype=bool)))


class TestAdversaryLoss:
    def test_uninformative_adversary(self):
        merged = constant_sensitive([1, 0, 1, 0])
        loss = adversary_loss(Tensor(np.full(4, 0.5)), merged, np.ones(4, dtype=bool))
        assert loss.item() == pytest.approx(2 * math.log(0.5))

    def test_hand_value(self):
        loss = adversary_loss(Tensor([0.8, 0.3]), constant_sensitive([1, 0]), np.ones(2, dtype=bool))
        assert loss.item() == pytest.approx(math.log(0.8) + math.log(0.7))
        assert loss.item() == pytest.approx(-0.5798, abs=1e-4)

    def test_perfect_adversary_approaches_zero(self):
        loss = adversary_loss(Tensor([1.0, 0.0]), constant_sensitive([1, 0]), np.ones(2, dtype=bool))
        assert -1e-11 < loss.item() <= 0.0

    def test_never_positive(self):
        rng = np.random.default_rng(3)
        for _ in range(50):
            loss = adversary_loss(Tensor(rng.random(10)), constant_sensitive(rng.random(10)), np.ones(10, dtype=bool))
            assert loss.item() <= 0.0

    def test_mask_restricts_nodes(self):
        mask = np.array([True, True, False])
        loss = adversary_loss(Tensor([0.8, 0.3, 0.01]), constant_sensitive([1, 0, 1]), mask)
        assert loss.item() == pytest.approx(math.log(0.8) + math.log(0.7))

    def test_empty_group(self):
        with pytest.raises(DegenerateGroupError):
            adversary_loss(Tensor([0.8, 0.3]), constant_sensitive([1, 1]), np.ones(2, dtype=bool))
