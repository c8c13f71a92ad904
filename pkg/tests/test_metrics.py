import math

import numpy as np
import pytest
from numpy.testing import assert_allclose
from scipy.stats import pearsonr
from sklearn.metrics import average_precision_score, f1_score

from conftest import make_graph
from core.metrics import (
    DiscreteDistPair,
    adversary_objective,
    avpr,
    bias_audit,
    delta_dp,
    delta_eqop,
    evaluate,
    f1,
    imputation_accuracy,
    js_divergence,
    optimal_adversary,
    pearson_corr,
)
from core.verify import check_metric_oracles, random_dist_pair
from errors import DegenerateGroupError


class TestDemographicParity:
    def test_identical_predictions(self):
        assert delta_dp([1, 1, 1, 1], [1, 0, 1, 0]) == 0.0

    def test_counting_example(self):
        y = [1, 1, 1, 0, 1, 0, 0, 0]
        s = [1, 1, 1, 1, 0, 0, 0, 0]
        assert delta_dp(y, s) == pytest.approx(0.5)

    def test_single_group(self):
        with pytest.raises(DegenerateGroupError):
            delta_dp([1, 0], [1, 1])

    def test_mask(self):
        assert delta_dp([1, 0, 0, 1], [1, 0, 1, 0], mask=[True, True, False, False]) == 1.0


class TestEqualOpportunity:
    def test_perfect_classifier(self):
        y = np.array([1, 0, 1, 0, 1, 1])
        assert delta_eqop(y, [1, 1, 0, 0, 1, 0], y) == 0.0

    def test_counting_example(self):
        y_true = [1, 1, 1, 1]
        y_hat = [1, 1, 1, 0]
        s = [1, 1, 0, 0]
        assert delta_eqop(y_hat, s, y_true) == pytest.approx(0.5)

    def test_group_without_positives(self):
        with pytest.raises(DegenerateGroupError):
            delta_eqop([1, 0, 1], [1, 0, 0], [0, 1, 1])


class TestUtility:
    def test_avpr_hand_value(self):
        assert avpr([0.9, 0.8, 0.7, 0.1], [1, 0, 1, 0]) == pytest.approx((1 + 2 / 3) / 2)

    def test_avpr_perfect_ranking(self):
        assert avpr([0.9, 0.8, 0.2, 0.1], [1, 1, 0, 0]) == 1.0

    def test_avpr_all_positive(self):
        assert avpr(np.random.default_rng(0).random(7), np.ones(7)) == 1.0

    def test_avpr_needs_positives(self):
        with pytest.raises(DegenerateGroupError):
            avpr([0.3, 0.2], [0, 0])

    def test_f1_without_positive_predictions(self):
        assert f1([0, 0, 0], [1, 0, 1]) == 0.0

    def test_against_sklearn(self):
        rng = np.random.default_rng(5)
        for _ in range(50):
            y = rng.integers(0, 2, 40)
            y[0] = 1
            scores = rng.random(40)
            pred = (scores > 0.5).astype(int)
            assert avpr(scores, y) == pytest.approx(average_precision_score(y, scores), abs=1e-12)
            assert f1(pred, y) == pytest.approx(f1_score(y, pred, zero_division=0), abs=1e-12)

    def test_brute_force_oracles(self):
        passed, detail = check_metric_oracles()
        assert passed, detail


class TestCorrelation:
    def test_identity(self):
        assert pearson_corr([1, 2, 3, 4], [1, 2, 3, 4]) == pytest.approx(1.0)

    def test_negated(self):
        assert pearson_corr([-1, 0, 1], [1, 0, -1]) == pytest.approx(-1.0)

    def test_four_points(self):
        a, b = [1, 2, 3, 4], [2, 1, 4, 3]
        assert pearson_corr(a, b) == pytest.approx(0.6)
        assert pearson_corr(a, b) == pytest.approx(pearsonr(a, b)[0])

    def test_constant_side(self):
        assert pearson_corr([1, 1, 1], [0, 1, 0]) == 0.0

    def test_imputation_accuracy(self):
        assert imputation_accuracy([1, 0, 1], [1, 1, 1]) == pytest.approx(2 / 3)
        assert imputation_accuracy([1, 0], [1, 1], mask=[False, False]) is None


class TestJensenShannon:
    def test_equal_distributions(self):
        d = DiscreteDistPair(np.array([0.2, 0.8]), np.array([0.2, 0.8]))
        assert js_divergence(d) == pytest.approx(0.0)
        assert_allclose(optimal_adversary(d), 0.5)

    def test_disjoint_supports(self):
        d = DiscreteDistPair(np.array([1.0, 0.0]), np.array([0.0, 1.0]))
        assert js_divergence(d) == pytest.approx(math.log(2))

    def test_hand_value(self):
        d = DiscreteDistPair(np.array([0.5, 0.5]), np.array([1.0, 0.0]))
        assert js_divergence(d) == pytest.approx(0.2158, abs=1e-4)

    def test_symmetric(self):
        rng = np.random.default_rng(2)
        for _ in range(20):
            d = random_dist_pair(rng, 6)
            assert js_divergence(d) == pytest.approx(js_divergence(DiscreteDistPair(d.p0, d.p1)), abs=1e-15)
            assert 0.0 <= js_divergence(d) <= math.log(2) + 1e-15

    def test_optimal_adversary_bins(self):
        d = DiscreteDistPair(np.array([0.8, 0.2, 0.0]), np.array([0.2, 0.8, 0.0]))
        assert_allclose(optimal_adversary(d), [0.8, 0.2, 0.5])

    def test_objective_at_optimum(self):
        rng = np.random.default_rng(9)
        for _ in range(100):
            d = random_dist_pair(rng, int(rng.integers(2, 10)))
            value = adversary_objective(d, optimal_adversary(d))
            assert abs(value - (-math.log(4) + 2 * js_divergence(d))) <= 1e-10

    def test_rejects_non_distribution(self):
        with pytest.raises(ValueError):
            DiscreteDistPair(np.array([0.5, 0.6]), np.array([0.5, 0.5]))


class TestAudit:
    def test_ground_truth_imputation(self, small_sbm):
        rows = bias_audit(small_sbm, {"truth": small_sbm.sensitive})
        assert rows[0]["corr_imputed"] == pytest.approx(rows[0]["corr_true"])
        assert rows[0]["n"] == small_sbm.n_nodes

    def test_random_imputation_is_uncorrelated(self):
        rng = np.random.default_rng(0)
        n = 1000
        g = make_graph(n, [], labels=rng.integers(0, 2, n), sensitive=rng.integers(0, 2, n))
        rows = bias_audit(g, {"random": rng.integers(0, 2, n), "truth": g.sensitive})
        assert abs(rows[0]["corr_imputed"]) < 0.1
        assert [r["method"] for r in rows] == ["random", "truth"]


class TestEvaluate:
    def test_record_on_test_split(self, small_sbm):
        y_soft = np.where(small_sbm.labels == 1, 0.9, 0.1)
        record = evaluate(small_sbm, y_soft, small_sbm.sensitive, "vanilla", 0.0, 0.0, 1.0, 3)
        assert record.f1 == 1.0
        assert record.avpr == 1.0
        assert record.deqop == 0.0
        assert record.corr_imputed == pytest.approx(record.corr_true)
        assert record.imputation_acc is None
        assert len(record.csv_row().split(",")) == 12
