import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal
from scipy.special import expit, softmax

from core.graph import normalized_adjacency
from core.trainer import predict
from errors import ShapeError
from models import forward_adversary, forward_classifier, forward_imputer, init_params
from schemas import ModelShapes

SHAPES = ModelShapes(n_features=6, hidden_classifier=8, hidden_imputer=5, hidden_adversary=3)


def zeroed(params):
    for _, tensor in params.named_tensors():
        tensor.values[...] = 0.0
    return params


class TestForward:
    def test_zero_weights_give_one_half(self, small_sbm):
        params = zeroed(init_params(SHAPES, 0))
        adj = normalized_adjacency(small_sbm)
        h, y_hat = forward_classifier(params.classifier, adj, small_sbm.features)
        _, si_hat = forward_imputer(params.imputer, adj, small_sbm.features)
        assert_allclose(y_hat.values, 0.5)
        assert_allclose(si_hat.values, 0.5)
        assert_allclose(forward_adversary(params.adversary, h).values, 0.5)

    def test_isolated_node_is_a_plain_mlp(self):
        params = init_params(ModelShapes(n_features=3, hidden_classifier=4), 2)
        x = np.array([[0.3, -1.2, 0.7]])
        net = params.classifier
        h, y_hat = forward_classifier(net, np.array([[1.0]]), x)
        hidden = np.maximum(x @ net.w1.values + net.b1.values, 0.0)
        assert_allclose(h.values, hidden)
        assert_allclose(y_hat.values, expit(hidden @ net.w2.values + net.b2.values))

    def test_imputer_hand_set_weights(self):
        params = zeroed(init_params(ModelShapes(n_features=1, hidden_imputer=1), 0))
        net = params.imputer
        net.w1.values[...] = 2.0
        net.w2.values[...] = [[1.0, -1.0]]
        logits, si_hat = forward_imputer(net, np.array([[1.0]]), np.array([[0.5]]))
        assert_allclose(logits.values, [[1.0, -1.0]])
        assert si_hat.values[0, 0] == pytest.approx(softmax([1.0, -1.0])[1])

    def test_imputer_equal_logits(self):
        params = zeroed(init_params(ModelShapes(n_features=1, hidden_imputer=1), 0))
        params.imputer.b2.values[...] = [[2.0, 2.0]]
        _, si_hat = forward_imputer(params.imputer, np.eye(3), np.ones((3, 1)))
        assert_allclose(si_hat.values, 0.5)

    def test_adversary_hand_set_unit(self):
        params = zeroed(init_params(ModelShapes(n_features=1, hidden_classifier=1, hidden_adversary=1), 0))
        mlp = params.adversary
        mlp.w1.values[...] = 1.5
        mlp.w2.values[...] = -2.0
        mlp.b2.values[...] = 0.5
        out = forward_adversary(mlp, np.array([[1.0], [-1.0]]))
        assert_allclose(out.values, [[expit(-2.5)], [expit(0.5)]])

    def test_feature_width_mismatch(self, small_sbm):
        params = init_params(ModelShapes(n_features=3), 0)
        with pytest.raises(ShapeError):
            forward_classifier(params.classifier, normalized_adjacency(small_sbm), small_sbm.features)

    def test_adversary_width_mismatch(self):
        params = init_params(SHAPES, 0)
        with pytest.raises(ShapeError):
            forward_adversary(params.adversary, np.ones((2, 5)))


class TestInitParams:
    def test_same_seed_same_params(self):
        a, b = init_params(SHAPES, 5), init_params(SHAPES, 5)
        for (name, x), (_, y) in zip(a.named_tensors(), b.named_tensors()):
            assert_array_equal(x.values, y.values, err_msg=name)

    def test_biases_are_zero(self):
        for name, tensor in init_params(SHAPES, 1).named_tensors():
            if name.endswith(("b1", "b2")):
                assert_array_equal(tensor.values, 0.0)

    def test_glorot_variance(self):
        params = init_params(ModelShapes(n_features=300, hidden_classifier=500), 0)
        w = params.classifier.w1.values
        assert w.var() == pytest.approx(2.0 / (300 + 500), rel=0.05)

    def test_players_have_independent_streams(self):
        params = init_params(ModelShapes(n_features=4, hidden_classifier=6, hidden_imputer=6), 0)
        assert not np.array_equal(params.classifier.w1.values, params.imputer.w1.values)


class TestPredict:
    def test_evaluation_is_deterministic(self, small_sbm):
        params = init_params(SHAPES, 3)
        a, b = predict(params, small_sbm), predict(params, small_sbm)
        assert_array_equal(a.y_soft, b.y_soft)
        assert_array_equal(a.si_soft, b.si_soft)

    def test_soft_outputs_and_idempotent_threshold(self, small_sbm):
        out = predict(init_params(SHAPES, 3), small_sbm)
        assert np.all((out.y_soft > 0) & (out.y_soft < 1))
        assert_array_equal((out.y_hard >= 0.5).astype(int), out.y_hard)
        assert_array_equal(out.y_hard, (out.y_soft >= 0.5).astype(int))

    def test_permutation_equivariance(self, small_sbm):
        params = init_params(SHAPES, 3)
        order = np.random.default_rng(0).permutation(small_sbm.n_nodes)
        base = predict(params, small_sbm)
        moved = predict(params, small_sbm.permuted(order))
        assert_allclose(moved.y_soft, base.y_soft[order], atol=1e-12)
        assert_allclose(moved.si_soft, base.si_soft[order], atol=1e-12)
