import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), "..")))

from core.graph import Graph, generate_sbm  # noqa: E402
from schemas import SbmConfig, TrainConfig  # noqa: E402


def make_graph(n, edges, labels=None, sensitive=None, n_features=2, **masks):
    features = np.arange(n * n_features, dtype=float).reshape(n, n_features) / (n * n_features)
    return Graph.build(n, edges, features, labels, sensitive, **masks)


@pytest.fixture
def path4():
    return make_graph(4, [(0, 1), (1, 2), (2, 3)])


@pytest.fixture
def star5():
    return make_graph(5, [(0, 1), (0, 2), (0, 3), (0, 4)])


@pytest.fixture
def small_sbm():
    return generate_sbm(SbmConfig(block_sizes=[60, 40], p_in=0.15, p_out=0.02, n_features=6, n_noise=2,
                                  gamma=1.5, seed=3))


@pytest.fixture
def tiny_cfg():
    return TrainConfig(epochs=4, seed=1, hidden_classifier=8, hidden_imputer=8, hidden_adversary=4, lr_classifier=0.01,
                       lr_imputer=0.01, lr_adversary=0.01)
