"""Graph container, propagation matrix, SBM generator and label assortativity."""
import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

from errors import ConfigError, GraphFormatError
from schemas import SbmConfig
from utils.rng import rng_stream

logger = logging.getLogger(__name__)


def _frozen(array: np.ndarray) -> np.ndarray:
    array = np.array(array, copy=True)
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class Graph:
    """Undirected node-attributed graph with ground truth and observation masks.

    ``edges`` is an (m, 2) integer array with ``u < v`` on every row, sorted
    lexicographically. All arrays are read-only.
    """
    n_nodes: int
    edges: np.ndarray
    features: np.ndarray
    labels: np.ndarray
    sensitive: np.ndarray
    observed_mask: np.ndarray
    train_mask: np.ndarray
    val_mask: np.ndarray
    test_mask: np.ndarray

    @classmethod
    def build(
        cls,
        n_nodes: int,
        edges,
        features,
        labels,
        sensitive,
        observed_mask=None,
        train_mask=None,
        val_mask=None,
        test_mask=None,
    ) -> "Graph":
        """Validate the inputs and return a graph with canonical edge order."""
        if n_nodes <= 0:
            raise GraphFormatError("graph needs at least one node")
        edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
        if edges.size:
            if edges.min() < 0 or edges.max() >= n_nodes:
                raise GraphFormatError(f"edge endpoint out of range for {n_nodes} nodes")
            if np.any(edges[:, 0] == edges[:, 1]):
                bad = edges[edges[:, 0] == edges[:, 1]][0]
                raise GraphFormatError(f"self-loop on node {bad[0]}")
            edges = np.sort(edges, axis=1)
            edges = edges[np.lexsort((edges[:, 1], edges[:, 0]))]
            if np.any(np.all(edges[1:] == edges[:-1], axis=1)):
                raise GraphFormatError("duplicate edge")

        features = np.asarray(features, dtype=np.float64)
        if features.ndim != 2 or features.shape[0] != n_nodes:
            raise GraphFormatError(f"features must have {n_nodes} rows, got shape {features.shape}")

        def node_vector(values, name, default):
            if values is None:
                return np.full(n_nodes, default)
            values = np.asarray(values)
            if values.shape != (n_nodes,):
                raise GraphFormatError(f"{name} must have length {n_nodes}, got {values.shape}")
            return values

        labels = node_vector(labels, "labels", 0).astype(np.int64)
        sensitive = node_vector(sensitive, "sensitive", 0).astype(np.int64)
        for name, values in (("labels", labels), ("sensitive", sensitive)):
            if not np.isin(values, (0, 1)).all():
                raise GraphFormatError(f"{name} must be binary")

        observed = node_vector(observed_mask, "observed_mask", True).astype(bool)
        train = node_vector(train_mask, "train_mask", False).astype(bool)
        val = node_vector(val_mask, "val_mask", False).astype(bool)
        test = node_vector(test_mask, "test_mask", False).astype(bool)
        if np.any(train & val) or np.any(train & test) or np.any(val & test):
            raise GraphFormatError("train/val/test masks overlap")

        return cls(
            n_nodes=int(n_nodes),
            edges=_frozen(edges),
            features=_frozen(features),
            labels=_frozen(labels),
            sensitive=_frozen(sensitive),
            observed_mask=_frozen(observed),
            train_mask=_frozen(train),
            val_mask=_frozen(val),
            test_mask=_frozen(test),
        )

    @property
    def n_edges(self) -> int:
        return int(self.edges.shape[0])

    @property
    def n_features(self) -> int:
        return int(self.features.shape[1])

    def with_observed(self, observed_mask) -> "Graph":
        return Graph.build(
            self.n_nodes, self.edges, self.features, self.labels, self.sensitive,
            observed_mask, self.train_mask, self.val_mask, self.test_mask,
        )

    def permuted(self, order) -> "Graph":
        """Relabel nodes so that new node i is old node ``order[i]``."""
        order = np.asarray(order)
        inverse = np.empty_like(order)
        inverse[order] = np.arange(order.size)
        return Graph.build(
            self.n_nodes, inverse[self.edges], self.features[order], self.labels[order],
            self.sensitive[order], self.observed_mask[order], self.train_mask[order],
            self.val_mask[order], self.test_mask[order],
        )

    def __eq__(self, other) -> bool:
        if not isinstance(other, Graph):
            return NotImplemented
        return self.n_nodes == other.n_nodes and all(
            np.array_equal(getattr(self, name), getattr(other, name))
            for name in ("edges", "features", "labels", "sensitive", "observed_mask",
                         "train_mask", "val_mask", "test_mask")
        )

    __hash__ = None


def degrees(g: Graph) -> np.ndarray:
    return np.bincount(g.edges.reshape(-1), minlength=g.n_nodes).astype(np.int64)


def adjacency(g: Graph) -> np.ndarray:
    a = np.zeros((g.n_nodes, g.n_nodes))
    if g.n_edges:
        a[g.edges[:, 0], g.edges[:, 1]] = 1.0
        a[g.edges[:, 1], g.edges[:, 0]] = 1.0
    return a


def normalized_adjacency(g: Graph) -> np.ndarray:
    """D̃^{-1/2} (A + I) D̃^{-1/2}, the GCN propagation matrix."""
    a_tilde = adjacency(g) + np.eye(g.n_nodes)
    inv_sqrt = 1.0 / np.sqrt(a_tilde.sum(axis=1))
    return a_tilde * inv_sqrt[:, None] * inv_sqrt[None, :]


def generate_sbm(cfg: SbmConfig) -> Graph:
    """Two-community benchmark: block 0 holds the y=1 class, every other block y=0.

    s ~ Bernoulli(p_bias) when y=1 and Bernoulli(1 - p_bias) otherwise. The
    first ``n_features - n_noise`` columns are ``gamma * y + N(0, 1)``, the rest
    pure N(0, 1) noise.
    """
    n = int(np.sum(cfg.block_sizes))
    if n <= 0:
        raise ConfigError("SBM config produces zero nodes")
    block = np.repeat(np.arange(len(cfg.block_sizes)), cfg.block_sizes)
    labels = (block == 0).astype(np.int64)

    rows, cols = np.triu_indices(n, k=1)
    prob = np.where(block[rows] == block[cols], cfg.p_in, cfg.p_out)
    keep = rng_stream(cfg.seed, "sbm.edges").random(rows.size) < prob
    edges = np.column_stack([rows[keep], cols[keep]])

    p_one = np.where(labels == 1, cfg.p_bias, 1.0 - cfg.p_bias)
    sensitive = (rng_stream(cfg.seed, "sbm.sensitive").random(n) < p_one).astype(np.int64)

    features = rng_stream(cfg.seed, "sbm.features").standard_normal((n, cfg.n_features))
    n_signal = cfg.n_features - cfg.n_noise
    features[:, :n_signal] += cfg.gamma * labels[:, None]

    order = rng_stream(cfg.seed, "sbm.split").permutation(n)
    n_train = int(round(cfg.train_frac * n))
    n_val = int(round(cfg.val_frac * n))
    train = np.zeros(n, dtype=bool)
    val = np.zeros(n, dtype=bool)
    train[order[:n_train]] = True
    val[order[n_train:n_train + n_val]] = True
    test = ~(train | val)

    logger.debug("SBM generated: %d nodes, %d edges", n, edges.shape[0])
    return Graph.build(n, edges, features, labels, sensitive, None, train, val, test)


def label_assortativity(g: Graph, labels: Optional[np.ndarray] = None) -> float:
    """Newman's attribute assortativity of the (binary) class labels."""
    if g.n_edges == 0:
        raise GraphFormatError("assortativity is undefined on an edgeless graph")
    values = g.labels if labels is None else np.asarray(labels, dtype=np.int64)
    u, v = values[g.edges[:, 0]], values[g.edges[:, 1]]
    mixing = np.zeros((2, 2))
    np.add.at(mixing, (u, v), 1.0)
    np.add.at(mixing, (v, u), 1.0)
    mixing /= mixing.sum()
    a, b = mixing.sum(axis=1), mixing.sum(axis=0)
    expected = float(a @ b)
    if np.isclose(1.0 - expected, 0.0):
        return 1.0
    return float((np.trace(mixing) - expected) / (1.0 - expected))
