"""The three players: GCN classifier f_C, GCN imputer f_I and MLP adversary f_A."""
import hashlib
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from core import autodiff as ad
from core.autodiff import Tensor
from core.optim import AdamState
from errors import ShapeError
from schemas import ModelShapes
from utils.rng import rng_stream

# softmax column 1 = P(s = 1)
_POSITIVE_COLUMN = np.array([[0.0], [1.0]])


@dataclass
class GcnNetwork:
    """Two-layer GCN: ReLU hidden layer, dropout after it at train time."""
    w1: Tensor
    b1: Tensor
    w2: Tensor
    b2: Tensor
    dropout_rate: float = 0.5

    def parameters(self) -> List[Tensor]:
        return [self.w1, self.b1, self.w2, self.b2]

    def frozen(self) -> "GcnNetwork":
        return GcnNetwork(*(p.detach() for p in self.parameters()), dropout_rate=self.dropout_rate)


@dataclass
class MlpAdversary:
    """Graph-free two-layer MLP reading the classifier embedding."""
    w1: Tensor
    b1: Tensor
    w2: Tensor
    b2: Tensor

    def parameters(self) -> List[Tensor]:
        return [self.w1, self.b1, self.w2, self.b2]

    def frozen(self) -> "MlpAdversary":
        return MlpAdversary(*(p.detach() for p in self.parameters()))


@dataclass
class PlayerParams:
    """θ_C, θ_I, θ_A and one optimizer state per player."""
    classifier: GcnNetwork
    imputer: GcnNetwork
    adversary: MlpAdversary
    optimizer_states: Dict[str, AdamState] = field(
        default_factory=lambda: {"fc": AdamState(), "fi": AdamState(), "fa": AdamState()}
    )

    def player(self, prefix: str):
        return {"fc": self.classifier, "fi": self.imputer, "fa": self.adversary}[prefix]

    def named_tensors(self) -> List[Tuple[str, Tensor]]:
        named = []
        for prefix in ("fc", "fi", "fa"):
            net = self.player(prefix)
            for attr in ("w1", "b1", "w2", "b2"):
                named.append((f"{prefix}.{attr}", getattr(net, attr)))
        return named

    def snapshot(self) -> "PlayerParams":
        """Deep copy of the values; optimizer states are not carried."""
        def copy_gcn(net: GcnNetwork) -> GcnNetwork:
            return GcnNetwork(*(Tensor(p.values, requires_grad=True) for p in net.parameters()),
                              dropout_rate=net.dropout_rate)

        return PlayerParams(
            classifier=copy_gcn(self.classifier),
            imputer=copy_gcn(self.imputer),
            adversary=MlpAdversary(*(Tensor(p.values, requires_grad=True) for p in self.adversary.parameters())),
        )

    def fingerprint(self, prefix: str) -> str:
        digest = hashlib.sha256()
        for p in self.player(prefix).parameters():
            digest.update(p.values.tobytes())
        return digest.hexdigest()


def _glorot(rng: np.random.Generator, fan_in: int, fan_out: int) -> Tensor:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return Tensor(rng.uniform(-limit, limit, size=(fan_in, fan_out)), requires_grad=True)


def _zeros(cols: int) -> Tensor:
    return Tensor(np.zeros((1, cols)), requires_grad=True)


def _init_gcn(rng, d_in: int, hidden: int, d_out: int, dropout_rate: float) -> GcnNetwork:
    return GcnNetwork(_glorot(rng, d_in, hidden), _zeros(hidden), _glorot(rng, hidden, d_out), _zeros(d_out),
                      dropout_rate=dropout_rate)


def init_params(shapes: ModelShapes, seed: int, dropout_rate: float = 0.5) -> PlayerParams:
    """Glorot-uniform weights and zero biases, one random substream per player."""
    classifier = _init_gcn(rng_stream(seed, "init.fc"), shapes.n_features, shapes.hidden_classifier, 1, dropout_rate)
    imputer = _init_gcn(rng_stream(seed, "init.fi"), shapes.n_features, shapes.hidden_imputer, 2, dropout_rate)
    rng = rng_stream(seed, "init.fa")
    adversary = MlpAdversary(
        _glorot(rng, shapes.hidden_classifier, shapes.hidden_adversary), _zeros(shapes.hidden_adversary),
        _glorot(rng, shapes.hidden_adversary, 1), _zeros(1),
    )
    return PlayerParams(classifier=classifier, imputer=imputer, adversary=adversary)


def _gcn_hidden(net: GcnNetwork, adj, x, train: bool, rng) -> Tensor:
    adj, x = ad.as_tensor(adj), ad.as_tensor(x)
    if adj.shape != (x.shape[0], x.shape[0]):
        raise ShapeError(f"propagation matrix {adj.shape} does not match {x.shape[0]} nodes")
    if x.shape[1] != net.w1.shape[0]:
        raise ShapeError(f"features have {x.shape[1]} columns, layer expects {net.w1.shape[0]}")
    h = ad.relu(ad.add(ad.matmul(ad.matmul(adj, x), net.w1), net.b1))
    return ad.dropout(h, net.dropout_rate, train, rng)


def forward_classifier(net: GcnNetwork, adj, x, train: bool = False,
                       rng: Optional[np.random.Generator] = None) -> Tuple[Tensor, Tensor]:
    """Returns (h, ŷ): the n × hidden embedding and n × 1 probabilities of y=1."""
    h = _gcn_hidden(net, adj, x, train, rng)
    y_hat = ad.sigmoid(ad.add(ad.matmul(ad.matmul(adj, h), net.w2), net.b2))
    return h, y_hat


def forward_imputer(net: GcnNetwork, adj, x, train: bool = False,
                    rng: Optional[np.random.Generator] = None) -> Tuple[Tensor, Tensor]:
    """Returns (logits n × 2, ŝi n × 1 soft probability of s=1)."""
    h = _gcn_hidden(net, adj, x, train, rng)
    logits = ad.add(ad.matmul(ad.matmul(adj, h), net.w2), net.b2)
    if logits.shape[1] != 2:
        raise ShapeError(f"imputer head must have 2 outputs, got {logits.shape[1]}")
    si_hat = ad.matmul(ad.row_softmax(logits), _POSITIVE_COLUMN)
    return logits, si_hat


def forward_adversary(mlp: MlpAdversary, h) -> Tensor:
    h = ad.as_tensor(h)
    if h.shape[1] != mlp.w1.shape[0]:
        raise ShapeError(f"embedding width {h.shape[1]} does not match adversary input {mlp.w1.shape[0]}")
    hidden = ad.relu(ad.add(ad.matmul(h, mlp.w1), mlp.b1))
    return ad.sigmoid(ad.add(ad.matmul(hidden, mlp.w2), mlp.b2))
