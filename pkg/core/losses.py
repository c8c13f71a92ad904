"""Classification, imputation (LDAM) and adversary losses, and the ŝ merge."""
from dataclasses import dataclass
from typing import Literal

import numpy as np

from core import autodiff as ad
from core.autodiff import Tensor
from core.graph import Graph
from errors import DegenerateGroupError, ShapeError

SOURCE_OBSERVED = "observed"
SOURCE_IMPUTED = "imputed"
SOURCE_LABEL_PROXY = "label-proxy"

# below this total weight a group counts as empty
_MIN_GROUP_WEIGHT = 1e-12


@dataclass(frozen=True)
class MergedSensitive:
    """ŝ: true s on observed nodes, the imputer's ŝi elsewhere."""
    s_hat: Tensor
    source: np.ndarray

    def hard(self) -> np.ndarray:
        return (self.s_hat.values[:, 0] >= 0.5).astype(np.int64)


@dataclass(frozen=True)
class LdamMargins:
    n0: int
    n1: int
    delta0: float
    delta1: float
    C: float

    @classmethod
    def from_labels(cls, targets, pool_mask, C: float) -> "LdamMargins":
        """Δ^j = C / n_j^{1/4} over the nodes of ``pool_mask``."""
        pooled = np.asarray(targets)[np.asarray(pool_mask, dtype=bool)]
        n1 = int(np.sum(pooled == 1))
        n0 = int(pooled.size - n1)
        if n0 == 0 or n1 == 0:
            raise DegenerateGroupError(f"LDAM needs both classes in the pool (n0={n0}, n1={n1})")
        return cls(n0=n0, n1=n1, delta0=C / n0 ** 0.25, delta1=C / n1 ** 0.25, C=C)

    def as_array(self) -> np.ndarray:
        return np.array([self.delta0, self.delta1])


def _column(values, n: int, name: str) -> np.ndarray:
    values = np.asarray(values, dtype=np.float64).reshape(-1)
    if values.shape != (n,):
        raise ShapeError(f"{name} has {values.shape[0]} entries, expected {n}")
    return values.reshape(-1, 1)


def binary_cross_entropy(probs: Tensor, targets: np.ndarray) -> Tensor:
    """Mean of -[t log p + (1 - t) log(1 - p)] over all rows."""
    t = _column(targets, probs.shape[0], "targets")
    positive = ad.mul(ad.log(probs), t)
    negative = ad.mul(ad.log(ad.affine(probs, -1.0, 1.0)), 1.0 - t)
    return ad.affine(ad.mean(ad.add(positive, negative)), -1.0, 0.0)


def classification_loss(y_hat: Tensor, y, train_mask) -> Tensor:
    """L_C: binary cross-entropy of ŷ against y on V_L."""
    mask = np.asarray(train_mask, dtype=bool)
    if not mask.any():
        raise DegenerateGroupError("classification loss over an empty training mask")
    return binary_cross_entropy(ad.select_rows(y_hat, mask), np.asarray(y)[mask])


def imputation_loss(logits: Tensor, targets, pool_mask, margins: LdamMargins) -> Tensor:
    """L_I: mean over the pool of -log(e^{z_s - Δ^s} / (e^{z_s - Δ^s} + e^{z_{1-s}}))."""
    mask = np.asarray(pool_mask, dtype=bool)
    if not mask.any():
        raise DegenerateGroupError("imputation loss over an empty pool")
    if logits.shape[1] != 2:
        raise ShapeError(f"imputation logits must have 2 columns, got {logits.shape[1]}")
    s = np.asarray(targets, dtype=np.int64)[mask]
    one_hot = np.eye(2)[s]
    shifted = ad.sub(ad.select_rows(logits, mask), one_hot * margins.as_array()[s][:, None])
    true_prob = ad.matmul(ad.mul(ad.row_softmax(shifted), one_hot), np.ones((2, 1)))
    return ad.affine(ad.mean(ad.log(true_prob)), -1.0, 0.0)


def merge_sensitive(si_hat: Tensor, g: Graph, mode: Literal["observed", "label-proxy"] = "observed") -> MergedSensitive:
    """Build ŝ. Observed entries carry the ground truth exactly."""
    if si_hat.shape != (g.n_nodes, 1):
        raise ShapeError(f"ŝi must be {g.n_nodes} x 1, got {si_hat.shape}")
    if mode == "label-proxy":
        return MergedSensitive(s_hat=si_hat, source=np.full(g.n_nodes, SOURCE_LABEL_PROXY))
    if mode != "observed":
        raise ValueError(f"unknown sensitive mode {mode!r}")
    observed = g.observed_mask
    if not observed.any():
        raise DegenerateGroupError("observed mode needs at least one observed node; use label-proxy")
    keep = (~observed).astype(np.float64).reshape(-1, 1)
    truth = (g.sensitive * observed).astype(np.float64).reshape(-1, 1)
    s_hat = ad.add(ad.mul(si_hat, keep), truth)
    source = np.where(observed, SOURCE_OBSERVED, SOURCE_IMPUTED)
    return MergedSensitive(s_hat=s_hat, source=source)


def constant_sensitive(values, source: str = SOURCE_OBSERVED) -> MergedSensitive:
    """Wrap fixed (hard or soft) sensitive values as a gradient-free ŝ."""
    values = np.asarray(values, dtype=np.float64).reshape(-1)
    return MergedSensitive(s_hat=Tensor(values), source=np.full(values.size, source))


def adversary_loss(sa_hat: Tensor, merged: MergedSensitive, eval_mask) -> Tensor:
    """L_A: soft-weighted per-group means of log f_A and log(1 - f_A).

    Always ≤ 0; f_A ascends it, f_C descends α·L_A, f_I descends -β·L_A.
    """
    mask = np.asarray(eval_mask, dtype=bool)
    if sa_hat.shape != merged.s_hat.shape:
        raise ShapeError(f"ŝa {sa_hat.shape} and ŝ {merged.s_hat.shape} differ")
    if not mask.any():
        raise DegenerateGroupError("adversary loss over an empty mask")
    sa = ad.select_rows(sa_hat, mask)
    s = ad.select_rows(merged.s_hat, mask)
    not_s = ad.affine(s, -1.0, 1.0)
    w1, w0 = ad.sum(s), ad.sum(not_s)
    if w1.item() < _MIN_GROUP_WEIGHT or w0.item() < _MIN_GROUP_WEIGHT:
        raise DegenerateGroupError(
            f"adversary groups need positive weight (s=1: {w1.item():.3g}, s=0: {w0.item():.3g})"
        )
    group1 = ad.div(ad.sum(ad.mul(s, ad.log(sa))), w1)
    group0 = ad.div(ad.sum(ad.mul(not_s, ad.log(ad.affine(sa, -1.0, 1.0)))), w0)
    return ad.add(group1, group0)
