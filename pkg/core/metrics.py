"""Fairness and utility metrics, the correlation audit and closed-form adversary oracles."""
import logging
from dataclasses import dataclass
from typing import Dict, List, Optional

import numpy as np
from scipy.special import rel_entr, xlogy

from core.graph import Graph, label_assortativity
from errors import DegenerateGroupError, GraphFormatError, ShapeError
from run_types import AuditRow
from schemas import MetricsRecord

logger = logging.getLogger(__name__)


def _masked(mask, n: int) -> np.ndarray:
    if mask is None:
        return np.ones(n, dtype=bool)
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != (n,):
        raise ShapeError(f"mask has shape {mask.shape}, expected ({n},)")
    return mask


def _flat(values) -> np.ndarray:
    return np.asarray(values).reshape(-1)


def delta_dp(y_hard, s_hard, mask=None) -> float:
    """|P(ŷ=1 | s=1) - P(ŷ=1 | s=0)|."""
    y_hard, s_hard = _flat(y_hard), _flat(s_hard)
    mask = _masked(mask, y_hard.size)
    y, s = y_hard[mask], s_hard[mask]
    if not (s == 1).any() or not (s == 0).any():
        raise DegenerateGroupError("demographic parity needs both sensitive groups")
    return float(abs(y[s == 1].mean() - y[s == 0].mean()))


def delta_eqop(y_hard, s_hard, y_true, mask=None) -> float:
    """|TPR(s=1) - TPR(s=0)|."""
    y_hard, s_hard, y_true = _flat(y_hard), _flat(s_hard), _flat(y_true)
    mask = _masked(mask, y_hard.size)
    pos = mask & (y_true == 1)
    group1, group0 = pos & (s_hard == 1), pos & (s_hard == 0)
    if not group1.any() or not group0.any():
        raise DegenerateGroupError("equal opportunity needs positives in both sensitive groups")
    return float(abs(y_hard[group1].mean() - y_hard[group0].mean()))


def f1(y_hard, y_true, mask=None) -> float:
    """F1 of the positive class; 0 when nothing is predicted positive."""
    y_hard, y_true = _flat(y_hard), _flat(y_true)
    mask = _masked(mask, y_hard.size)
    pred, true = y_hard[mask] == 1, y_true[mask] == 1
    tp = int(np.sum(pred & true))
    if tp == 0:
        return 0.0
    precision = tp / int(np.sum(pred))
    recall = tp / int(np.sum(true))
    return float(2 * precision * recall / (precision + recall))


def avpr(scores, y_true, mask=None) -> float:
    """Step-wise average precision; equal scores keep node order."""
    scores, y_true = _flat(scores).astype(np.float64), _flat(y_true)
    mask = _masked(mask, scores.size)
    scores, y_true = scores[mask], y_true[mask]
    n_pos = int(np.sum(y_true == 1))
    if n_pos == 0:
        raise DegenerateGroupError("average precision needs at least one positive label")
    order = np.argsort(-scores, kind="stable")
    hits = (y_true[order] == 1).astype(np.float64)
    precision_at_k = np.cumsum(hits) / np.arange(1, hits.size + 1)
    return float(np.sum(precision_at_k * hits) / n_pos)


def pearson_corr(a, b) -> float:
    """Pearson correlation; 0 when either side is constant."""
    a, b = _flat(a).astype(np.float64), _flat(b).astype(np.float64)
    if a.size != b.size:
        raise ShapeError(f"correlation inputs differ in length ({a.size} vs {b.size})")
    a, b = a - a.mean(), b - b.mean()
    denom = np.sqrt(np.sum(a * a) * np.sum(b * b))
    if denom == 0.0:
        return 0.0
    return float(np.clip(np.sum(a * b) / denom, -1.0, 1.0))


def imputation_accuracy(s_hard, s_true, mask=None) -> Optional[float]:
    """Share of correctly imputed sensitive values; None on an empty mask."""
    s_hard, s_true = _flat(s_hard), _flat(s_true)
    mask = _masked(mask, s_hard.size)
    if not mask.any():
        return None
    return float(np.mean(s_hard[mask] == s_true[mask]))


@dataclass(frozen=True)
class DiscreteDistPair:
    """p(h | ŝ=1) and p(h | ŝ=0) over a shared set of bins."""
    p1: np.ndarray
    p0: np.ndarray

    def __post_init__(self):
        p1 = np.asarray(self.p1, dtype=np.float64)
        p0 = np.asarray(self.p0, dtype=np.float64)
        if p1.ndim != 1 or p1.shape != p0.shape:
            raise ShapeError("both distributions need the same 1-D bin layout")
        for name, p in (("p1", p1), ("p0", p0)):
            if np.any(p < 0) or abs(p.sum() - 1.0) > 1e-12:
                raise ValueError(f"{name} is not a probability vector")
        object.__setattr__(self, "p1", p1)
        object.__setattr__(self, "p0", p0)

    @property
    def bins(self) -> int:
        return int(self.p1.size)


def js_divergence(d: DiscreteDistPair) -> float:
    """Jensen-Shannon divergence in nats, within [0, ln 2]."""
    m = 0.5 * (d.p1 + d.p0)
    return float(0.5 * np.sum(rel_entr(d.p1, m)) + 0.5 * np.sum(rel_entr(d.p0, m)))


def optimal_adversary(d: DiscreteDistPair) -> np.ndarray:
    """Bin-wise p1 / (p1 + p0); 0.5 where both masses vanish."""
    total = d.p1 + d.p0
    with np.errstate(invalid="ignore", divide="ignore"):
        ratio = np.where(total > 0, d.p1 / np.where(total > 0, total, 1.0), 0.5)
    return ratio


def adversary_objective(d: DiscreteDistPair, f) -> float:
    """E_{p1}[log f] + E_{p0}[log(1 - f)], with 0·log 0 = 0."""
    f = np.asarray(f, dtype=np.float64)
    return float(np.sum(xlogy(d.p1, f)) + np.sum(xlogy(d.p0, 1.0 - f)))


def bias_audit(g: Graph, imputations: Dict[str, np.ndarray], mask=None) -> List[AuditRow]:
    """corr(ŝ_method, y) next to corr(s, y) for each imputation method."""
    mask = _masked(mask, g.n_nodes)
    corr_true = pearson_corr(g.sensitive[mask], g.labels[mask])
    rows: List[AuditRow] = []
    for method, s_hat in imputations.items():
        s_hat = _flat(s_hat)
        rows.append(AuditRow(
            method=method,
            corr_true=corr_true,
            corr_imputed=pearson_corr(s_hat[mask], g.labels[mask]),
            n=int(mask.sum()),
        ))
    return rows


def evaluate(
    g: Graph,
    y_soft,
    s_hat_hard,
    mode: str,
    alpha: float,
    beta: float,
    observed_frac: float,
    seed: int,
    losses: Optional[Dict[str, float]] = None,
    mask=None,
) -> MetricsRecord:
    """Metrics on ``mask`` (the test split by default) against the true s.

    ``s_hat_hard`` only feeds the imputed correlation and imputation accuracy.
    """
    mask = g.test_mask if mask is None else _masked(mask, g.n_nodes)
    y_soft = _flat(y_soft)
    y_hard = (y_soft >= 0.5).astype(np.int64)
    s_hat_hard = _flat(s_hat_hard)
    losses = losses or {}
    try:
        assortativity = label_assortativity(g)
    except GraphFormatError as e:
        logger.warning("assortativity unavailable: %s", e)
        assortativity = 0.0
    return MetricsRecord(
        mode=mode,
        alpha=float(alpha),
        beta=float(beta),
        observed_frac=float(observed_frac),
        seed=int(seed),
        f1=f1(y_hard, g.labels, mask),
        avpr=avpr(y_soft, g.labels, mask),
        ddp=delta_dp(y_hard, g.sensitive, mask),
        deqop=delta_eqop(y_hard, g.sensitive, g.labels, mask),
        corr_true=pearson_corr(g.sensitive, g.labels),
        corr_imputed=pearson_corr(s_hat_hard, g.labels),
        assortativity=assortativity,
        imputation_acc=imputation_accuracy(s_hat_hard, g.sensitive, ~g.observed_mask),
        loss_c=losses.get("loss_c"),
        loss_i=losses.get("loss_i"),
        loss_a=losses.get("loss_a"),
    )
