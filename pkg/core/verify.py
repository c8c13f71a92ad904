"""Property-oracle suite behind the ``verify`` subcommand."""
import logging
import math
import os
import tempfile
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np
from scipy.special import log_softmax

from core import autodiff as ad
from core.autodiff import Tape, Tensor
from core.graph import generate_sbm
from core.losses import LdamMargins, adversary_loss, classification_loss, constant_sensitive, imputation_loss
from core.metrics import (
    DiscreteDistPair,
    adversary_objective,
    avpr,
    delta_dp,
    delta_eqop,
    f1,
    js_divergence,
    optimal_adversary,
)
from core.missingness import CoverageInstance, exact_min_k_union, greedy_min_k_union
from core.optim import AdamState, adam_step
from core.trainer import train_vanilla
from errors import BftsError
from models import PlayerParams, forward_adversary, forward_classifier, forward_imputer, init_params
from run_types import CheckResult
from schemas import ModelShapes, SbmConfig, TrainConfig
from utils.checkpoint import load_checkpoint, save_checkpoint

logger = logging.getLogger(__name__)

GRAD_TOLERANCE = 1e-4
GRAD_SEEDS = 20
KINK_MARGIN = 1e-2

Check = Callable[[], Tuple[bool, str]]


def _random_tensor(rng, rows, cols, low=-1.0, high=1.0) -> Tensor:
    return Tensor(rng.uniform(low, high, size=(rows, cols)), requires_grad=True)


def _op_cases(rng) -> Dict[str, Tuple[Callable[[], Tensor], List[Tensor]]]:
    """One scalar-valued loss per differentiable op, built on random shapes."""
    r, c, k = (int(v) for v in rng.integers(1, 5, size=3))
    a, b = _random_tensor(rng, r, c), _random_tensor(rng, r, c)
    bias = _random_tensor(rng, 1, c)
    w = _random_tensor(rng, c, k)
    pos = _random_tensor(rng, r, c, 0.5, 2.0)
    mask = rng.random(r) < 0.6
    mask[0] = True
    weights = rng.uniform(-1, 1, size=(r, c))
    keep_rng_seed = int(rng.integers(2**31))

    def weighted(t: Tensor) -> Tensor:
        return ad.sum(ad.mul(t, np.resize(weights, t.shape)))

    return {
        "matmul": (lambda: weighted(ad.matmul(a, w)), [a, w]),
        "add": (lambda: weighted(ad.add(a, bias)), [a, bias]),
        "sub": (lambda: weighted(ad.sub(a, b)), [a, b]),
        "mul": (lambda: weighted(ad.mul(a, b)), [a, b]),
        "div": (lambda: weighted(ad.div(a, pos)), [a, pos]),
        "affine": (lambda: weighted(ad.affine(a, -1.5, 0.3)), [a]),
        "relu": (lambda: weighted(ad.relu(a)), [a]),
        "sigmoid": (lambda: weighted(ad.sigmoid(a)), [a]),
        "log": (lambda: weighted(ad.log(pos)), [pos]),
        "exp": (lambda: weighted(ad.exp(a)), [a]),
        "row_softmax": (lambda: weighted(ad.row_softmax(a)), [a]),
        "mean": (lambda: ad.mean(ad.mul(a, b)), [a, b]),
        "concat_rows": (lambda: ad.sum(ad.mul(ad.concat_rows([a, b]), np.vstack([weights, weights]))), [a, b]),
        "select_rows": (lambda: ad.sum(ad.select_rows(ad.mul(a, b), mask)), [a, b]),
        "dropout": (
            lambda: weighted(ad.dropout(a, 0.5, True, np.random.default_rng(keep_rng_seed))), [a],
        ),
    }


def check_op_gradients() -> Tuple[bool, str]:
    worst: Dict[str, float] = {}
    for seed in range(GRAD_SEEDS):
        rng = np.random.default_rng(seed)
        for name, (fn, tensors) in _op_cases(rng).items():
            # keep relu inputs away from the kink
            for t in tensors:
                t.values[np.abs(t.values) < 1e-3] = 0.1
            worst[name] = max(worst.get(name, 0.0), ad.check_gradient(fn, tensors))
    bad = {name: err for name, err in worst.items() if err > GRAD_TOLERANCE}
    return not bad, f"max relative error {max(worst.values()):.2e}" if not bad else f"failing ops: {bad}"


def _clear_of_kinks(params: PlayerParams, adj: np.ndarray, x: np.ndarray, rng, attempts: int = 200) -> bool:
    """Redraw every bias until no ReLU pre-activation lies within KINK_MARGIN of zero."""
    for _ in range(attempts):
        for net in (params.classifier, params.imputer, params.adversary):
            for bias in (net.b1, net.b2):
                bias.values[...] = rng.uniform(-0.5, 0.5, size=bias.shape)
        pre_c = adj @ x @ params.classifier.w1.values + params.classifier.b1.values
        pre_i = adj @ x @ params.imputer.w1.values + params.imputer.b1.values
        pre_a = np.maximum(pre_c, 0.0) @ params.adversary.w1.values + params.adversary.b1.values
        if min(np.abs(pre).min() for pre in (pre_c, pre_i, pre_a)) > KINK_MARGIN:
            return True
    return False


def _player_loss_cases(seed: int):
    rng = np.random.default_rng(seed)
    n, d = 6, 3
    adj = rng.uniform(0, 1, size=(n, n))
    adj = (adj + adj.T) / 2
    x = rng.standard_normal((n, d))
    params = init_params(ModelShapes(n_features=d, hidden_classifier=4, hidden_imputer=4, hidden_adversary=3), seed)
    if not _clear_of_kinks(params, adj, x, rng):
        logger.warning("seed %d: could not move every ReLU input off its kink", seed)
    y = np.array([0, 1] * (n // 2))
    s = np.array([1, 1, 0, 0, 1, 0])
    mask = np.ones(n, dtype=bool)
    margins = LdamMargins.from_labels(s, mask, 0.5)
    merged = constant_sensitive(rng.uniform(0.1, 0.9, size=n))

    def lc():
        _, y_hat = forward_classifier(params.classifier, adj, x)
        return classification_loss(y_hat, y, mask)

    def li():
        logits, _ = forward_imputer(params.imputer, adj, x)
        return imputation_loss(logits, s, mask, margins)

    def la():
        h, _ = forward_classifier(params.classifier, adj, x)
        return adversary_loss(forward_adversary(params.adversary, h), merged, mask)

    return [
        (lc, params.classifier.parameters()),
        (li, params.imputer.parameters()),
        (la, params.classifier.parameters() + params.adversary.parameters()),
    ]


def check_player_loss_gradients() -> Tuple[bool, str]:
    worst = 0.0
    for seed in range(GRAD_SEEDS):
        for fn, tensors in _player_loss_cases(seed):
            worst = max(worst, ad.check_gradient(fn, tensors))
    return worst <= GRAD_TOLERANCE, f"max relative error {worst:.2e}"


def _brute_rate(pred, cond) -> float:
    hits = total = 0
    for p, c in zip(pred, cond):
        if c:
            total += 1
            hits += p
    return hits / total


def _brute_ap(scores, labels) -> float:
    ranked = sorted(range(len(scores)), key=lambda i: (-scores[i], i))
    hits, total = 0, 0.0
    for rank, i in enumerate(ranked, start=1):
        if labels[i] == 1:
            hits += 1
            total += hits / rank
    return total / sum(labels)


def check_metric_oracles(instances: int = 1000) -> Tuple[bool, str]:
    rng = np.random.default_rng(7)
    for _ in range(instances):
        n = int(rng.integers(4, 21))
        y = rng.integers(0, 2, n)
        s = rng.integers(0, 2, n)
        pred = rng.integers(0, 2, n)
        scores = rng.random(n)
        if len(set(s)) == 2:
            expected = abs(_brute_rate(pred, s == 1) - _brute_rate(pred, s == 0))
            if abs(delta_dp(pred, s) - expected) > 1e-12:
                return False, "ΔDP disagrees with counting"
        if ((s == 1) & (y == 1)).any() and ((s == 0) & (y == 1)).any():
            expected = abs(_brute_rate(pred, (s == 1) & (y == 1)) - _brute_rate(pred, (s == 0) & (y == 1)))
            if abs(delta_eqop(pred, s, y) - expected) > 1e-12:
                return False, "ΔEQOP disagrees with counting"
        tp = sum(1 for p, t in zip(pred, y) if p == 1 and t == 1)
        pp, ap = int(pred.sum()), int(y.sum())
        expected_f1 = 0.0 if tp == 0 else 2 * tp / (pp + ap)
        if abs(f1(pred, y) - expected_f1) > 1e-12:
            return False, "F1 disagrees with counting"
        if ap and abs(avpr(scores, y) - _brute_ap(list(scores), list(y))) > 1e-12:
            return False, "AVPR disagrees with enumeration"
    return True, f"{instances} instances"


def _bitmask_min_union(sets, k) -> int:
    best = None
    for chosen in range(1 << len(sets)):
        if bin(chosen).count("1") != k:
            continue
        union = set()
        for i in range(len(sets)):
            if chosen >> i & 1:
                union |= sets[i]
        best = len(union) if best is None else min(best, len(union))
    return best


def random_coverage_instance(rng, n_sets: int, universe: int) -> CoverageInstance:
    sets = tuple(frozenset(np.flatnonzero(rng.random(universe) < 0.3).tolist()) for _ in range(n_sets))
    return CoverageInstance(sets=sets, targets=frozenset(range(universe)), universe_size=universe)


def check_min_k_union(instances: int = 200) -> Tuple[bool, str]:
    rng = np.random.default_rng(11)
    ties = 0
    for _ in range(instances):
        n_sets = int(rng.integers(1, 13))
        inst = random_coverage_instance(rng, n_sets, int(rng.integers(1, 15)))
        k = int(rng.integers(0, n_sets + 1))
        exact, witness = exact_min_k_union(inst, k)
        if exact != _bitmask_min_union(list(inst.sets), k) or len(witness) != k:
            return False, "exhaustive search disagrees with bitmask enumeration"
        _, greedy = greedy_min_k_union(inst, k)
        if greedy < exact:
            return False, "greedy beat the exact optimum"
        ties += greedy == exact
    return True, f"greedy optimal on {ties}/{instances}"


def random_dist_pair(rng, bins: int) -> DiscreteDistPair:
    def draw():
        p = rng.random(bins) * (rng.random(bins) < 0.8)
        if p.sum() == 0:
            p[int(rng.integers(bins))] = 1.0
        p = p / p.sum()
        p[-1] = 1.0 - p[:-1].sum()
        return np.clip(p, 0.0, None)

    return DiscreteDistPair(draw(), draw())


def check_js_identity(instances: int = 100) -> Tuple[bool, str]:
    rng = np.random.default_rng(3)
    worst = 0.0
    for _ in range(instances):
        d = random_dist_pair(rng, int(rng.integers(2, 10)))
        value = adversary_objective(d, optimal_adversary(d))
        worst = max(worst, abs(value - (-math.log(4.0) + 2.0 * js_divergence(d))))
    return worst <= 1e-10, f"max deviation {worst:.2e}"


def check_ldam() -> Tuple[bool, str]:
    rng = np.random.default_rng(5)
    for _ in range(50):
        n0, n1 = (int(v) for v in rng.integers(1, 500, size=2))
        labels = np.array([0] * n0 + [1] * n1)
        m = LdamMargins.from_labels(labels, np.ones(labels.size, dtype=bool), 0.5)
        if abs(m.delta0 / m.delta1 - (n1 / n0) ** 0.25) > 1e-12:
            return False, "margin ratio is not (n1/n0)^(1/4)"
        logits = rng.standard_normal((labels.size, 2))
        ce = -np.mean(log_softmax(logits, axis=1)[np.arange(labels.size), labels])
        zero = LdamMargins.from_labels(labels, np.ones(labels.size, dtype=bool), 0.0)
        got = imputation_loss(Tensor(logits), labels, np.ones(labels.size, dtype=bool), zero).item()
        if abs(got - ce) > 1e-12:
            return False, f"C=0 LDAM differs from cross-entropy by {abs(got - ce):.2e}"
    return True, "50 instances"


def check_determinism() -> Tuple[bool, str]:
    sbm = SbmConfig(block_sizes=[30, 20], p_in=0.2, p_out=0.02, seed=4)
    g1, g2 = generate_sbm(sbm), generate_sbm(sbm)
    if g1 != g2:
        return False, "SBM generation is not reproducible"
    cfg = TrainConfig(mode="vanilla", epochs=5, seed=2, hidden_classifier=8, hidden_imputer=8, hidden_adversary=4)
    t1, t2 = train_vanilla(g1, cfg), train_vanilla(g2, cfg)
    if t1.classifier_trajectory != t2.classifier_trajectory:
        return False, "training is not reproducible"
    return True, "SBM and training reproducible"


def check_checkpoint_roundtrip() -> Tuple[bool, str]:
    params = init_params(ModelShapes(n_features=3, hidden_classifier=4, hidden_imputer=4, hidden_adversary=2), 9)
    with tempfile.TemporaryDirectory() as tmp:
        path = os.path.join(tmp, "ckpt.txt")
        save_checkpoint(path, params.named_tensors())
        loaded = load_checkpoint(path)
    same = all(np.array_equal(loaded[name], t.values) for name, t in params.named_tensors())
    return same, "exact round trip" if same else "values changed across save/load"


def train_adversary_on_bins(d: DiscreteDistPair, nodes_per_group: int = 100, steps: int = 1500,
                            lr: float = 0.05, seed: int = 0) -> np.ndarray:
    """Fit an MLP adversary to one-hot bin embeddings drawn exactly from ``d``.

    Returns the adversary's output per bin.
    """
    rows, groups = [], []
    for group, p in ((1, d.p1), (0, d.p0)):
        counts = np.round(p * nodes_per_group).astype(int)
        for b, count in enumerate(counts):
            rows.extend([b] * count)
            groups.extend([group] * count)
    h = np.eye(d.bins)[rows]
    merged = constant_sensitive(groups)
    everyone = np.ones(len(rows), dtype=bool)
    shapes = ModelShapes(n_features=1, hidden_classifier=d.bins, hidden_imputer=1, hidden_adversary=8)
    mlp = init_params(shapes, seed).adversary
    params = mlp.parameters()
    state = AdamState()
    for _ in range(steps):
        with Tape():
            la = adversary_loss(forward_adversary(mlp, h), merged, everyone)
            for p in params:
                p.zero_grad()
            ad.backward(ad.affine(la, -1.0, 0.0))
        adam_step(params, [p.grad for p in params], state, lr)
    return forward_adversary(mlp, np.eye(d.bins)).values[:, 0]


def check_trained_adversary() -> Tuple[bool, str]:
    d = DiscreteDistPair(np.array([0.8, 0.2]), np.array([0.3, 0.7]))
    gap = float(np.max(np.abs(train_adversary_on_bins(d) - optimal_adversary(d))))
    return gap <= 0.02, f"largest per-bin gap to the closed form {gap:.4f}"


CHECKS: Dict[str, Check] = {
    "op_gradients": check_op_gradients,
    "player_loss_gradients": check_player_loss_gradients,
    "metric_oracles": check_metric_oracles,
    "min_k_union": check_min_k_union,
    "js_identity": check_js_identity,
    "trained_adversary": check_trained_adversary,
    "ldam": check_ldam,
    "determinism": check_determinism,
    "checkpoint": check_checkpoint_roundtrip,
}


def run_verification(inject: Optional[str] = None) -> List[CheckResult]:
    """Run every check; ``inject`` names one check whose verdict is flipped."""
    if inject is not None and inject not in CHECKS:
        raise ValueError(f"unknown check {inject!r}; choose from {sorted(CHECKS)}")
    results: List[CheckResult] = []
    for name, check in CHECKS.items():
        try:
            passed, detail = check()
        except (BftsError, ValueError) as e:
            passed, detail = False, f"{type(e).__name__}: {e}"
        if name == inject:
            passed, detail = not passed, f"injected failure ({detail})"
        logger.info("check %s: %s (%s)", name, "pass" if passed else "FAIL", detail)
        results.append(CheckResult(name=name, passed=bool(passed), detail=detail))
    return results
