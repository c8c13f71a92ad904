"""Three-player adversarial training and the baseline trainers.

Each epoch of the three-player scheme runs, in order:

1. f_I forward, giving ŝi and the merged ŝ;
2. one step on θ_I minimizing L_I - β·L_A (θ_C, θ_A frozen);
3. one ascent step on θ_A maximizing L_A;
4. one step on θ_C minimizing L_C + α·L_A (θ_I, θ_A frozen).

Frozen players enter a step as detached copies, so a step can only ever write
gradients into the player it updates. f_A is always fed the dropout-free
embedding of f_C and the dropout-free ŝ. The model kept at the end is the
latest one with the best validation average precision.
"""
import logging
import time
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional

import numpy as np

from config import HARD_THRESHOLD, INDEP_HOLDOUT_FRAC, WORST_CASE_WARMUP
from core import autodiff as ad
from core.autodiff import Tape, Tensor
from core.graph import Graph, normalized_adjacency
from core.losses import (
    LdamMargins,
    MergedSensitive,
    adversary_loss,
    classification_loss,
    constant_sensitive,
    imputation_loss,
    merge_sensitive,
)
from core.metrics import avpr, delta_dp
from core.optim import adam_step
from errors import DegenerateGroupError
from models import PlayerParams, forward_adversary, forward_classifier, forward_imputer, init_params
from run_types import EpochLosses
from schemas import TrainConfig
from utils.rng import rng_stream

logger = logging.getLogger(__name__)

LOG_EVERY = 100


@dataclass
class Prediction:
    """Evaluation-mode outputs for every node."""
    y_soft: np.ndarray
    y_hard: np.ndarray
    si_soft: np.ndarray
    si_hard: np.ndarray
    h: np.ndarray


@dataclass
class TrainReport:
    mode: str
    losses: List[EpochLosses]
    selected_epoch: int
    params: PlayerParams
    wall_time: float
    warnings: List[str] = field(default_factory=list)
    classifier_trajectory: List[str] = field(default_factory=list)
    s_hat: Optional[np.ndarray] = None
    stage1_accuracy: Optional[float] = None


def _hard(values: np.ndarray) -> np.ndarray:
    return (np.asarray(values).reshape(-1) >= HARD_THRESHOLD).astype(np.int64)


def predict(params: PlayerParams, g: Graph, adj: Optional[np.ndarray] = None) -> Prediction:
    """Deterministic forward of f_C and f_I, thresholded at 0.5."""
    adj = normalized_adjacency(g) if adj is None else adj
    h, y_hat = forward_classifier(params.classifier, adj, g.features, train=False)
    _, si_hat = forward_imputer(params.imputer, adj, g.features, train=False)
    y_soft = y_hat.values[:, 0].copy()
    si_soft = si_hat.values[:, 0].copy()
    return Prediction(y_soft=y_soft, y_hard=_hard(y_soft), si_soft=si_soft, si_hard=_hard(si_soft), h=h.values.copy())


def merged_hard(si_soft: np.ndarray, g: Graph) -> np.ndarray:
    """Hard ŝ: observed nodes keep their true s, the rest are thresholded imputations."""
    return np.where(g.observed_mask, g.sensitive, _hard(si_soft)).astype(np.int64)


class BftsTrainer:
    """Owns one run's parameters, optimizer states and random streams."""

    def __init__(self, g: Graph, cfg: TrainConfig, params: Optional[PlayerParams] = None):
        self.g = g
        self.cfg = cfg
        self.adj = normalized_adjacency(g)
        self.x = g.features
        self.params = params or init_params(cfg.shapes(g.n_features), cfg.seed, cfg.dropout)
        self.rng_fc = rng_stream(cfg.seed, "dropout.fc")
        self.rng_fi = rng_stream(cfg.seed, "dropout.fi")
        self.all_nodes = np.ones(g.n_nodes, dtype=bool)
        self.warnings: List[str] = []
        self.history: List[EpochLosses] = []
        self.trajectory: List[str] = []
        self.best_epoch = -1
        self.best_score = -np.inf
        self.best_params: Optional[PlayerParams] = None
        self._selection_mask = self._pick_selection_mask()

    # ------------------------------------------------------------------
    # plumbing

    def _pick_selection_mask(self) -> np.ndarray:
        g = self.g
        if (g.val_mask & (g.labels == 1)).any():
            return g.val_mask
        logger.warning("validation split has no positive labels; selecting on the training split")
        return g.train_mask

    def _warn(self, epoch: int, message: str) -> None:
        text = f"epoch {epoch}: {message}"
        logger.warning(text)
        self.warnings.append(text)

    def _apply(self, prefix: str, objective: Tensor, lr: float) -> None:
        params = self.params.player(prefix).parameters()
        for p in params:
            p.zero_grad()
        ad.backward(objective)
        adam_step(params, [p.grad for p in params], self.params.optimizer_states[prefix], lr)
        for p in params:
            p.zero_grad()

    def _adversary_term(self, sa: Tensor, merged: MergedSensitive, mask: np.ndarray, epoch: int) -> Optional[Tensor]:
        try:
            return adversary_loss(sa, merged, mask)
        except DegenerateGroupError as e:
            self._warn(epoch, f"adversarial terms skipped ({e})")
            return None

    def merged_eval(self) -> MergedSensitive:
        """Detached ŝ from a dropout-free forward of the current imputer."""
        _, si_hat = forward_imputer(self.params.imputer, self.adj, self.x, train=False)
        merged = merge_sensitive(si_hat.detach(), self.g, self.cfg.sensitive_mode)
        return MergedSensitive(s_hat=merged.s_hat.detach(), source=merged.source)

    def imputer_targets(self):
        """(targets, pool) for L_I: true s on V_S, or y on V_L in label-proxy mode."""
        if self.cfg.sensitive_mode == "label-proxy":
            return self.g.labels, self.g.train_mask
        return self.g.sensitive, self.g.observed_mask

    def _finish_epoch(self, epoch: int, loss_c: float, loss_i: Optional[float], loss_a: Optional[float]) -> None:
        _, y_hat = forward_classifier(self.params.classifier, self.adj, self.x, train=False)
        score = avpr(y_hat.values[:, 0], self.g.labels, self._selection_mask)
        self.history.append(EpochLosses(epoch=epoch, loss_c=loss_c, loss_i=loss_i, loss_a=loss_a, val_avpr=score))
        self.trajectory.append(self.params.fingerprint("fc"))
        # ties go to the later epoch
        if score >= self.best_score:
            self.best_score, self.best_epoch = score, epoch
            self.best_params = self.params.snapshot()
        if epoch % LOG_EVERY == 0:
            logger.debug("epoch %d: L_C=%.5f L_I=%s L_A=%s val AVPR=%.4f", epoch, loss_c, loss_i, loss_a, score)

    def report(self, started: float, s_hat: Optional[np.ndarray] = None,
               stage1_accuracy: Optional[float] = None) -> TrainReport:
        params = self.best_params or self.params.snapshot()
        if s_hat is None:
            s_hat = merged_hard(predict(params, self.g, self.adj).si_soft, self.g)
        return TrainReport(
            mode=self.cfg.mode,
            losses=self.history,
            selected_epoch=self.best_epoch,
            params=params,
            wall_time=time.perf_counter() - started,
            warnings=self.warnings,
            classifier_trajectory=self.trajectory,
            s_hat=s_hat,
            stage1_accuracy=stage1_accuracy,
        )

    # ------------------------------------------------------------------
    # player steps

    def classifier_step(self, epoch: int, merged: Optional[MergedSensitive], mask: np.ndarray) -> float:
        """One step on θ_C for L_C + α·L_A; the α term is dropped when α=0 or ŝ is missing."""
        cfg = self.cfg
        with Tape():
            _, y_hat = forward_classifier(self.params.classifier, self.adj, self.x, train=True, rng=self.rng_fc)
            loss_c = classification_loss(y_hat, self.g.labels, self.g.train_mask)
            objective = loss_c
            if cfg.alpha > 0 and merged is not None:
                # f_A only ever sees dropout-free embeddings
                h_eval, _ = forward_classifier(self.params.classifier, self.adj, self.x, train=False)
                sa = forward_adversary(self.params.adversary.frozen(), h_eval)
                la = self._adversary_term(sa, merged, mask, epoch)
                if la is not None:
                    objective = ad.add(loss_c, ad.affine(la, cfg.alpha, 0.0))
            self._apply("fc", objective, cfg.lr_classifier)
        return loss_c.item()

    def adversary_step(self, epoch: int, h: np.ndarray, merged: MergedSensitive, mask: np.ndarray) -> Optional[float]:
        """One gradient ascent step on θ_A for L_A."""
        with Tape():
            sa = forward_adversary(self.params.adversary, h)
            la = self._adversary_term(sa, merged, mask, epoch)
            if la is None:
                return None
            self._apply("fa", ad.affine(la, -1.0, 0.0), self.cfg.lr_adversary)
        return la.item()

    def imputer_step(self, epoch: int, margins: LdamMargins):
        """One step on θ_I for L_I - β·L_A.

        Returns (L_I, ŝ, h): ŝ is the detached eval-mode merge of the updated
        imputer and h the frozen classifier embedding the step was scored on.
        """
        cfg = self.cfg
        targets, pool = self.imputer_targets()
        with Tape():
            logits, si_hat = forward_imputer(self.params.imputer, self.adj, self.x, train=True, rng=self.rng_fi)
            merged = merge_sensitive(si_hat, self.g, cfg.sensitive_mode)
            loss_i = imputation_loss(logits, targets, pool, margins)
            h, _ = forward_classifier(self.params.classifier.frozen(), self.adj, self.x, train=False)
            objective = loss_i
            if cfg.beta > 0:
                sa = forward_adversary(self.params.adversary.frozen(), h)
                la = self._adversary_term(sa, merged, self.all_nodes, epoch)
                if la is not None:
                    objective = ad.sub(loss_i, ad.affine(la, cfg.beta, 0.0))
            self._apply("fi", objective, cfg.lr_imputer)
        return loss_i.item(), self.merged_eval(), h.values

    # ------------------------------------------------------------------
    # runs

    def run_bfts(self) -> TrainReport:
        started = time.perf_counter()
        targets, pool = self.imputer_targets()
        margins = LdamMargins.from_labels(targets, pool, self.cfg.effective_ldam_C)
        for epoch in range(self.cfg.epochs):
            loss_i, merged, h = self.imputer_step(epoch, margins)
            loss_a = self.adversary_step(epoch, h, merged, self.all_nodes)
            loss_c = self.classifier_step(epoch, merged if loss_a is not None else None, self.all_nodes)
            self._finish_epoch(epoch, loss_c, loss_i, loss_a)
        return self.report(started)

    def run_vanilla(self) -> TrainReport:
        started = time.perf_counter()
        for epoch in range(self.cfg.epochs):
            loss_c = self.classifier_step(epoch, None, self.all_nodes)
            self._finish_epoch(epoch, loss_c, None, None)
        return self.report(started, s_hat=np.where(self.g.observed_mask, self.g.sensitive, 0))

    def run_two_player(self, s_values: Optional[np.ndarray] = None, mask: Optional[np.ndarray] = None,
                       started: Optional[float] = None, stage1_accuracy: Optional[float] = None) -> TrainReport:
        """Classifier and adversary alternating on fixed sensitive values.

        Defaults to the true s restricted to the observed nodes (all nodes
        when ``oracle_sensitive`` is set).
        """
        started = time.perf_counter() if started is None else started
        g = self.g
        if s_values is None:
            s_values = g.sensitive
            mask = self.all_nodes if self.cfg.oracle_sensitive else g.observed_mask
            # unobserved nodes count as s=0 when reporting
            reported = g.sensitive if self.cfg.oracle_sensitive else np.where(g.observed_mask, g.sensitive, 0)
        else:
            mask = self.all_nodes if mask is None else mask
            reported = s_values
        merged = constant_sensitive(s_values)
        for epoch in range(self.cfg.epochs):
            loss_a = None
            if mask.any():
                h, _ = forward_classifier(self.params.classifier, self.adj, self.x, train=False)
                loss_a = self.adversary_step(epoch, h.values, merged, mask)
            loss_c = self.classifier_step(epoch, merged if loss_a is not None else None, mask)
            self._finish_epoch(epoch, loss_c, None, loss_a)
        return self.report(started, s_hat=np.asarray(reported, dtype=np.int64), stage1_accuracy=stage1_accuracy)

    def run_independent_imputation(self) -> TrainReport:
        """Stage 1 fits f_I alone with cross-entropy; stage 2 debiases against its hard output."""
        started = time.perf_counter()
        g, cfg = self.g, self.cfg
        if cfg.sensitive_mode == "label-proxy" or not g.observed_mask.any():
            targets, pool = g.labels, g.train_mask
            holdout = np.zeros(g.n_nodes, dtype=bool)
        else:
            targets = g.sensitive
            observed = np.flatnonzero(g.observed_mask)
            order = rng_stream(cfg.seed, "indep.split").permutation(observed)
            n_hold = int(round(INDEP_HOLDOUT_FRAC * observed.size)) if observed.size >= 5 else 0
            holdout = np.zeros(g.n_nodes, dtype=bool)
            holdout[order[:n_hold]] = True
            pool = g.observed_mask & ~holdout

        margins = LdamMargins.from_labels(targets, pool, 0.0)
        for epoch in range(cfg.imputer_epochs or cfg.epochs):
            with Tape():
                logits, _ = forward_imputer(self.params.imputer, self.adj, self.x, train=True, rng=self.rng_fi)
                self._apply("fi", imputation_loss(logits, targets, pool, margins), cfg.lr_imputer)

        _, si_hat = forward_imputer(self.params.imputer, self.adj, self.x, train=False)
        si_hard = _hard(si_hat.values)
        accuracy = float(np.mean(si_hard[holdout] == g.sensitive[holdout])) if holdout.any() else None
        logger.debug("independent imputation stage 1 held-out accuracy: %s", accuracy)
        s_prime = np.where(g.observed_mask, g.sensitive, si_hard)
        return self.run_two_player(s_prime, self.all_nodes, started=started, stage1_accuracy=accuracy)


def train_bfts(g: Graph, cfg: TrainConfig) -> TrainReport:
    return BftsTrainer(g, cfg).run_bfts()


def train_vanilla(g: Graph, cfg: TrainConfig) -> TrainReport:
    return BftsTrainer(g, cfg).run_vanilla()


def train_two_player(g: Graph, cfg: TrainConfig) -> TrainReport:
    return BftsTrainer(g, cfg).run_two_player()


def train_independent_imputation(g: Graph, cfg: TrainConfig) -> TrainReport:
    return BftsTrainer(g, cfg).run_independent_imputation()


TRAINERS: Dict[str, Callable[[Graph, TrainConfig], TrainReport]] = {
    "bfts": train_bfts,
    "vanilla": train_vanilla,
    "two-player": train_two_player,
    "indep": train_independent_imputation,
}


def train(g: Graph, cfg: TrainConfig) -> TrainReport:
    return TRAINERS[cfg.mode](g, cfg)


def train_worst_case_imputer(g: Graph, cfg: TrainConfig, params: PlayerParams, steps: int,
                             warmup: int = WORST_CASE_WARMUP) -> List[float]:
    """θ_I steps on L_I - β·L_A against a frozen classifier.

    f_A first takes ``warmup`` ascent steps on the frozen embedding and then one
    ascent step after every θ_I step, so the imputer always plays against a
    fitted adversary. Returns ΔDP(ŷ, hard ŝ) over all nodes after every θ_I
    step; ŷ never changes, so any movement comes from the imputations alone.
    """
    trainer = BftsTrainer(g, cfg, params=params)
    targets, pool = trainer.imputer_targets()
    margins = LdamMargins.from_labels(targets, pool, cfg.effective_ldam_C)
    frozen = predict(params, g, trainer.adj)
    y_hard, h = frozen.y_hard, frozen.h
    start = trainer.merged_eval()
    for step in range(warmup):
        trainer.adversary_step(step, h, start, trainer.all_nodes)
    logger.debug("worst-case imputer: adversary fitted for %d steps", warmup)

    trace: List[float] = []
    for step in range(steps):
        _, merged, _ = trainer.imputer_step(step, margins)
        trainer.adversary_step(step, h, merged, trainer.all_nodes)
        s_hard = merged_hard(predict(params, g, trainer.adj).si_soft, g)
        try:
            trace.append(delta_dp(y_hard, s_hard))
        except DegenerateGroupError:
            trace.append(trace[-1] if trace else 0.0)
    return trace
