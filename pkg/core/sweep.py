"""Experiment sweeps: run every (cell, seed) pair and write plot-ready CSVs."""
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

from core.graph import Graph, generate_sbm
from core.metrics import bias_audit, evaluate
from core.missingness import apply_missingness
from core.trainer import TrainReport, predict, train
from errors import BftsError
from run_types import AuditRow
from schemas import METRICS_HEADER, ExperimentPlan, MetricsRecord, PlanCell
from utils.graph_io import format_float, load_graph_dir

logger = logging.getLogger(__name__)

TRADEOFF_HEADER = "mode,alpha,beta,observed_frac,f1,fairness"
AUDIT_HEADER = "kind,observed_frac,seed,method,corr_true,corr_imputed"
FAILURE_HEADER = "cell,seed,error"


@dataclass
class CellOutcome:
    index: int
    seed: int
    cell: PlanCell
    record: Optional[MetricsRecord] = None
    audit: List[AuditRow] = field(default_factory=list)
    error: Optional[str] = None

    @property
    def sort_key(self) -> Tuple[int, int]:
        return self.index, self.seed


@dataclass
class SweepResult:
    outcomes: List[CellOutcome]

    @property
    def records(self) -> List[MetricsRecord]:
        return [o.record for o in self.outcomes if o.record is not None]

    @property
    def failures(self) -> List[CellOutcome]:
        return [o for o in self.outcomes if o.error is not None]


def load_cell_graph(cell: PlanCell) -> Graph:
    g = generate_sbm(cell.sbm) if cell.sbm is not None else load_graph_dir(cell.graph_path)
    return apply_missingness(g, cell.missingness)


def observed_fraction(g: Graph) -> float:
    return float(g.observed_mask.mean())


def run_cell(cell: PlanCell) -> Tuple[MetricsRecord, TrainReport, Graph]:
    """Build the graph, mask it, train, and evaluate on the test split."""
    g = load_cell_graph(cell)
    cfg = cell.train
    if cfg.sensitive_mode == "observed" and not g.observed_mask.any() and cfg.mode in ("bfts", "indep"):
        logger.info("no observed sensitive values; switching to label-proxy imputation")
        cfg = cfg.model_copy(update={"sensitive_mode": "label-proxy"})
    report = train(g, cfg)
    prediction = predict(report.params, g)
    last = report.losses[report.selected_epoch] if report.selected_epoch >= 0 else None
    losses = {}
    if last is not None:
        losses = {key: last[key] for key in ("loss_c", "loss_i", "loss_a") if last[key] is not None}
    record = evaluate(
        g, prediction.y_soft, report.s_hat, cfg.mode, cfg.alpha, cfg.beta,
        observed_fraction(g), cfg.seed, losses=losses,
    )
    return record, report, g


def _run_one(index: int, seed: int, cell: PlanCell) -> CellOutcome:
    seeded = cell.seeded(seed)
    outcome = CellOutcome(index=index, seed=seed, cell=seeded)
    try:
        record, report, g = run_cell(seeded)
        outcome.record = record
        outcome.audit = bias_audit(g, {seeded.train.mode: report.s_hat})
    except (BftsError, ValueError) as e:
        logger.error("cell %s (seed %d) failed: %s", seeded.key, seed, e)
        outcome.error = f"{type(e).__name__}: {e}"
    return outcome


def run_sweep(plan: ExperimentPlan, workers: int = 1) -> SweepResult:
    """Run every (cell, seed); rows come back in (cell index, seed) order."""
    cells = plan.expand()
    jobs = [(i, seed, cell) for i, cell in enumerate(cells) for seed in plan.seeds]
    logger.info("sweep: %d cells x %d seeds on %d workers", len(cells), len(plan.seeds), workers)
    if workers <= 1:
        outcomes = [_run_one(*job) for job in jobs]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(lambda job: _run_one(*job), jobs))
    return SweepResult(outcomes=sorted(outcomes, key=lambda o: o.sort_key))


def _write(path: str, header: str, rows: List[str]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as handle:
        handle.write(header + "\n")
        for row in rows:
            handle.write(row + "\n")


def _tradeoff_row(record: MetricsRecord, bias: float) -> str:
    values = (record.alpha, record.beta, record.observed_frac, record.f1, 1.0 - bias)
    return ",".join([record.mode] + [format_float(v) for v in values])


def write_outputs(plan: ExperimentPlan, result: SweepResult, output_dir: Optional[str] = None) -> Dict[str, str]:
    """Write metrics, trade-off, audit and failure CSVs plus the plan itself."""
    output_dir = output_dir or plan.output_dir
    os.makedirs(output_dir, exist_ok=True)
    paths = {name: os.path.join(output_dir, name) for name in (
        "metrics.csv", "tradeoff_dp.csv", "tradeoff_eqop.csv", "audit.csv", "failures.csv", "plan.json",
    )}
    records = result.records
    _write(paths["metrics.csv"], ",".join(METRICS_HEADER), [r.csv_row() for r in records])
    _write(paths["tradeoff_dp.csv"], TRADEOFF_HEADER, [_tradeoff_row(r, r.ddp) for r in records])
    _write(paths["tradeoff_eqop.csv"], TRADEOFF_HEADER, [_tradeoff_row(r, r.deqop) for r in records])

    audit_rows = []
    for outcome in result.outcomes:
        if outcome.record is None:
            continue
        for row in outcome.audit:
            audit_rows.append(",".join([
                outcome.cell.missingness.kind, format_float(outcome.record.observed_frac), str(outcome.seed),
                row["method"], format_float(row["corr_true"]), format_float(row["corr_imputed"]),
            ]))
    _write(paths["audit.csv"], AUDIT_HEADER, audit_rows)
    _write(paths["failures.csv"], FAILURE_HEADER, [
        f"{o.index},{o.seed},{o.error.replace(',', ';').replace(chr(10), ' ')}" for o in result.failures
    ])
    with open(paths["plan.json"], "w", encoding="utf-8", newline="\n") as handle:
        handle.write(plan.model_dump_json(indent=2) + "\n")
    return paths
