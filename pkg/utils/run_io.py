"""Training output directory: checkpoint.txt, losses.csv and report.json."""
import json
import os
from typing import Dict, List, Optional

import numpy as np

from errors import CheckpointError
from models import PlayerParams, init_params
from run_types import EpochLosses
from schemas import ModelShapes, TrainConfig
from utils.checkpoint import load_checkpoint, restore_into, save_checkpoint
from utils.graph_io import format_float

CHECKPOINT_FILE = "checkpoint.txt"
LOSSES_FILE = "losses.csv"
REPORT_FILE = "report.json"
LOSSES_HEADER = "epoch,loss_c,loss_i,loss_a,val_avpr"


def _cell(value: Optional[float]) -> str:
    return "" if value is None else format_float(value)


def write_losses(path: str, history: List[EpochLosses]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as handle:
        handle.write(LOSSES_HEADER + "\n")
        for row in history:
            cells = [str(row["epoch"])] + [_cell(row[key]) for key in ("loss_c", "loss_i", "loss_a", "val_avpr")]
            handle.write(",".join(cells) + "\n")


def write_train_outputs(out_dir: str, report, cfg: TrainConfig, extra: Optional[Dict] = None) -> Dict[str, str]:
    """Persist one training run; nothing written here depends on wall time."""
    os.makedirs(out_dir, exist_ok=True)
    paths = {name: os.path.join(out_dir, name) for name in (CHECKPOINT_FILE, LOSSES_FILE, REPORT_FILE)}
    save_checkpoint(paths[CHECKPOINT_FILE], report.params.named_tensors())
    write_losses(paths[LOSSES_FILE], report.losses)
    summary = {
        "mode": report.mode,
        "selected_epoch": report.selected_epoch,
        "warnings": list(report.warnings),
        "stage1_accuracy": report.stage1_accuracy,
        "config": cfg.model_dump(),
    }
    summary.update(extra or {})
    with open(paths[REPORT_FILE], "w", encoding="utf-8", newline="\n") as handle:
        handle.write(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    return paths


def load_params(path: str, dropout_rate: float = 0.5) -> PlayerParams:
    """Rebuild all three players from a checkpoint, reading widths off the tensor shapes."""
    values: Dict[str, np.ndarray] = load_checkpoint(path)
    try:
        shapes = ModelShapes(
            n_features=values["fc.w1"].shape[0],
            hidden_classifier=values["fc.w1"].shape[1],
            hidden_imputer=values["fi.w1"].shape[1],
            hidden_adversary=values["fa.w1"].shape[1],
        )
    except KeyError as e:
        raise CheckpointError(f"{path}: checkpoint lacks tensor {e.args[0]}") from e
    params = init_params(shapes, seed=0, dropout_rate=dropout_rate)
    restore_into(params.named_tensors(), values)
    return params
