"""Plain-text parameter checkpoints (``BFTS-CKPT v1``)."""
from typing import Dict, List, Tuple

import numpy as np

from core.autodiff import Tensor
from errors import CheckpointError
from utils.graph_io import format_float

HEADER = "BFTS-CKPT v1"


def save_checkpoint(path: str, named: List[Tuple[str, Tensor]]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as handle:
        handle.write(HEADER + "\n")
        for name, tensor in named:
            rows, cols = tensor.shape
            handle.write(f"{name} {rows} {cols}\n")
            for row in tensor.values:
                handle.write(" ".join(format_float(x) for x in row) + "\n")


def load_checkpoint(path: str) -> Dict[str, np.ndarray]:
    try:
        with open(path, encoding="utf-8") as handle:
            lines = handle.read().splitlines()
    except OSError as e:
        raise CheckpointError(f"cannot read checkpoint {path}: {e}") from e
    if not lines or lines[0] != HEADER:
        raise CheckpointError(f"{path}: missing {HEADER!r} header")

    tensors: Dict[str, np.ndarray] = {}
    i = 1
    while i < len(lines):
        parts = lines[i].split()
        if len(parts) != 3:
            raise CheckpointError(f"{path}:{i + 1}: expected 'name rows cols', got {lines[i]!r}")
        name = parts[0]
        try:
            rows, cols = int(parts[1]), int(parts[2])
        except ValueError as e:
            raise CheckpointError(f"{path}:{i + 1}: bad tensor shape") from e
        if name in tensors:
            raise CheckpointError(f"{path}: tensor {name} appears twice")
        block = lines[i + 1:i + 1 + rows]
        if len(block) != rows:
            raise CheckpointError(f"{path}: tensor {name} is truncated")
        try:
            values = np.array([[float(x) for x in row.split()] for row in block], dtype=np.float64)
        except ValueError as e:
            raise CheckpointError(f"{path}: tensor {name} holds a non-numeric value") from e
        if values.shape != (rows, cols):
            raise CheckpointError(f"{path}: tensor {name} has shape {values.shape}, header says {(rows, cols)}")
        tensors[name] = values
        i += 1 + rows
    return tensors


def restore_into(named: List[Tuple[str, Tensor]], values: Dict[str, np.ndarray]) -> None:
    """Copy loaded values into existing tensors of matching names and shapes."""
    for name, tensor in named:
        if name not in values:
            raise CheckpointError(f"checkpoint lacks tensor {name}")
        if values[name].shape != tensor.shape:
            raise CheckpointError(f"tensor {name}: checkpoint shape {values[name].shape} != {tensor.shape}")
        tensor.values[...] = values[name]
