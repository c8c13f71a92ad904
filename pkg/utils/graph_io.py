"""Graph directory format: edges.tsv, features.csv and nodes.csv."""
import os
from typing import List

import numpy as np

from core.graph import Graph
from errors import GraphFormatError

EDGE_FILE = "edges.tsv"
FEATURE_FILE = "features.csv"
NODE_FILE = "nodes.csv"
NODE_HEADER = "node,y,s,observed,train,val,test"


def format_float(value: float) -> str:
    return format(float(value), ".17g")


def _read_lines(path: str) -> List[str]:
    try:
        with open(path, encoding="utf-8", newline="") as handle:
            return [line.rstrip("\r\n") for line in handle if line.strip()]
    except OSError as e:
        raise GraphFormatError(f"cannot read {path}: {e}") from e


def _parse_int(token: str, path: str, lineno: int) -> int:
    try:
        return int(token)
    except ValueError as e:
        raise GraphFormatError(f"{path}:{lineno}: not an integer: {token!r}") from e


def load_graph(edge_path: str, feature_path: str, label_path: str) -> Graph:
    """Read the three files and validate them into a Graph."""
    node_lines = _read_lines(label_path)
    if not node_lines or node_lines[0].strip() != NODE_HEADER:
        raise GraphFormatError(f"{label_path}: header must be {NODE_HEADER!r}")
    columns = {name: [] for name in NODE_HEADER.split(",")}
    for lineno, line in enumerate(node_lines[1:], start=2):
        cells = line.split(",")
        if len(cells) != len(columns):
            raise GraphFormatError(f"{label_path}:{lineno}: expected {len(columns)} columns, got {len(cells)}")
        for name, cell in zip(columns, cells):
            columns[name].append(_parse_int(cell, label_path, lineno))
    n = len(columns["node"])
    if columns["node"] != list(range(n)):
        raise GraphFormatError(f"{label_path}: node ids must run 0..{n - 1} in order")
    for name in ("observed", "train", "val", "test"):
        if any(v not in (0, 1) for v in columns[name]):
            raise GraphFormatError(f"{label_path}: column {name} must hold 0/1")

    rows = []
    width = None
    for lineno, line in enumerate(_read_lines(feature_path), start=1):
        try:
            row = [float(cell) for cell in line.split(",")]
        except ValueError as e:
            raise GraphFormatError(f"{feature_path}:{lineno}: {e}") from e
        if width is None:
            width = len(row)
        elif len(row) != width:
            raise GraphFormatError(
                f"{feature_path}:{lineno}: dimension mismatch, expected {width} columns, got {len(row)}"
            )
        rows.append(row)
    if len(rows) != n:
        raise GraphFormatError(f"{feature_path}: {len(rows)} feature rows for {n} nodes")

    edges = []
    for lineno, line in enumerate(_read_lines(edge_path), start=1):
        cells = line.split("\t")
        if len(cells) != 2:
            raise GraphFormatError(f"{edge_path}:{lineno}: expected 'u<TAB>v', got {line!r}")
        u, v = (_parse_int(c, edge_path, lineno) for c in cells)
        if u == v:
            raise GraphFormatError(f"{edge_path}:{lineno}: self-loop on node {u}")
        edges.append((u, v))

    return Graph.build(
        n,
        np.array(edges, dtype=np.int64).reshape(-1, 2),
        np.array(rows, dtype=np.float64).reshape(n, -1),
        columns["y"],
        columns["s"],
        np.array(columns["observed"], dtype=bool),
        np.array(columns["train"], dtype=bool),
        np.array(columns["val"], dtype=bool),
        np.array(columns["test"], dtype=bool),
    )


def load_graph_dir(directory: str) -> Graph:
    return load_graph(
        os.path.join(directory, EDGE_FILE),
        os.path.join(directory, FEATURE_FILE),
        os.path.join(directory, NODE_FILE),
    )


def save_graph(g: Graph, directory: str) -> None:
    os.makedirs(directory, exist_ok=True)
    with open(os.path.join(directory, EDGE_FILE), "w", encoding="utf-8", newline="\n") as handle:
        for u, v in g.edges.tolist():
            handle.write(f"{u}\t{v}\n")
    with open(os.path.join(directory, FEATURE_FILE), "w", encoding="utf-8", newline="\n") as handle:
        for row in g.features:
            handle.write(",".join(format_float(x) for x in row) + "\n")
    with open(os.path.join(directory, NODE_FILE), "w", encoding="utf-8", newline="\n") as handle:
        handle.write(NODE_HEADER + "\n")
        for i in range(g.n_nodes):
            cells = (
                i, g.labels[i], g.sensitive[i], g.observed_mask[i],
                g.train_mask[i], g.val_mask[i], g.test_mask[i],
            )
            handle.write(",".join(str(int(c)) for c in cells) + "\n")
