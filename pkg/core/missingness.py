"""Missingness processes for the sensitive attribute.

``k`` always counts observed nodes. The degree heuristic hides the ``n - k``
lowest-degree nodes; the coverage adversaries observe the ``k`` candidates whose
hop neighbourhoods cover the fewest bias-relevant nodes.
"""
import itertools
import logging
from dataclasses import dataclass
from typing import FrozenSet, List, Sequence, Tuple

import networkx as nx
import numpy as np

from config import EXACT_MKU_MAX_SETS
from core.graph import Graph, degrees
from errors import InstanceTooLargeError
from schemas import MissingnessSpec
from utils.rng import rng_stream

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class CoverageInstance:
    """One candidate set per node: the target nodes it would cover."""
    sets: Tuple[FrozenSet[int], ...]
    targets: FrozenSet[int]
    universe_size: int

    def __post_init__(self):
        for items in self.sets:
            if any(i < 0 or i >= self.universe_size for i in items):
                raise ValueError("coverage item outside the universe")


def _check_k(n: int, k: int) -> None:
    if k < 0 or k > n:
        raise ValueError(f"k={k} must lie in [0, {n}]")


def mcar_mask(n: int, k: int, seed: int) -> np.ndarray:
    """Uniformly random k-subset observed."""
    _check_k(n, k)
    mask = np.zeros(n, dtype=bool)
    mask[rng_stream(seed, "mask.mcar").choice(n, size=k, replace=False)] = True
    return mask


def degree_adversary(g: Graph, k: int) -> np.ndarray:
    """Hide the n - k lowest-degree nodes (ties: lower index hidden first)."""
    _check_k(g.n_nodes, k)
    order = np.lexsort((np.arange(g.n_nodes), degrees(g)))
    mask = np.ones(g.n_nodes, dtype=bool)
    mask[order[: g.n_nodes - k]] = False
    return mask


def to_networkx(g: Graph) -> nx.Graph:
    graph = nx.Graph()
    graph.add_nodes_from(range(g.n_nodes))
    graph.add_edges_from(map(tuple, g.edges.tolist()))
    return graph


def bias_targets(g: Graph) -> FrozenSet[int]:
    """Nodes with (s=0, y=1) or (s=1, y=0)."""
    hits = ((g.sensitive == 0) & (g.labels == 1)) | ((g.sensitive == 1) & (g.labels == 0))
    return frozenset(np.flatnonzero(hits).tolist())


def build_coverage_instance(g: Graph, radius: int = 1) -> CoverageInstance:
    """A labelled node covers every target within ``radius`` hops of it."""
    graph = to_networkx(g)
    targets = bias_targets(g)
    sets = []
    for v in range(g.n_nodes):
        reach = nx.single_source_shortest_path_length(graph, v, cutoff=radius)
        sets.append(frozenset(u for u in reach if u in targets))
    return CoverageInstance(sets=tuple(sets), targets=targets, universe_size=g.n_nodes)


def greedy_min_k_union(inst: CoverageInstance, k: int) -> Tuple[List[int], int]:
    """Pick k sets one at a time, each adding the fewest new items (ties: lowest index)."""
    _check_k(len(inst.sets), k)
    chosen: List[int] = []
    taken = np.zeros(len(inst.sets), dtype=bool)
    union: set = set()
    for _ in range(k):
        best, best_gain = -1, None
        for i, items in enumerate(inst.sets):
            if taken[i]:
                continue
            gain = len(items - union)
            if best_gain is None or gain < best_gain:
                best, best_gain = i, gain
                if gain == 0:
                    break
        taken[best] = True
        chosen.append(best)
        union |= inst.sets[best]
    return chosen, len(union)


def exact_min_k_union(inst: CoverageInstance, k: int) -> Tuple[int, List[int]]:
    """Exhaustive minimum k-union over at most ``EXACT_MKU_MAX_SETS`` candidate sets."""
    n_sets = len(inst.sets)
    if n_sets > EXACT_MKU_MAX_SETS:
        raise InstanceTooLargeError(f"{n_sets} candidate sets exceed the exhaustive limit of {EXACT_MKU_MAX_SETS}")
    _check_k(n_sets, k)
    masks = [sum(1 << i for i in items) for items in inst.sets]
    best_size, best_witness = None, []
    for combo in itertools.combinations(range(n_sets), k):
        bits = 0
        for i in combo:
            bits |= masks[i]
        size = bin(bits).count("1")
        if best_size is None or size < best_size:
            best_size, best_witness = size, list(combo)
            if size == 0:
                break
    return (best_size or 0), best_witness


def mask_from_choice(n: int, chosen: Sequence[int]) -> np.ndarray:
    mask = np.zeros(n, dtype=bool)
    mask[list(chosen)] = True
    return mask


def observed_mask(g: Graph, spec: MissingnessSpec) -> np.ndarray:
    """Observation mask with exactly ``spec.resolve_k(n)`` observed nodes."""
    k = spec.resolve_k(g.n_nodes)
    if spec.kind == "mcar":
        return mcar_mask(g.n_nodes, k, spec.seed)
    if spec.kind == "degree":
        return degree_adversary(g, k)
    inst = build_coverage_instance(g, spec.radius)
    if spec.kind == "coverage-greedy":
        chosen, size = greedy_min_k_union(inst, k)
    else:
        size, chosen = exact_min_k_union(inst, k)
    logger.debug("%s adversary covers %d of %d targets", spec.kind, size, len(inst.targets))
    return mask_from_choice(g.n_nodes, chosen)


def apply_missingness(g: Graph, spec: MissingnessSpec) -> Graph:
    return g.with_observed(observed_mask(g, spec))
