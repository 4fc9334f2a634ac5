"""
Constructors for the built-in graph families
"""

import itertools
import logging
from dataclasses import dataclass, field
from math import comb
from pathlib import Path
from typing import Dict

import numpy as np

from utils import LabValidationError, check_capacity, parse_spec, reject_leftovers, spec_value

from .state_graph import StateGraph, state_records

logger = logging.getLogger(__name__)


def build_regular_tree(g: int, h: int, capacity=None) -> StateGraph:
    """
    Rooted g-ary tree of depth h, states numbered in BFS order (root = 0)

    Node i has children g*i+1 .. g*i+g, so level k occupies a contiguous id
    range and the g^h leaves are the last ids.
    """
    if int(g) < 2 or int(h) < 1:
        raise LabValidationError(f'regular tree needs g >= 2 and h >= 1, got g={g}, h={h}')
    g, h = int(g), int(h)
    check_capacity(f'tree(g={g}, h={h}) terminals', g ** h, capacity)
    num_states = (g ** (h + 1) - 1) // (g - 1)
    check_capacity(f'tree(g={g}, h={h}) states', num_states, capacity)
    first_leaf = num_states - g ** h
    flags = [i >= first_leaf for i in range(num_states)]
    edges = [(i, g * i + j) for i in range(first_leaf) for j in range(1, g + 1)]
    return StateGraph(state_records(flags), edges, initial=0)


def colex_key(subset):
    return tuple(reversed(subset))


def build_set_graph(d: int, S: int, capacity=None) -> StateGraph:
    """
    Subsets of the deposit {1..d} with at most S elements

    Ids run level by level (by subset size); inside a level subsets are in
    colex order. Each edge adds one element; size-S subsets are terminal.
    Labels are the sorted element tuples.
    """
    d, S = int(d), int(S)
    if not 1 <= S <= d:
        raise LabValidationError(f'set graph needs 1 <= S <= d, got d={d}, S={S}')
    total = sum(comb(d, k) for k in range(S + 1))
    check_capacity(f'set(d={d}, S={S}) states', total, capacity)

    labels = []
    for size in range(S + 1):
        level = sorted(itertools.combinations(range(1, d + 1), size), key=colex_key)
        labels.extend(level)
    ids = {subset: index for index, subset in enumerate(labels)}

    edges = []
    for subset in labels:
        if len(subset) == S:
            continue
        members = set(subset)
        for element in range(1, d + 1):
            if element not in members:
                child = tuple(sorted(members | {element}))
                edges.append((ids[subset], ids[child]))
    flags = [len(subset) == S for subset in labels]
    logger.debug(f'Built set graph d={d} S={S}: {len(labels)} states, {len(edges)} edges')
    return StateGraph(state_records(flags, labels), edges, initial=0)


def set_state_id(d: int, subset) -> int:
    """Id of ``subset`` in ``build_set_graph(d, S)`` for any S >= len(subset)."""
    subset = sorted(subset)
    offset = sum(comb(d, k) for k in range(len(subset)))
    rank = sum(comb(element - 1, position + 1) for position, element in enumerate(subset))
    return offset + rank


def build_random_dag(num_states: int, seed: int = 0, edge_probability: float = 0.2, capacity=None) -> StateGraph:
    """
    Random DAG over ids 0..N-1 where every state draws parents among lower ids

    Each state v > 0 gets one uniformly drawn parent plus every other lower
    id independently with ``edge_probability``. Childless states are the
    terminals.
    """
    num_states = int(num_states)
    if num_states < 3:
        raise LabValidationError('random DAG needs at least 3 states')
    if not 0.0 <= edge_probability <= 1.0:
        raise LabValidationError('edge probability must lie in [0, 1]')
    check_capacity('random DAG states', num_states, capacity)
    rng = np.random.default_rng(seed)
    edges = set()
    for v in range(1, num_states):
        edges.add((int(rng.integers(0, v)), v))
        extra = np.flatnonzero(rng.random(v) < edge_probability)
        edges.update((int(u), v) for u in extra)
    has_children = np.zeros(num_states, dtype=bool)
    for u, _ in edges:
        has_children[u] = True
    return StateGraph(state_records((~has_children).tolist()), sorted(edges), initial=0)


def build_split_dag(n: int, d: int) -> StateGraph:
    """
    Two-branch instance: s0 -> A (d leaves) and s0 -> B (the other n - d leaves)

    State ids: 0 = s0, 1 = A, 2 = B (only when d < n), then the leaves, A's first.
    """
    n, d = int(n), int(d)
    if not 1 <= d <= n:
        raise LabValidationError(f'split DAG needs 1 <= d <= n, got n={n}, d={d}')
    has_b = d < n
    first_leaf = 3 if has_b else 2
    edges = [(0, 1)] + [(1, first_leaf + i) for i in range(d)]
    if has_b:
        edges.append((0, 2))
        edges.extend((2, first_leaf + i) for i in range(d, n))
    flags = [False] * first_leaf + [True] * n
    return StateGraph(state_records(flags), edges, initial=0)


@dataclass
class GraphKind:
    """Parsed graph option: ``tree:g=2,h=3``, ``set:d=8,S=4``, ``file:path``, ``random:states=30,seed=1``, ``split:n=8,d=3``."""

    kind: str
    params: Dict[str, object] = field(default_factory=dict)

    @classmethod
    def parse(cls, text):
        kind, raw = parse_spec(text)
        if kind == 'tree':
            params = {'g': spec_value(raw, 'g', int, required=True), 'h': spec_value(raw, 'h', int, required=True)}
        elif kind == 'set':
            params = {'d': spec_value(raw, 'd', int, required=True), 'S': spec_value(raw, 'S', int, required=True)}
        elif kind in ('file', 'custom'):
            kind = 'file'
            params = {'path': spec_value(raw, 'path', str, required=True)}
        elif kind == 'random':
            params = {
                'states': spec_value(raw, 'states', int, required=True),
                'seed': spec_value(raw, 'seed', int, 0),
                'p': spec_value(raw, 'p', float, 0.2),
            }
        elif kind == 'split':
            params = {'n': spec_value(raw, 'n', int, required=True), 'd': spec_value(raw, 'd', int, required=True)}
        else:
            raise LabValidationError(f"unknown graph kind '{kind}' (tree, set, file, random, split)")
        reject_leftovers(kind, raw)
        return cls(kind, params)

    def build(self, capacity=None) -> StateGraph:
        p = self.params
        if self.kind == 'tree':
            return build_regular_tree(p['g'], p['h'], capacity)
        if self.kind == 'set':
            return build_set_graph(p['d'], p['S'], capacity)
        if self.kind == 'random':
            return build_random_dag(p['states'], p['seed'], p['p'], capacity)
        if self.kind == 'split':
            return build_split_dag(p['n'], p['d'])
        from .io import load_graph
        return load_graph(Path(p['path']), capacity=capacity)


def build_graph(text, capacity=None) -> StateGraph:
    return GraphKind.parse(text).build(capacity)
