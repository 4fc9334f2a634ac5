"""
Policies whose forward logits are shared within 1-WL colour classes

A policy network that only sees stable 1-WL colours gives every state of a
colour class the same output. Tying the tabular logits per class emulates
such a network exactly. Children of a state are matched to logit slots in
a canonical order: by their own colour histogram, ties by edge order.
"""

import logging
from typing import Optional

import numpy as np

from flows.policy import BACKWARD_LEARNED, BACKWARD_UNIFORM, TabularPolicy
from graphs.state_graph import StateGraph

from .exceptions import GraphStateError, TyingError
from .wl import GraphState, WlPartition, wl_colors

logger = logging.getLogger(__name__)


def state_partition(graph: StateGraph, rounds=None) -> WlPartition:
    """Joint 1-WL colours of every state of ``graph``, indexed by state id."""
    labels = [graph.label(v) for v in range(graph.num_states)]
    bad = [v for v, label in enumerate(labels) if not isinstance(label, GraphState)]
    if bad:
        raise GraphStateError(f'states {bad[:10]} are not labelled with graphs')
    return wl_colors(labels, rounds)


def child_order(graph: StateGraph, partition: WlPartition, v):
    children = graph.children(v)
    return tuple(sorted(children, key=lambda child: (partition.histograms[child], children.index(child))))


def tie_map(graph: StateGraph, partition: WlPartition) -> np.ndarray:
    """
    Logit slot of every edge

    Edges leaving states of one colour class share slots by child rank.
    Slots are numbered by first use in edge order, so a partition with
    all-distinct colours yields the identity map.

    Raises:
        TyingError: two states of one class have different out-degrees
    """
    if len(partition) != graph.num_states:
        raise TyingError(None, f'partition covers {len(partition)} states, graph has {graph.num_states}')
    out_degree = graph.out_degree
    for color, members in partition.classes().items():
        degrees = sorted({int(out_degree[v]) for v in members})
        if len(degrees) > 1:
            raise TyingError(color, f'states {members[:10]} have out-degrees {degrees}')

    keys = [None] * graph.num_edges
    for v in range(graph.num_states):
        for rank, child in enumerate(child_order(graph, partition, v)):
            keys[graph.edge_id(v, child)] = (partition.state_colors[v], rank)
    slots = {}
    tie = np.array([slots.setdefault(key, len(slots)) for key in keys], dtype=np.int64)
    logger.debug(f'{graph.num_edges} edges tied into {len(slots)} logit slots')
    return tie


def tied_policy(graph: StateGraph, partition: Optional[WlPartition] = None, backward=BACKWARD_UNIFORM) -> TabularPolicy:
    """Zero-logit policy with one logit vector per colour class; no state flows."""
    if partition is None:
        partition = state_partition(graph)
    tie = tie_map(graph, partition)
    num_slots = int(tie.max()) + 1 if len(tie) else 0
    backward_logits = np.zeros(graph.num_edges) if backward == BACKWARD_LEARNED else None
    return TabularPolicy(graph, forward_params=np.zeros(num_slots), forward_tie=tie, backward_logits=backward_logits)
