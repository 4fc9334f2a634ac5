"""
Graph-valued states and 1-WL colour refinement

All nodes carry the same feature, so refinement starts from a single
colour. Colours are refined jointly over a collection of states and
renumbered canonically each round (by sorted signature), which makes colour
ids comparable across states and across runs.
"""

import logging
from dataclasses import dataclass
from functools import cached_property
from typing import Dict, List, Sequence, Tuple

import networkx as nx
import numpy as np

from .exceptions import GraphStateError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class GraphState:
    """
    Undirected simple graph on nodes 0..num_nodes-1 with equal node features

    Args:
        num_nodes (int): Node count N
        edges (tuple): Pairs (i, j); stored sorted with i < j
    """

    num_nodes: int
    edges: Tuple[Tuple[int, int], ...] = ()

    def __post_init__(self):
        if self.num_nodes < 0:
            raise GraphStateError('node count must be nonnegative')
        normalised = set()
        for edge in self.edges:
            i, j = (int(node) for node in edge)
            if i == j:
                raise GraphStateError(f'self-loop on node {i}')
            if not (0 <= i < self.num_nodes and 0 <= j < self.num_nodes):
                raise GraphStateError(f'edge ({i}, {j}) leaves the {self.num_nodes} nodes')
            normalised.add((min(i, j), max(i, j)))
        object.__setattr__(self, 'edges', tuple(sorted(normalised)))

    @classmethod
    def empty(cls, num_nodes):
        return cls(num_nodes)

    @classmethod
    def cycle(cls, num_nodes):
        return cls.from_networkx(nx.cycle_graph(num_nodes))

    @classmethod
    def disjoint(cls, *states):
        return cls.from_networkx(nx.disjoint_union_all([state.to_networkx() for state in states]))

    @classmethod
    def from_networkx(cls, graph):
        graph = nx.convert_node_labels_to_integers(graph, ordering='sorted')
        return cls(graph.number_of_nodes(), tuple(graph.edges()))

    @classmethod
    def from_adjacency(cls, matrix):
        matrix = np.asarray(matrix)
        if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
            raise GraphStateError('adjacency must be a square matrix')
        if not np.isin(matrix, (0, 1)).all():
            raise GraphStateError('adjacency entries must be 0 or 1')
        if not np.array_equal(matrix, matrix.T):
            raise GraphStateError('adjacency must be symmetric')
        if np.any(np.diag(matrix)):
            raise GraphStateError('adjacency must have a zero diagonal')
        rows, cols = np.nonzero(np.triu(matrix))
        return cls(matrix.shape[0], tuple(zip(rows.tolist(), cols.tolist())))

    @property
    def adjacency(self) -> np.ndarray:
        matrix = np.zeros((self.num_nodes, self.num_nodes), dtype=np.int8)
        for i, j in self.edges:
            matrix[i, j] = matrix[j, i] = 1
        return matrix

    def to_networkx(self):
        graph = nx.Graph()
        graph.add_nodes_from(range(self.num_nodes))
        graph.add_edges_from(self.edges)
        return graph

    def with_node(self, neighbors=()) -> 'GraphState':
        """This graph plus one new node joined to ``neighbors``."""
        new = self.num_nodes
        return GraphState(new + 1, self.edges + tuple((int(v), new) for v in neighbors))

    def neighbor_lists(self) -> List[List[int]]:
        adjacency = self.to_networkx().adj
        return [sorted(adjacency[v]) for v in range(self.num_nodes)]

    def wl_hash(self, iterations=None) -> str:
        return nx.weisfeiler_lehman_graph_hash(self.to_networkx(), iterations=iterations or max(self.num_nodes, 1))

    def is_isomorphic(self, other: 'GraphState') -> bool:
        return nx.is_isomorphic(self.to_networkx(), other.to_networkx())

    def to_json(self):
        return {'nodes': self.num_nodes, 'edges': [list(edge) for edge in self.edges]}


@dataclass(frozen=True)
class WlPartition:
    """
    Stable 1-WL colours of a collection of states

    ``node_colors[i]`` holds the node colours of state i; ``state_colors[i]``
    is the rank of state i's sorted colour histogram among all distinct
    histograms, so two states share a colour iff their histograms are equal.
    """

    node_colors: Tuple[Tuple[int, ...], ...]
    rounds: int

    @cached_property
    def histograms(self) -> Tuple[Tuple[int, ...], ...]:
        return tuple(tuple(sorted(colors)) for colors in self.node_colors)

    @cached_property
    def state_colors(self) -> Tuple[int, ...]:
        palette = {histogram: rank for rank, histogram in enumerate(sorted(set(self.histograms)))}
        return tuple(palette[histogram] for histogram in self.histograms)

    def __len__(self):
        return len(self.node_colors)

    def same(self, i, j) -> bool:
        return self.state_colors[i] == self.state_colors[j]

    def classes(self) -> Dict[int, List[int]]:
        """Colour → member state indices, members in input order."""
        grouped: Dict[int, List[int]] = {}
        for index, color in enumerate(self.state_colors):
            grouped.setdefault(color, []).append(index)
        return grouped


def _num_colors(colors) -> int:
    return len({c for state in colors for c in state})


def refine(colors, neighbors):
    """One joint refinement round; new colours are ranks of (old colour, sorted neighbour colours)."""
    signatures = [
        [(state_colors[v], tuple(sorted(state_colors[u] for u in adjacent[v]))) for v in range(len(adjacent))]
        for state_colors, adjacent in zip(colors, neighbors)
    ]
    palette = {signature: rank for rank, signature in enumerate(sorted({s for state in signatures for s in state}))}
    return tuple(tuple(palette[s] for s in state) for state in signatures)


def wl_colors(states: Sequence[GraphState], rounds=None) -> WlPartition:
    """
    Refine jointly until the partition of nodes stops splitting

    Args:
        rounds (int | None): Upper bound on refinement rounds (default: total node count)
    """
    neighbors = [state.neighbor_lists() for state in states]
    colors = tuple(tuple(0 for _ in range(state.num_nodes)) for state in states)
    limit = sum(state.num_nodes for state in states) if rounds is None else int(rounds)
    performed = 0
    while performed < limit:
        refined = refine(colors, neighbors)
        split = _num_colors(refined) > _num_colors(colors)
        colors = refined
        if not split:
            break
        performed += 1
    logger.debug(f'1-WL on {len(states)} states stable after {performed} rounds, {_num_colors(colors)} colours')
    return WlPartition(colors, performed)


def is_stable(partition: WlPartition, states: Sequence[GraphState]) -> bool:
    """True when one more round leaves the node partition unchanged."""
    refined = refine(partition.node_colors, [state.neighbor_lists() for state in states])
    return _num_colors(refined) == _num_colors(partition.node_colors)
