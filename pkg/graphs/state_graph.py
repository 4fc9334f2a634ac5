"""
Immutable DAG of states with an initial state and declared terminals

State ids are dense integers ``0..N-1``. Edges are stored sorted by
``(source, target)``; arrays indexed by edge id follow that order so every
downstream computation (policies, flows, marginals) runs in O(|edges|).
"""

import heapq
import logging
from collections import deque
from dataclasses import dataclass
from functools import cached_property
from typing import Any, Iterable, Optional, Sequence, Tuple

import numpy as np

from .exceptions import GraphValidationError, UnknownStateError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class StateRecord:
    id: int
    terminal: bool
    label: Any = None


def jsonable_label(label):
    """Canonical JSON-compatible form of an opaque state label."""
    if label is None:
        return None
    if hasattr(label, 'to_json'):
        return label.to_json()
    if isinstance(label, (frozenset, set)):
        return sorted(jsonable_label(item) for item in label)
    if isinstance(label, (list, tuple)):
        return [jsonable_label(item) for item in label]
    if isinstance(label, dict):
        return {str(key): jsonable_label(value) for key, value in label.items()}
    if isinstance(label, np.integer):
        return int(label)
    if isinstance(label, np.floating):
        return float(label)
    return label


class StateGraph:
    """
    Enumerated state graph G = (S, A) with initial state and terminal set

    Args:
        states: State records; ids must be exactly ``0..N-1``
        edges: Iterable of ``(parent, child)`` pairs
        initial (int): Initial state id

    Raises:
        GraphValidationError: naming the violated invariant
    """

    def __init__(self, states: Iterable[StateRecord], edges: Iterable[Sequence[int]], initial: int = 0):
        records = sorted(states, key=lambda record: record.id)
        if not records:
            raise GraphValidationError('non-empty', 'graph has no states')
        if [record.id for record in records] != list(range(len(records))):
            raise GraphValidationError('dense-ids', 'state ids must be exactly 0..N-1')
        self._records: Tuple[StateRecord, ...] = tuple(records)
        num_states = len(records)

        if not isinstance(initial, (int, np.integer)) or not 0 <= initial < num_states:
            raise GraphValidationError('initial', f'initial state {initial!r} is not a state id')
        self.initial = int(initial)

        pairs = []
        for edge in edges:
            if len(edge) != 2:
                raise GraphValidationError('edge-shape', f'edge {list(edge)!r} is not a pair')
            u, v = int(edge[0]), int(edge[1])
            for endpoint in (u, v):
                if not 0 <= endpoint < num_states:
                    raise GraphValidationError('edge-endpoints', f'edge ({u}, {v}) references unknown state {endpoint}')
            if u == v:
                raise GraphValidationError('acyclic', f'self-loop on state {u}')
            pairs.append((u, v))
        pairs.sort()
        for first, second in zip(pairs, pairs[1:]):
            if first == second:
                raise GraphValidationError('simple', f'duplicate edge {first}')

        self.edge_source = np.array([u for u, _ in pairs], dtype=np.int64)
        self.edge_target = np.array([v for _, v in pairs], dtype=np.int64)
        self.edge_source.setflags(write=False)
        self.edge_target.setflags(write=False)
        self._edge_index = {pair: index for index, pair in enumerate(pairs)}

        children = [[] for _ in range(num_states)]
        parents = [[] for _ in range(num_states)]
        for u, v in pairs:
            children[u].append(v)
            parents[v].append(u)
        self._children = tuple(tuple(c) for c in children)
        self._parents = tuple(tuple(sorted(p)) for p in parents)

        ptr = np.zeros(num_states + 1, dtype=np.int64)
        np.cumsum([len(c) for c in children], out=ptr[1:])
        self.forward_ptr = ptr
        self.forward_ptr.setflags(write=False)

        self._validate()
        self.terminal_ids: Tuple[int, ...] = tuple(r.id for r in self._records if r.terminal)
        index = np.full(num_states, -1, dtype=np.int64)
        index[list(self.terminal_ids)] = np.arange(len(self.terminal_ids))
        self.terminal_index = index
        self.terminal_index.setflags(write=False)

    def _validate(self):
        initial = self.initial
        order = self._kahn_order()
        if len(order) != len(self._records):
            stuck = sorted(set(range(len(self._records))) - set(order))
            raise GraphValidationError('acyclic', f'cycle through states {stuck[:10]}')
        self._topological_order = tuple(order)

        if self._parents[initial]:
            raise GraphValidationError('initial-has-no-parents', f'initial state {initial} has parents {list(self._parents[initial])}')
        if not any(record.terminal for record in self._records):
            raise GraphValidationError('terminals', 'graph declares no terminal states')
        for record in self._records:
            if record.terminal and self._children[record.id]:
                raise GraphValidationError('terminal-childless', f'terminal state {record.id} has children')
            if not record.terminal and not self._children[record.id]:
                raise GraphValidationError('terminal-declaration', f'state {record.id} has no children but is not declared terminal')

        seen = np.zeros(len(self._records), dtype=bool)
        seen[initial] = True
        queue = deque([initial])
        while queue:
            u = queue.popleft()
            for v in self._children[u]:
                if not seen[v]:
                    seen[v] = True
                    queue.append(v)
        if not seen.all():
            missing = np.flatnonzero(~seen).tolist()
            raise GraphValidationError('reachable', f'states {missing[:10]} are unreachable from the initial state')

    def _kahn_order(self):
        indegree = [len(p) for p in self._parents]
        heap = [v for v, degree in enumerate(indegree) if degree == 0]
        heapq.heapify(heap)
        order = []
        while heap:
            u = heapq.heappop(heap)
            order.append(u)
            for v in self._children[u]:
                indegree[v] -= 1
                if indegree[v] == 0:
                    heapq.heappush(heap, v)
        return order

    # Sizes

    @property
    def num_states(self) -> int:
        return len(self._records)

    @property
    def num_edges(self) -> int:
        return len(self.edge_source)

    @property
    def num_terminals(self) -> int:
        return len(self.terminal_ids)

    @property
    def states(self) -> Tuple[StateRecord, ...]:
        return self._records

    @property
    def topological_order(self) -> Tuple[int, ...]:
        return self._topological_order

    # Queries

    def check_state(self, v) -> int:
        if isinstance(v, (bool, np.bool_)) or not isinstance(v, (int, np.integer)) or not 0 <= v < self.num_states:
            raise UnknownStateError(v)
        return int(v)

    def is_terminal(self, v) -> bool:
        return self._records[self.check_state(v)].terminal

    def label(self, v):
        return self._records[self.check_state(v)].label

    def children(self, v) -> Tuple[int, ...]:
        return self._children[self.check_state(v)]

    def parents(self, v) -> Tuple[int, ...]:
        return self._parents[self.check_state(v)]

    def edge_id(self, u, v) -> int:
        try:
            return self._edge_index[(int(u), int(v))]
        except KeyError:
            raise GraphValidationError('edge-exists', f'({u}, {v}) is not an edge')

    def edges(self):
        return list(zip(self.edge_source.tolist(), self.edge_target.tolist()))

    @cached_property
    def out_degree(self) -> np.ndarray:
        return np.diff(self.forward_ptr)

    @cached_property
    def in_degree(self) -> np.ndarray:
        return np.bincount(self.edge_target, minlength=self.num_states)

    @cached_property
    def _reach_masks(self):
        masks = [0] * self.num_states
        for v in reversed(self._topological_order):
            if self._records[v].terminal:
                masks[v] = 1 << int(self.terminal_index[v])
            else:
                mask = 0
                for child in self._children[v]:
                    mask |= masks[child]
                masks[v] = mask
        return masks

    def reachable_terminals(self, v) -> Tuple[int, ...]:
        """Terminals with a directed path from ``v`` (``{v}`` for a terminal)."""
        mask = self._reach_masks[self.check_state(v)]
        found = []
        position = 0
        while mask:
            if mask & 1:
                found.append(self.terminal_ids[position])
            mask >>= 1
            position += 1
        return tuple(found)

    def reachable_count(self, v) -> int:
        return bin(self._reach_masks[self.check_state(v)]).count('1')

    @cached_property
    def depths(self) -> np.ndarray:
        depth = np.full(self.num_states, -1, dtype=np.int64)
        depth[self.initial] = 0
        queue = deque([self.initial])
        while queue:
            u = queue.popleft()
            for v in self._children[u]:
                if depth[v] < 0:
                    depth[v] = depth[u] + 1
                    queue.append(v)
        depth.setflags(write=False)
        return depth

    def geodesic_depth(self, v) -> int:
        """Shortest directed path length from the initial state."""
        return int(self.depths[self.check_state(v)])

    @cached_property
    def layers(self) -> np.ndarray:
        """Longest-path depth of every state; parents always sit in earlier layers."""
        layer = np.zeros(self.num_states, dtype=np.int64)
        for u in self._topological_order:
            for v in self._children[u]:
                if layer[u] + 1 > layer[v]:
                    layer[v] = layer[u] + 1
        layer.setflags(write=False)
        return layer

    @staticmethod
    def _group_edges(keys, descending=False):
        if len(keys) == 0:
            return ()
        order = np.argsort(-keys if descending else keys, kind='stable')
        boundaries = np.flatnonzero(np.diff(keys[order])) + 1
        return tuple(np.split(order, boundaries))

    @cached_property
    def edges_by_source_layer(self):
        """Edge ids grouped by the layer of their source, shallow first."""
        return self._group_edges(self.layers[self.edge_source])

    @cached_property
    def edges_by_target_layer(self):
        """Edge ids grouped by the layer of their target, deep first."""
        return self._group_edges(self.layers[self.edge_target], descending=True)

    @cached_property
    def backward_order(self) -> np.ndarray:
        """Edge ids sorted by (target, source)."""
        order = np.lexsort((self.edge_source, self.edge_target))
        order.setflags(write=False)
        return order

    @cached_property
    def backward_ptr(self) -> np.ndarray:
        ptr = np.zeros(self.num_states + 1, dtype=np.int64)
        np.cumsum(self.in_degree, out=ptr[1:])
        ptr.setflags(write=False)
        return ptr

    @property
    def max_depth(self) -> int:
        return int(self.depths.max())

    @property
    def max_trajectory_length(self) -> int:
        """T, the number of transitions of the longest complete trajectory."""
        return int(self.layers.max())

    def is_tree(self) -> bool:
        return bool(np.all(self.in_degree[np.arange(self.num_states) != self.initial] == 1))

    # Canonical form

    def canonical(self) -> dict:
        return {
            'initial': self.initial,
            'states': [
                {'id': r.id, 'terminal': r.terminal, 'label': jsonable_label(r.label)}
                for r in self._records
            ],
            'edges': [[u, v] for u, v in self.edges()],
        }

    def __eq__(self, other):
        if not isinstance(other, StateGraph):
            return NotImplemented
        return self.canonical() == other.canonical()

    def __hash__(self):
        return hash((self.initial, self.num_states, tuple(self.edge_source.tolist()), tuple(self.edge_target.tolist())))

    def __repr__(self):
        return (f'StateGraph(states={self.num_states}, terminals={self.num_terminals}, '
                f'edges={self.num_edges}, T={self.max_trajectory_length})')


def state_records(terminal_flags: Sequence[bool], labels: Optional[Sequence[Any]] = None):
    labels = labels if labels is not None else [None] * len(terminal_flags)
    return [StateRecord(i, bool(flag), label) for i, (flag, label) in enumerate(zip(terminal_flags, labels))]
