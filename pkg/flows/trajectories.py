"""
Complete trajectories s0 -> ... -> x and padded batches of them
"""

from dataclasses import dataclass
from typing import Dict, List, Sequence, Tuple

import numpy as np

from graphs.state_graph import StateGraph
from utils import LabValidationError, check_capacity


@dataclass(frozen=True)
class Trajectory:
    states: Tuple[int, ...]

    @property
    def length(self) -> int:
        """M, the number of transitions."""
        return len(self.states) - 1

    @property
    def terminal(self) -> int:
        return self.states[-1]

    def edge_ids(self, graph: StateGraph) -> np.ndarray:
        return np.array([graph.edge_id(u, v) for u, v in zip(self.states, self.states[1:])], dtype=np.int64)

    def validate(self, graph: StateGraph):
        if len(self.states) < 2:
            raise LabValidationError('a trajectory needs at least one transition')
        if self.states[0] != graph.initial:
            raise LabValidationError(f'trajectory starts at {self.states[0]}, not the initial state {graph.initial}')
        if not graph.is_terminal(self.states[-1]):
            raise LabValidationError(f'trajectory ends at non-terminal state {self.states[-1]}')
        self.edge_ids(graph)
        return self


@dataclass
class TrajectoryBatch:
    """
    Trajectories padded with -1 to a common length

    Attributes:
        states: (B, L+1) state ids
        edges: (B, L) edge ids
        lengths: (B,) transition counts
    """

    graph: StateGraph
    states: np.ndarray
    edges: np.ndarray
    lengths: np.ndarray

    def __len__(self):
        return len(self.lengths)

    @classmethod
    def from_trajectories(cls, graph, trajectories: Sequence[Trajectory]):
        if not trajectories:
            raise LabValidationError('empty trajectory batch')
        width = max(t.length for t in trajectories)
        states = np.full((len(trajectories), width + 1), -1, dtype=np.int64)
        edges = np.full((len(trajectories), width), -1, dtype=np.int64)
        lengths = np.empty(len(trajectories), dtype=np.int64)
        for row, trajectory in enumerate(trajectories):
            states[row, : trajectory.length + 1] = trajectory.states
            edges[row, : trajectory.length] = trajectory.edge_ids(graph)
            lengths[row] = trajectory.length
        return cls(graph, states, edges, lengths)

    @classmethod
    def concatenate(cls, graph, batches):
        width = max(batch.edges.shape[1] for batch in batches)
        states, edges = [], []
        for batch in batches:
            pad = width - batch.edges.shape[1]
            states.append(np.pad(batch.states, ((0, 0), (0, pad)), constant_values=-1))
            edges.append(np.pad(batch.edges, ((0, 0), (0, pad)), constant_values=-1))
        return cls(graph, np.vstack(states), np.vstack(edges), np.concatenate([b.lengths for b in batches]))

    def subset(self, rows):
        rows = np.asarray(rows)
        return TrajectoryBatch(self.graph, self.states[rows], self.edges[rows], self.lengths[rows])

    def trajectory(self, row) -> Trajectory:
        return Trajectory(tuple(int(s) for s in self.states[row, : self.lengths[row] + 1]))

    def trajectories(self) -> List[Trajectory]:
        return [self.trajectory(row) for row in range(len(self))]

    @property
    def terminals(self) -> np.ndarray:
        return self.states[np.arange(len(self)), self.lengths]

    def by_length(self) -> Dict[int, np.ndarray]:
        """Row indices grouped by trajectory length, in ascending row order."""
        return {int(m): np.flatnonzero(self.lengths == m) for m in np.unique(self.lengths)}


def count_trajectories(graph: StateGraph) -> int:
    paths = [0] * graph.num_states
    for v in reversed(graph.topological_order):
        paths[v] = 1 if graph.is_terminal(v) else sum(paths[c] for c in graph.children(v))
    return paths[graph.initial]


def enumerate_trajectories(graph: StateGraph, limit=None) -> List[Trajectory]:
    """All complete trajectories, depth-first in child order."""
    check_capacity('trajectory enumeration', count_trajectories(graph), limit)
    found = []
    stack = [(graph.initial,)]
    while stack:
        path = stack.pop()
        last = path[-1]
        if graph.is_terminal(last):
            found.append(Trajectory(path))
            continue
        for child in reversed(graph.children(last)):
            stack.append(path + (child,))
    return found
