"""
Tabular GFlowNet parameterisation

Forward logits live on edges (softmax over the children of the edge's
source), backward logits likewise over the parents of the edge's target.
Forward logits may be tied: ``forward_tie`` maps every edge to a slot of
``forward_params`` so several states can share one logit vector.
"""

import logging
from typing import Optional

import numpy as np

from graphs.state_graph import StateGraph
from utils import LabValidationError, lab_default

from .segments import segment_log_softmax

logger = logging.getLogger(__name__)

BACKWARD_UNIFORM = 'uniform'
BACKWARD_LEARNED = 'learned'


def logit_clamp():
    return float(lab_default('logit_clamp', 30.0))


class TabularPolicy:
    """
    Forward/backward policies, state log-flows and log Z for one state graph

    Args:
        graph (StateGraph): The state graph
        forward_params (array | None): Logit slots (defaults to zeros, one per edge)
        forward_tie (array | None): Slot index per edge (identity when None)
        backward_logits (array | None): One logit per edge; None keeps the backward policy uniform
        log_state_flow (array | None): log F per state; None for policies without state flows
        log_Z (float): log of the total flow at the initial state
    """

    def __init__(
        self,
        graph: StateGraph,
        forward_params=None,
        forward_tie=None,
        backward_logits=None,
        log_state_flow=None,
        log_Z: float = 0.0,
    ):
        self.graph = graph
        num_edges = graph.num_edges
        if forward_tie is None:
            forward_tie = np.arange(num_edges, dtype=np.int64)
        self.forward_tie = np.asarray(forward_tie, dtype=np.int64)
        if self.forward_tie.shape != (num_edges,):
            raise LabValidationError('forward tie map needs one slot per edge')
        num_slots = int(self.forward_tie.max()) + 1 if num_edges else 0
        if forward_params is None:
            forward_params = np.zeros(num_slots)
        self.forward_params = np.array(forward_params, dtype=float)
        if self.forward_params.shape != (num_slots,):
            raise LabValidationError(f'expected {num_slots} forward logit slots, got {self.forward_params.shape}')
        self.backward_logits = None if backward_logits is None else np.array(backward_logits, dtype=float)
        if self.backward_logits is not None and self.backward_logits.shape != (num_edges,):
            raise LabValidationError('backward logits need one entry per edge')
        self.log_state_flow = None if log_state_flow is None else np.array(log_state_flow, dtype=float)
        if self.log_state_flow is not None and self.log_state_flow.shape != (graph.num_states,):
            raise LabValidationError('state log-flows need one entry per state')
        self.log_Z = float(log_Z)

    @classmethod
    def uniform(cls, graph, backward=BACKWARD_UNIFORM, state_flows=True):
        """
        Zero logits, log Z = 0 and state flows at the uniform-balance values

        The state flow of s is the fraction of the uniform target mass that
        passes through s when the backward policy is uniform.
        """
        if backward not in (BACKWARD_UNIFORM, BACKWARD_LEARNED):
            raise LabValidationError(f"backward mode must be '{BACKWARD_UNIFORM}' or '{BACKWARD_LEARNED}'")
        backward_logits = np.zeros(graph.num_edges) if backward == BACKWARD_LEARNED else None
        policy = cls(graph, backward_logits=backward_logits)
        if state_flows:
            from .balance import uniform_balance_log_flows
            policy.log_state_flow = uniform_balance_log_flows(graph)
        return policy

    # Structure

    @property
    def backward_mode(self) -> str:
        return BACKWARD_UNIFORM if self.backward_logits is None else BACKWARD_LEARNED

    @property
    def is_tied(self) -> bool:
        return len(self.forward_params) != self.graph.num_edges or not np.array_equal(
            self.forward_tie, np.arange(self.graph.num_edges)
        )

    @property
    def has_state_flows(self) -> bool:
        return self.log_state_flow is not None

    # Probabilities

    @property
    def forward_logits(self) -> np.ndarray:
        limit = logit_clamp()
        return np.clip(self.forward_params[self.forward_tie], -limit, limit)

    def log_forward_probs(self) -> np.ndarray:
        g = self.graph
        return segment_log_softmax(self.forward_logits, g.edge_source, g.num_states)

    def forward_probs(self) -> np.ndarray:
        return np.exp(self.log_forward_probs())

    def log_backward_probs(self) -> np.ndarray:
        g = self.graph
        if self.backward_logits is None:
            return -np.log(g.in_degree[g.edge_target].astype(float))
        limit = logit_clamp()
        return segment_log_softmax(np.clip(self.backward_logits, -limit, limit), g.edge_target, g.num_states)

    def backward_probs(self) -> np.ndarray:
        return np.exp(self.log_backward_probs())

    def child_probs(self, v) -> np.ndarray:
        """p_F(v, ·) over ``graph.children(v)`` in child order."""
        v = self.graph.check_state(v)
        start, stop = self.graph.forward_ptr[v], self.graph.forward_ptr[v + 1]
        return self.forward_probs()[start:stop]

    def log_flow_vector(self, target) -> np.ndarray:
        """log F(s) per state: log Z at s0, log π̃ at terminals, learned values elsewhere (NaN if absent)."""
        g = self.graph
        if self.log_state_flow is None:
            values = np.full(g.num_states, np.nan)
        else:
            values = self.log_state_flow.copy()
        values[list(g.terminal_ids)] = target.log_reward
        values[g.initial] = self.log_Z
        return values

    # Parameters

    def parameter_layout(self):
        """(name, slice) pairs of the flat parameter vector."""
        layout = []
        offset = 0
        for name, size in (
            ('forward_params', len(self.forward_params)),
            ('backward_logits', 0 if self.backward_logits is None else self.graph.num_edges),
            ('log_state_flow', 0 if self.log_state_flow is None else self.graph.num_states),
            ('log_Z', 1),
        ):
            layout.append((name, slice(offset, offset + size)))
            offset += size
        return layout

    @property
    def num_parameters(self) -> int:
        return self.parameter_layout()[-1][1].stop

    def parameter_vector(self) -> np.ndarray:
        parts = [self.forward_params]
        if self.backward_logits is not None:
            parts.append(self.backward_logits)
        if self.log_state_flow is not None:
            parts.append(self.log_state_flow)
        parts.append(np.array([self.log_Z]))
        return np.concatenate(parts)

    def set_parameter_vector(self, vector):
        vector = np.asarray(vector, dtype=float)
        if vector.shape != (self.num_parameters,):
            raise LabValidationError(f'expected {self.num_parameters} parameters, got {vector.shape}')
        for name, part in self.parameter_layout():
            if name == 'log_Z':
                self.log_Z = float(vector[part][0])
            elif part.stop > part.start:
                setattr(self, name, vector[part].copy())

    def gradient_vector(self, forward=None, backward=None, state_flow=None, log_Z=0.0) -> np.ndarray:
        """
        Assemble a flat gradient from per-edge and per-state pieces

        ``forward`` is a gradient over edges and is summed into the tied slots.
        """
        grad = np.zeros(self.num_parameters)
        for name, part in self.parameter_layout():
            if name == 'forward_params' and forward is not None:
                grad[part] = np.bincount(self.forward_tie, weights=forward, minlength=len(self.forward_params))
            elif name == 'backward_logits' and backward is not None and part.stop > part.start:
                grad[part] = backward
            elif name == 'log_state_flow' and state_flow is not None and part.stop > part.start:
                grad[part] = state_flow
            elif name == 'log_Z':
                grad[part] = log_Z
        return grad

    def learning_rates(self, lr_logits, lr_log_z) -> np.ndarray:
        rates = np.full(self.num_parameters, float(lr_logits))
        rates[-1] = float(lr_log_z)
        return rates

    def clamp_(self):
        limit = logit_clamp()
        np.clip(self.forward_params, -limit, limit, out=self.forward_params)
        if self.backward_logits is not None:
            np.clip(self.backward_logits, -limit, limit, out=self.backward_logits)
        return self

    def copy(self) -> 'TabularPolicy':
        return TabularPolicy(
            self.graph,
            forward_params=self.forward_params.copy(),
            forward_tie=self.forward_tie.copy(),
            backward_logits=None if self.backward_logits is None else self.backward_logits.copy(),
            log_state_flow=None if self.log_state_flow is None else self.log_state_flow.copy(),
            log_Z=self.log_Z,
        )

    def frozen(self) -> 'TabularPolicy':
        """Read-only snapshot used as a streaming reference."""
        snapshot = self.copy()
        for array in (snapshot.forward_params, snapshot.forward_tie, snapshot.backward_logits, snapshot.log_state_flow):
            if array is not None:
                array.setflags(write=False)
        return snapshot

    def untied(self) -> 'TabularPolicy':
        policy = self.copy()
        policy.forward_params = self.forward_params[self.forward_tie].copy()
        policy.forward_tie = np.arange(self.graph.num_edges, dtype=np.int64)
        return policy

    def with_forward_log_probs(self, log_probs) -> 'TabularPolicy':
        """Untied copy whose forward logits are the given per-edge log-probabilities."""
        policy = self.untied()
        limit = logit_clamp()
        policy.forward_params = np.clip(np.asarray(log_probs, dtype=float), -limit, limit)
        return policy

    def __repr__(self):
        tied = ', tied' if self.is_tied else ''
        return f'TabularPolicy({self.graph!r}, backward={self.backward_mode}{tied}, log_Z={self.log_Z:.6f})'


def random_policy(graph, rng, scale=1.0, backward=BACKWARD_UNIFORM, state_flows=True, log_z_scale=1.0) -> TabularPolicy:
    """Policy with logits and flows drawn uniformly from [-scale, scale]; used by gradient checks."""
    backward_logits = rng.uniform(-scale, scale, graph.num_edges) if backward == BACKWARD_LEARNED else None
    log_state_flow: Optional[np.ndarray] = rng.uniform(-scale, scale, graph.num_states) if state_flows else None
    return TabularPolicy(
        graph,
        forward_params=rng.uniform(-scale, scale, graph.num_edges),
        backward_logits=backward_logits,
        log_state_flow=log_state_flow,
        log_Z=float(rng.uniform(-log_z_scale, log_z_scale)),
    )
