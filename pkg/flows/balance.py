"""
Edge flows, their conversion to and from policies, and balance residuals

Convention: F(u, v) = F_N(u) · p_F(u, v) = F_N(v) · p_B(v, u), with F_N the
out-flow of a nonterminal and the reward π̃(x) at a terminal.
"""

import logging
from dataclasses import dataclass

import numpy as np

from graphs.state_graph import StateGraph
from utils import LabValidationError

from .policy import TabularPolicy, logit_clamp
from .segments import segment_logsumexp
from .targets import TargetDistribution, uniform_target

logger = logging.getLogger(__name__)


@dataclass
class FlowAssignment:
    """Nonnegative flow on every edge, stored as log F(u, v)."""

    graph: StateGraph
    log_edge_flow: np.ndarray

    def __post_init__(self):
        self.log_edge_flow = np.asarray(self.log_edge_flow, dtype=float)
        if self.log_edge_flow.shape != (self.graph.num_edges,):
            raise LabValidationError('flow needs one value per edge')
        if np.any(np.isnan(self.log_edge_flow)) or np.any(self.log_edge_flow == np.inf):
            raise LabValidationError('edge flows must be finite and nonnegative')

    @classmethod
    def from_edge_flows(cls, graph, edge_flow):
        edge_flow = np.asarray(edge_flow, dtype=float)
        if edge_flow.shape != (graph.num_edges,) or np.any(edge_flow < 0) or not np.all(np.isfinite(edge_flow)):
            raise LabValidationError('edge flows must be finite and nonnegative, one per edge')
        with np.errstate(divide='ignore'):
            return cls(graph, np.log(edge_flow))

    @property
    def edge_flow(self) -> np.ndarray:
        return np.exp(self.log_edge_flow)

    def flow(self, u, v) -> float:
        return float(self.edge_flow[self.graph.edge_id(u, v)])

    def log_out_flow(self) -> np.ndarray:
        return segment_logsumexp(self.log_edge_flow, self.graph.edge_source, self.graph.num_states)

    def log_in_flow(self) -> np.ndarray:
        return segment_logsumexp(self.log_edge_flow, self.graph.edge_target, self.graph.num_states)

    def out_flow(self) -> np.ndarray:
        return np.bincount(self.graph.edge_source, weights=self.edge_flow, minlength=self.graph.num_states)

    def in_flow(self) -> np.ndarray:
        return np.bincount(self.graph.edge_target, weights=self.edge_flow, minlength=self.graph.num_states)

    def node_flow(self) -> np.ndarray:
        """F_N: out-flow for nonterminals, in-flow for terminals."""
        flows = self.out_flow()
        terminals = list(self.graph.terminal_ids)
        flows[terminals] = self.in_flow()[terminals]
        return flows

    @property
    def total_flow(self) -> float:
        return float(self.out_flow()[self.graph.initial])

    def terminal_flows(self) -> np.ndarray:
        return self.in_flow()[list(self.graph.terminal_ids)]

    def imbalance(self) -> np.ndarray:
        """in-flow minus out-flow at every interior state (zero at s0 and terminals)."""
        gap = self.in_flow() - self.out_flow()
        gap[self.graph.initial] = 0.0
        gap[list(self.graph.terminal_ids)] = 0.0
        return gap

    def is_balanced(self, tolerance=1e-10) -> bool:
        scale = max(self.total_flow, 1.0)
        return bool(np.all(np.abs(self.imbalance()) <= tolerance * scale))

    def scaled(self, total) -> 'FlowAssignment':
        if total <= 0:
            raise LabValidationError('total flow must be positive')
        shift = np.log(total) - np.log(self.total_flow)
        return FlowAssignment(self.graph, self.log_edge_flow + shift)


def flow_from_policy(policy: TabularPolicy, target: TargetDistribution, total=None) -> FlowAssignment:
    """
    Balanced flow with terminal flows π̃(x), routed backward by p_B

    F(u, v) = F_N(v) · p_B(v, u); node flows are accumulated from the deepest
    layer up. ``total`` rescales so that F(s0) equals it.
    """
    graph = policy.graph
    log_backward = policy.log_backward_probs()
    log_node = np.full(graph.num_states, -np.inf)
    log_node[list(graph.terminal_ids)] = target.log_reward
    log_edge = np.empty(graph.num_edges)
    for group in graph.edges_by_target_layer:
        log_edge[group] = log_node[graph.edge_target[group]] + log_backward[group]
        np.logaddexp.at(log_node, graph.edge_source[group], log_edge[group])
    flow = FlowAssignment(graph, log_edge)
    if total is not None:
        flow = flow.scaled(total)
    return flow


def policy_from_flow(flow: FlowAssignment, learn_backward=False) -> TabularPolicy:
    """
    Policy induced by a flow: p_F(u, v) = F(u, v) / F_N(u)

    Raises:
        LabValidationError: a nonterminal carries no out-flow
    """
    graph = flow.graph
    log_out = flow.log_out_flow()
    nonterminal = graph.terminal_index < 0
    dead = np.flatnonzero(nonterminal & ~np.isfinite(log_out))
    if len(dead):
        raise LabValidationError(f'state {int(dead[0])} has zero out-flow; forward policy undefined')
    limit = logit_clamp()
    log_forward = np.clip(flow.log_edge_flow - log_out[graph.edge_source], -limit, limit)
    backward_logits = None
    if learn_backward:
        log_in = flow.log_in_flow()
        backward_logits = np.clip(flow.log_edge_flow - log_in[graph.edge_target], -limit, limit)
    log_state_flow = np.where(nonterminal, log_out, flow.log_in_flow())
    return TabularPolicy(
        graph,
        forward_params=log_forward,
        backward_logits=backward_logits,
        log_state_flow=log_state_flow,
        log_Z=float(log_out[graph.initial]),
    )


def balanced_policy(graph: StateGraph, target: TargetDistribution, backward='uniform') -> TabularPolicy:
    """The exact solution for ``target`` under a uniform (or given) backward policy."""
    reference = TabularPolicy.uniform(graph, backward=backward, state_flows=False)
    policy = policy_from_flow(flow_from_policy(reference, target))
    if backward != 'uniform':
        policy.backward_logits = reference.backward_logits.copy()
    return policy


def uniform_balance_log_flows(graph: StateGraph) -> np.ndarray:
    """log F_N under a uniform backward policy and uniform target of total mass 1."""
    reference = TabularPolicy(graph)
    target = uniform_target(graph)
    flow = flow_from_policy(reference, target, total=1.0)
    return np.where(graph.terminal_index < 0, flow.log_out_flow(), flow.log_in_flow())


def segment_residual(policy: TabularPolicy, target: TargetDistribution, trajectory, m, n) -> float:
    """
    L_{m,n}(τ) = (log F(s_m) Π p_F − log F(s_n) Π p_B)² over steps m+1..n

    Boundary values: log F(s0) = log Z, F(x) = π̃(x).
    """
    graph = policy.graph
    M = trajectory.length
    if not 0 <= m < n <= M:
        raise LabValidationError(f'segment ({m}, {n}) outside 0 <= m < n <= {M}')
    log_flow = policy.log_flow_vector(target)
    states = trajectory.states
    for s in (states[m], states[n]):
        if np.isnan(log_flow[s]):
            raise LabValidationError(f'policy has no state flow for interior state {s}')
    edges = trajectory.edge_ids(graph)[m:n]
    residual = (
        log_flow[states[m]] + policy.log_forward_probs()[edges].sum()
        - log_flow[states[n]] - policy.log_backward_probs()[edges].sum()
    )
    return float(residual ** 2)


def log_terminal_expectation(policy: TabularPolicy, log_weights) -> np.ndarray:
    """
    log h(s) = log E[w(x) | trajectory passes s] under p_F, for every state

    ``log_weights`` is indexed by terminal position.
    """
    graph = policy.graph
    log_forward = policy.log_forward_probs()
    log_h = np.full(graph.num_states, -np.inf)
    log_h[list(graph.terminal_ids)] = np.asarray(log_weights, dtype=float)
    for group in graph.edges_by_target_layer:
        np.logaddexp.at(log_h, graph.edge_source[group], log_h[graph.edge_target[group]] + log_forward[group])
    return log_h


def reweight_policy(policy: TabularPolicy, log_weights) -> TabularPolicy:
    """
    Policy whose trajectory law is proportional to p_F(τ) · w(x)

    p'_F(u, v) = p_F(u, v) h(v) / h(u) and log Z' = log Z + log h(s0), which
    satisfies Z' p'_F(τ) = Z p_F(τ) w(x) for every trajectory. The result
    is untied; backward logits and state flows are carried over.
    """
    graph = policy.graph
    log_h = log_terminal_expectation(policy, log_weights)
    log_forward = policy.log_forward_probs() + log_h[graph.edge_target] - log_h[graph.edge_source]
    updated = policy.with_forward_log_probs(log_forward)
    updated.log_Z = policy.log_Z + float(log_h[graph.initial])
    return updated
