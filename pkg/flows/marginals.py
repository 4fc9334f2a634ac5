"""
Terminal marginals of a forward policy: exact DP, brute force and importance sampling
"""

import logging
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from utils import LabValidationError, check_capacity, rng_stream

from .policy import TabularPolicy
from .segments import SegmentSampler
from .trajectories import enumerate_trajectories

logger = logging.getLogger(__name__)


def log_state_mass(policy: TabularPolicy, log_probs=None, start=None) -> np.ndarray:
    """
    log P(trajectory passes through s) for every state

    With ``start`` the walk begins at that state instead of s0, which gives
    log P(reach s | at start).

    Mass is pushed layer by layer (longest-path layers), so every state has
    its final mass before any of its out-edges is used.
    """
    graph = policy.graph
    if log_probs is None:
        log_probs = policy.log_forward_probs()
    log_mass = np.full(graph.num_states, -np.inf)
    log_mass[graph.initial if start is None else graph.check_state(start)] = 0.0
    for group in graph.edges_by_source_layer:
        np.logaddexp.at(log_mass, graph.edge_target[group], log_mass[graph.edge_source[group]] + log_probs[group])
    return log_mass


def log_exact_marginal(policy: TabularPolicy, capacity=None) -> np.ndarray:
    graph = policy.graph
    check_capacity('exact marginal states', graph.num_states, capacity)
    return log_state_mass(policy)[list(graph.terminal_ids)]


def exact_marginal(policy: TabularPolicy, graph=None, capacity=None) -> np.ndarray:
    """
    p_⊤(x) for every terminal, in ``graph.terminal_ids`` order

    Args:
        policy (TabularPolicy): Forward policy to evaluate
        graph (StateGraph | None): Must be the policy's graph when given
    """
    if graph is not None and graph is not policy.graph and graph != policy.graph:
        raise LabValidationError('policy belongs to a different graph')
    return np.exp(log_exact_marginal(policy, capacity))


def trajectory_log_probs(policy: TabularPolicy, batch, log_forward=None, log_backward=None):
    """(log p_F(τ), log p_B(τ | x)) for every row of a TrajectoryBatch."""
    if log_forward is None:
        log_forward = policy.log_forward_probs()
    if log_backward is None:
        log_backward = policy.log_backward_probs()
    valid = batch.edges >= 0
    safe = np.where(valid, batch.edges, 0)
    forward = np.where(valid, log_forward[safe], 0.0).sum(axis=1)
    backward = np.where(valid, log_backward[safe], 0.0).sum(axis=1)
    return forward, backward


def brute_force_marginal(policy: TabularPolicy, limit=None) -> np.ndarray:
    """Σ over enumerated trajectories of Π p_F; the reference for ``exact_marginal``."""
    graph = policy.graph
    log_forward = policy.log_forward_probs()
    per_terminal = [[] for _ in range(graph.num_terminals)]
    for trajectory in enumerate_trajectories(graph, limit):
        log_p = float(log_forward[trajectory.edge_ids(graph)].sum())
        per_terminal[graph.terminal_index[trajectory.terminal]].append(log_p)
    return np.exp(np.array([logsumexp(values) for values in per_terminal]))


@dataclass
class ImportanceEstimate:
    terminal: int
    estimate: float
    stderr: float
    samples: int


def importance_marginal(policy: TabularPolicy, x, k, seed=0) -> ImportanceEstimate:
    """
    Unbiased estimate of p_⊤(x) = E_{τ~p_B(·|x)}[p_F(τ) / p_B(τ|x)]

    Args:
        policy (TabularPolicy): Forward and backward policies
        x (int): Terminal id
        k (int): Number of backward trajectories (at least 2)
        seed (int): Seed for the backward walks

    Returns:
        ImportanceEstimate: mean ratio and its standard error
    """
    graph = policy.graph
    if int(k) < 2:
        raise LabValidationError('importance estimate needs k >= 2 samples')
    if not graph.is_terminal(x):
        raise LabValidationError(f'state {x} is not terminal')
    k = int(k)
    log_forward = policy.log_forward_probs()
    log_backward = policy.log_backward_probs()
    backward = np.exp(log_backward)
    in_mass = np.bincount(graph.edge_target, weights=backward, minlength=graph.num_states)
    sampler = SegmentSampler(backward, graph.backward_order, graph.backward_ptr)
    rng = rng_stream(seed, int(x))

    current = np.full(k, int(x), dtype=np.int64)
    log_ratio = np.zeros(k)
    active = current != graph.initial
    while active.any():
        rows = np.flatnonzero(active)
        states = current[rows]
        if np.any(in_mass[states] <= 0):
            dead = int(states[in_mass[states] <= 0][0])
            raise LabValidationError(f'backward dead-end at state {dead}: no parent has positive probability')
        edges = sampler.draw(states, rng.random(len(rows)))
        log_ratio[rows] += log_forward[edges] - log_backward[edges]
        current[rows] = graph.edge_source[edges]
        active = current != graph.initial

    ratios = np.exp(log_ratio)
    return ImportanceEstimate(
        terminal=int(x),
        estimate=float(ratios.mean()),
        stderr=float(ratios.std(ddof=1) / np.sqrt(k)),
        samples=k,
    )


def importance_marginals(policy: TabularPolicy, terminals, k, seed=0):
    """Estimates for several terminals; each terminal has its own stream."""
    return [importance_marginal(policy, x, k, seed) for x in terminals]
