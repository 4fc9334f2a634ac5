"""
Balance losses and their analytic gradients

Every residual loss is a weighted sum of sub-trajectory residuals

    L(τ) = Σ_{m<n} w_mn (log F(s_m) + Σ_{m<i≤n} log p_F - log p_B - log F(s_n))²

with log F(s0) = log Z and F(x) = π̃(x). TB puts all weight on (0, M), DB
on every (i-1, i), SubTB on λ^{n-m}, and TD3 on (i-1, i) with weights
γ_β(s_{i-1}) normalised per trajectory. Trajectories are processed in
groups of equal length with dense (B, M+1, M+1) residual tensors.
"""

import logging

import numpy as np

from flows.marginals import trajectory_log_probs
from flows.policy import TabularPolicy
from flows.targets import TargetDistribution
from flows.trajectories import TrajectoryBatch

from .config import DB, DOWNSTREAM, KL, SUBTB, TB, TD3, LossKind
from .exceptions import LossConfigurationError

logger = logging.getLogger(__name__)


def edge_gradients(policy: TabularPolicy, edges, forward_coef, backward_coef):
    """
    Chain rule through the per-state softmaxes

    ``forward_coef`` and ``backward_coef`` are the derivatives of the loss
    with respect to log p_F(e) and log p_B(e) for every traversed edge
    occurrence (flattened, padding already removed).

    Returns:
        tuple: (gradient over forward edges, gradient over backward logits or None)
    """
    graph = policy.graph
    edges = np.asarray(edges, dtype=np.int64)
    E, N = graph.num_edges, graph.num_states
    per_edge = np.bincount(edges, weights=forward_coef, minlength=E)
    per_source = np.bincount(graph.edge_source, weights=per_edge, minlength=N)
    forward = per_edge - per_source[graph.edge_source] * policy.forward_probs()
    backward = None
    if policy.backward_logits is not None:
        per_edge_b = np.bincount(edges, weights=backward_coef, minlength=E)
        per_target = np.bincount(graph.edge_target, weights=per_edge_b, minlength=N)
        backward = per_edge_b - per_target[graph.edge_target] * policy.backward_probs()
    return forward, backward


def td3_gamma(graph, kind: LossKind, epoch) -> np.ndarray:
    """γ_β(s) per state: (T - depth)^(2β) upstream, depth^(2β) downstream."""
    depth = graph.depths.astype(float)
    base = depth if kind.direction == DOWNSTREAM else graph.max_trajectory_length - depth
    return np.power(base ** 2, kind.beta(epoch))


def pair_weights(kind: LossKind, states, length, epoch, graph, warned=None) -> np.ndarray:
    """
    Weights w_mn for one group of trajectories of equal length M

    Returns:
        np.ndarray: (B, M+1, M+1), zero except on m < n
    """
    B = states.shape[0]
    M = int(length)
    weights = np.zeros((B, M + 1, M + 1))
    steps = np.arange(1, M + 1)
    if kind.name == TB:
        weights[:, 0, M] = 1.0
    elif kind.name == DB:
        weights[:, steps - 1, steps] = 1.0
    elif kind.name == SUBTB:
        m, n = np.triu_indices(M + 1, k=1)
        raw = kind.lam ** (n - m).astype(float)
        weights[:, m, n] = raw / raw.sum()
    elif kind.name == TD3:
        gamma = td3_gamma(graph, kind, epoch)[states[:, :M]]
        totals = gamma.sum(axis=1, keepdims=True)
        degenerate = totals[:, 0] <= 0
        if degenerate.any():
            if warned is None or not warned.get('td3'):
                logger.warning(f'TD3 weights sum to zero on {int(degenerate.sum())} trajectories; using uniform weights')
                if warned is not None:
                    warned['td3'] = True
            gamma[degenerate] = 1.0
            totals[degenerate] = M
        weights[:, steps - 1, steps] = gamma / totals
    else:
        raise LossConfigurationError(f'{kind.name} is not a residual loss')
    return weights


def _log_flows(policy, target, states, M):
    """log F at positions 0..M of each trajectory in the group."""
    graph = policy.graph
    values = np.empty(states.shape[:1] + (M + 1,))
    values[:, 0] = policy.log_Z
    values[:, M] = target.log_reward[graph.terminal_index[states[:, M]]]
    if M > 1:
        interior = states[:, 1:M]
        values[:, 1:M] = policy.log_state_flow[interior] if policy.log_state_flow is not None else 0.0
    return values


def residual_tensor(policy, target, states, edges, M, log_forward, log_backward):
    """R[b, m, n] = log F(s_m) + P_n - P_m - log F(s_n)."""
    log_flow = _log_flows(policy, target, states, M)
    prefix = np.zeros((states.shape[0], M + 1))
    prefix[:, 1:] = np.cumsum(log_forward[edges[:, :M]] - log_backward[edges[:, :M]], axis=1)
    return (
        log_flow[:, :, None] + prefix[:, None, :]
        - prefix[:, :, None] - log_flow[:, None, :]
    )


def residual_losses(policy: TabularPolicy, target: TargetDistribution, batch: TrajectoryBatch, kind: LossKind, epoch=0):
    """Per-trajectory loss values, in batch row order."""
    kind.check_policy(policy)
    log_forward = policy.log_forward_probs()
    log_backward = policy.log_backward_probs()
    losses = np.empty(len(batch))
    for M, rows in batch.by_length().items():
        states, edges = batch.states[rows], batch.edges[rows]
        R = residual_tensor(policy, target, states, edges, M, log_forward, log_backward)
        W = pair_weights(kind, states, M, epoch, policy.graph)
        losses[rows] = (W * R ** 2).sum(axis=(1, 2))
    return losses


def _residual_loss_and_gradient(policy, target, batch, kind, epoch):
    graph = policy.graph
    log_forward = policy.log_forward_probs()
    log_backward = policy.log_backward_probs()
    warned = {}
    total = 0.0
    occurrences, coefficients = [], []
    state_grad = np.zeros(graph.num_states)
    log_z_grad = 0.0

    for M, rows in batch.by_length().items():
        states, edges = batch.states[rows], batch.edges[rows]
        R = residual_tensor(policy, target, states, edges, M, log_forward, log_backward)
        W = pair_weights(kind, states, M, epoch, graph, warned)
        total += float((W * R ** 2).sum())
        G = 2.0 * W * R
        # dL/dlog F at each position: outgoing pairs minus incoming pairs
        flow_coef = G.sum(axis=2) - G.sum(axis=1)
        log_z_grad += float(flow_coef[:, 0].sum())
        if M > 1:
            np.add.at(state_grad, states[:, 1:M], flow_coef[:, 1:M])
        # C_i = Σ_{m ≤ i-1, n ≥ i} G[m, n]
        H = np.cumsum(G, axis=1)[:, :, ::-1].cumsum(axis=2)[:, :, ::-1]
        steps = np.arange(1, M + 1)
        C = H[:, steps - 1, steps]
        occurrences.append(edges[:, :M].ravel())
        coefficients.append(C.ravel())

    size = len(batch)
    edges = np.concatenate(occurrences)
    C = np.concatenate(coefficients)
    forward, backward = edge_gradients(policy, edges, C, -C)
    grad = policy.gradient_vector(
        forward=forward / size,
        backward=None if backward is None else backward / size,
        state_flow=state_grad / size if policy.log_state_flow is not None else None,
        log_Z=log_z_grad / size,
    )
    return total / size, grad


def kl_log_weights(policy, target, batch, log_forward=None, log_backward=None) -> np.ndarray:
    """f(τ) = log p_F(τ) - log p_B(τ|x) - log π̃(x) per trajectory."""
    forward, backward = trajectory_log_probs(policy, batch, log_forward, log_backward)
    terminals = batch.terminals
    return forward - backward - target.log_reward[policy.graph.terminal_index[terminals]]


def leave_one_out_advantages(values) -> np.ndarray:
    """v_i - mean_{j≠i} v_j."""
    values = np.asarray(values, dtype=float)
    k = len(values)
    if k < 2:
        raise LossConfigurationError('leave-one-out baselines need at least two samples')
    return values - (values.sum() - values) / (k - 1)


def _kl_loss_and_gradient(policy, target, batch):
    """
    Reverse KL(p_F || p_B π̃ / Z) up to log Z, with leave-one-out baselines

    The batch must be drawn from p_F itself.
    """
    f = kl_log_weights(policy, target, batch)
    advantages = leave_one_out_advantages(f)
    k = len(batch)
    valid = batch.edges >= 0
    edges = batch.edges[valid]
    forward_coef = np.broadcast_to(advantages[:, None], batch.edges.shape)[valid] / k
    backward_coef = np.full(len(edges), -1.0 / k)
    forward, backward = edge_gradients(policy, edges, forward_coef, backward_coef)
    return float(f.mean()), policy.gradient_vector(forward=forward, backward=backward)


def loss_and_gradient(policy: TabularPolicy, target: TargetDistribution, batch: TrajectoryBatch, kind: LossKind, epoch=0):
    """
    Mean loss over the batch and its gradient over the flat parameter vector

    Raises:
        LossConfigurationError: the policy lacks parameters the loss needs
    """
    if len(batch) == 0:
        raise LossConfigurationError('empty trajectory batch')
    kind.check_policy(policy)
    if kind.name == KL:
        return _kl_loss_and_gradient(policy, target, batch)
    return _residual_loss_and_gradient(policy, target, batch, kind, epoch)
