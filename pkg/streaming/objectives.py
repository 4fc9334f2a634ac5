"""
Streaming objectives against a frozen reference model G_t

SB residual of a trajectory τ → x:

    r(τ) = log Z' + log p'_F(τ) - log p'_B(τ|x) - log Z - log p_F(τ) + log p_B(τ|x) - log f(x)

KL criterion: E_{τ~p'_F}[γ(τ)] with γ(τ) = log p'_F(τ) - log p_F(τ) - log f(x),
equal up to a constant to KL(p'_F || p) for p(τ) ∝ p_F(τ) f(x).
Primed quantities belong to the model being trained.
"""

import logging

import numpy as np
from scipy.special import logsumexp

from flows.marginals import log_state_mass, trajectory_log_probs
from flows.policy import TabularPolicy
from flows.trajectories import TrajectoryBatch, enumerate_trajectories
from training.losses import edge_gradients, leave_one_out_advantages
from utils import LabValidationError

from .chunks import StreamChunk

logger = logging.getLogger(__name__)

RLOO = 'rloo'
SCORE = 'score'


def _check_pair(model: TabularPolicy, reference: TabularPolicy, chunk: StreamChunk):
    if model.graph is not reference.graph and model.graph != reference.graph:
        raise LabValidationError('model and reference belong to different graphs')
    if len(chunk.loglik) != model.graph.num_terminals:
        raise LabValidationError(f'chunk {chunk.t} does not match the graph terminals')


def _chunk_loglik(model, chunk, batch):
    return chunk.loglik[model.graph.terminal_index[batch.terminals]]


def sb_residuals(model: TabularPolicy, reference: TabularPolicy, chunk: StreamChunk, batch: TrajectoryBatch):
    _check_pair(model, reference, chunk)
    forward, backward = trajectory_log_probs(model, batch)
    ref_forward, ref_backward = trajectory_log_probs(reference, batch)
    return (
        model.log_Z + forward - backward
        - reference.log_Z - ref_forward + ref_backward
        - _chunk_loglik(model, chunk, batch)
    )


def sb_loss_and_gradient(model, reference, chunk, batch):
    """Mean squared SB residual and its gradient over the model's flat parameters."""
    if len(batch) == 0:
        raise LabValidationError('empty trajectory batch')
    r = sb_residuals(model, reference, chunk, batch)
    valid = batch.edges >= 0
    coef = np.broadcast_to(2.0 * r[:, None], batch.edges.shape)[valid]
    forward, backward = edge_gradients(model, batch.edges[valid], coef, -coef)
    size = len(batch)
    grad = model.gradient_vector(
        forward=forward / size,
        backward=None if backward is None else backward / size,
        log_Z=float(2.0 * r.sum() / size),
    )
    return float(np.mean(r ** 2)), grad


def kl_gamma(model, reference, chunk, batch) -> np.ndarray:
    _check_pair(model, reference, chunk)
    forward, _ = trajectory_log_probs(model, batch)
    ref_forward, _ = trajectory_log_probs(reference, batch)
    return forward - ref_forward - _chunk_loglik(model, chunk, batch)


def _one_hot(index, size):
    matrix = np.zeros((len(index), size))
    matrix[np.arange(len(index)), index] = 1.0
    return matrix


def kl_gradient_rows(model, reference, chunk, batch, k, estimator=RLOO, include_score=False):
    """
    Independent forward-logit gradient estimates, one per group of k rows

    The batch is cut into consecutive groups of k on-policy trajectories.
    ``rloo`` centres each γ on the mean of the other k-1 samples; ``score``
    is the plain score-function estimator. With ``include_score`` the RLOO
    estimate also carries (1/k) Σ ∇ log p'_F(τ_i), which has zero mean.

    Returns:
        tuple: (γ as a (R, k) array, per-edge gradients as a (R, E) array)
    """
    k = int(k)
    if k < 2:
        raise LabValidationError(f'RLOO needs k >= 2 samples, got k={k}')
    if len(batch) % k:
        raise LabValidationError(f'batch of {len(batch)} trajectories is not a multiple of k={k}')
    graph = model.graph
    R = len(batch) // k
    gamma = kl_gamma(model, reference, chunk, batch).reshape(R, k)
    if estimator == RLOO:
        weights = np.vstack([leave_one_out_advantages(row) for row in gamma])
        if include_score:
            weights = weights + 1.0
    elif estimator == SCORE:
        weights = gamma.copy()
    else:
        raise LabValidationError(f"unknown estimator '{estimator}' ({RLOO}, {SCORE})")
    weights = weights.reshape(-1) / k

    valid = batch.edges >= 0
    rows = np.broadcast_to((np.arange(len(batch)) // k)[:, None], batch.edges.shape)[valid]
    per_edge = np.zeros((R, graph.num_edges))
    np.add.at(per_edge, (rows, batch.edges[valid]), np.broadcast_to(weights[:, None], batch.edges.shape)[valid])
    per_source = per_edge @ _one_hot(graph.edge_source, graph.num_states)
    grads = per_edge - per_source[:, graph.edge_source] * model.forward_probs()[None, :]
    return gamma, grads


def kl_stream_gradient_rloo(model, reference, chunk, batch, include_score=False):
    """
    RLOO estimate of ∇ E_{τ~p'_F}[γ(τ)] from one on-policy batch

    log Z is not trained by this criterion; its gradient entry is 0.

    Returns:
        tuple: (mean γ over the batch, flat gradient)
    """
    gamma, grads = kl_gradient_rows(model, reference, chunk, batch, len(batch), RLOO, include_score)
    return float(gamma.mean()), model.gradient_vector(forward=grads[0])


def exact_kl_gradient(model, reference, chunk, limit=None) -> np.ndarray:
    """Per-edge ∇ E_{p'_F}[γ] = Σ_τ p'_F(τ) γ(τ) ∇ log p'_F(τ) by enumeration."""
    graph = model.graph
    batch = TrajectoryBatch.from_trajectories(graph, enumerate_trajectories(graph, limit))
    gamma = kl_gamma(model, reference, chunk, batch)
    forward, _ = trajectory_log_probs(model, batch)
    valid = batch.edges >= 0
    coef = np.broadcast_to((np.exp(forward) * gamma)[:, None], batch.edges.shape)[valid]
    grad, _ = edge_gradients(model, batch.edges[valid], coef, np.zeros(len(coef)))
    return grad


def trajectory_kl(model: TabularPolicy, reference: TabularPolicy, chunk: StreamChunk) -> float:
    """
    KL(p'_F || p) with p(τ) = p_F(τ) f(x) / E_{p_⊤}[f], by dynamic programming

    Uses state-visit probabilities of the model, so no trajectory is enumerated.
    """
    _check_pair(model, reference, chunk)
    graph = model.graph
    log_mass = log_state_mass(model)
    log_q = model.log_forward_probs()
    log_p = reference.log_forward_probs()
    edge_term = float(np.dot(np.exp(log_mass[graph.edge_source] + log_q), log_q - log_p))
    terminals = list(graph.terminal_ids)
    q_top = np.exp(log_mass[terminals])
    log_norm = float(logsumexp(log_state_mass(reference)[terminals] + chunk.loglik))
    return max(0.0, edge_term - float(np.dot(q_top, chunk.loglik)) + log_norm)


def trajectory_kl_enumerated(model, reference, chunk, limit=None) -> float:
    """Same quantity as ``trajectory_kl``, summed over every complete trajectory."""
    graph = model.graph
    batch = TrajectoryBatch.from_trajectories(graph, enumerate_trajectories(graph, limit))
    log_q, _ = trajectory_log_probs(model, batch)
    log_p = trajectory_log_probs(reference, batch)[0] + _chunk_loglik(model, chunk, batch)
    log_p = log_p - logsumexp(log_p)
    return float(np.dot(np.exp(log_q), log_q - log_p))
