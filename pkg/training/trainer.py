"""
Training loop: sample, differentiate, step, trace
"""

import logging
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from diagnostics.fcs import fcs_from_marginals
from flows.distances import total_variation
from flows.marginals import exact_marginal
from flows.policy import TabularPolicy
from flows.targets import TargetDistribution
from graphs.state_graph import StateGraph
from utils import CapacityError

from .config import KL, LossKind, TrainConfig
from .exceptions import TrainingDivergedError
from .losses import kl_log_weights, loss_and_gradient, residual_losses
from .optim import Adam
from .sampling import sample_batch

logger = logging.getLogger(__name__)

TRACE_HEADER = ('epoch', 'loss', 'tv', 'fcs_mean')


@dataclass
class TraceRow:
    epoch: int
    loss: float
    tv: Optional[float]
    fcs_mean: Optional[float]

    def as_row(self):
        return (self.epoch, self.loss, self.tv, self.fcs_mean)


@dataclass
class TrainResult:
    policy: TabularPolicy
    trace: List[TraceRow] = field(default_factory=list)

    @property
    def final_loss(self) -> float:
        return self.trace[-1].loss

    @property
    def final_tv(self) -> Optional[float]:
        return self.trace[-1].tv


def initial_policy(graph: StateGraph, kind: LossKind, backward='uniform') -> TabularPolicy:
    """Zero logits, log Z = 0 and, for losses that need them, uniform-balance state flows."""
    return TabularPolicy.uniform(graph, backward=backward, state_flows=kind.needs_state_flows)


def evaluate(policy, target, config: TrainConfig, epoch):
    """(exact TV, FCS mean) or (None, None) when the graph is too large to enumerate."""
    try:
        p = exact_marginal(policy, capacity=config.capacity)
    except CapacityError:
        return None, None
    pi = target.probabilities
    tv = total_variation(p, pi)
    if len(pi) < max(config.fcs_subset, 2) or config.fcs_samples < 1:
        return tv, None
    report = fcs_from_marginals(p, pi, config.fcs_subset, config.fcs_samples, seed=config.seed * 7919 + epoch)
    return tv, report.mean


def _diverged(policy, target, batch, kind, epoch):
    if kind.name == KL:
        values = kl_log_weights(policy, target, batch)
    else:
        values = residual_losses(policy, target, batch, kind, epoch)
    bad = np.flatnonzero(~np.isfinite(values))
    index = int(bad[0]) if len(bad) else int(np.argmax(np.abs(values)))
    logger.error(f'non-finite loss at epoch {epoch}, trajectory {index}')
    return TrainingDivergedError(epoch, index, float(values[index]), batch.trajectory(index))


def train(graph: StateGraph, target: TargetDistribution, kind: LossKind, config: TrainConfig,
          policy: Optional[TabularPolicy] = None) -> TrainResult:
    """
    Optimise ``kind`` with Adam for ``config.epochs`` epochs

    KL batches are drawn from p_F itself; the exploration weight only
    applies to residual losses.

    Raises:
        TrainingDivergedError: the loss or its gradient stops being finite
    """
    if policy is None:
        policy = initial_policy(graph, kind, config.backward)
    kind.check_policy(policy)
    eta = config.eta
    if kind.name == KL and eta > 0:
        logger.warning('KL training samples on-policy; ignoring the exploration weight')
        eta = 0.0

    optimizer = Adam(policy.num_parameters)
    base_rates = policy.learning_rates(config.lr_logits, config.lr_log_z)
    result = TrainResult(policy)
    for epoch in range(config.epochs):
        batch = sample_batch(policy, config.batch, eta, config.seed, epoch, config.threads)
        loss, grad = loss_and_gradient(policy, target, batch, kind, epoch)
        if not (np.isfinite(loss) and np.all(np.isfinite(grad))):
            raise _diverged(policy, target, batch, kind, epoch)
        rates = base_rates * config.learning_rate_scale(epoch)
        policy.set_parameter_vector(optimizer.step(policy.parameter_vector(), grad, rates))
        policy.clamp_()
        if config.traced(epoch):
            tv, fcs_mean = evaluate(policy, target, config, epoch)
            result.trace.append(TraceRow(epoch, loss, tv, fcs_mean))
            logger.info(f'epoch {epoch}: loss {loss:.6g}' + ('' if tv is None else f', tv {tv:.6f}'))
    return result
