"""
Chunk-by-chunk updates of a streaming model

Each update trains G_{t+1} against a frozen snapshot of G_t using only the
new chunk. The stream driver consumes chunks one at a time; it keeps the
exact running posterior (for traces and audits), never the chunks.
"""

import logging
from dataclasses import dataclass, field, replace
from typing import Iterable, List, Optional

import numpy as np

from flows.balance import balanced_policy
from flows.distances import total_variation
from flows.marginals import exact_marginal
from flows.policy import TabularPolicy
from flows.targets import TargetDistribution
from training.config import TB, LossKind, TrainConfig
from training.exceptions import TrainingDivergedError
from training.optim import Adam
from training.sampling import sample_batch
from training.trainer import train
from utils import CapacityError, LabValidationError

from .chunks import StreamChunk, posterior_target
from .config import BEHAVIOURS, EXPLORE, KL, SB, UpdateKind
from .objectives import kl_gamma, kl_stream_gradient_rloo, sb_loss_and_gradient, sb_residuals

logger = logging.getLogger(__name__)

STREAM_TRACE_HEADER = ('chunk', 'epoch', 'loss', 'tv')


@dataclass
class StreamState:
    policy: TabularPolicy
    reference: Optional[TabularPolicy]
    t: int
    update: UpdateKind


@dataclass
class StreamTraceRow:
    chunk: int
    epoch: int
    loss: float
    tv: Optional[float]

    def as_row(self):
        return (self.chunk, self.epoch, self.loss, self.tv)


@dataclass
class StreamRun:
    """
    Models G_0..G_T, the chunk log-likelihoods that produced them and the training trace

    ``logliks`` is an audit-only record: one per-terminal vector per chunk,
    which ``propagation_audit`` needs to rebuild every intermediate
    posterior. Updates never read it.
    """

    prior: TargetDistribution
    policies: List[TabularPolicy] = field(default_factory=list)
    logliks: List[np.ndarray] = field(default_factory=list)
    trace: List[StreamTraceRow] = field(default_factory=list)
    posterior: Optional[TargetDistribution] = None

    @property
    def final(self) -> TabularPolicy:
        return self.policies[-1]

    def final_tv(self, capacity=None) -> float:
        return total_variation(exact_marginal(self.final, capacity=capacity), self.posterior.probabilities)


def _tv(policy, posterior, capacity):
    if posterior is None:
        return None
    try:
        return total_variation(exact_marginal(policy, capacity=capacity), posterior.probabilities)
    except CapacityError:
        return None


def _diverged(policy, reference, chunk, batch, update, epoch):
    if update.name == KL:
        values = kl_gamma(policy, reference, chunk, batch)
    else:
        values = sb_residuals(policy, reference, chunk, batch)
    bad = np.flatnonzero(~np.isfinite(values))
    index = int(bad[0]) if len(bad) else int(np.argmax(np.abs(values)))
    logger.error(f'chunk {chunk.t}: non-finite loss at epoch {epoch}, trajectory {index}')
    return TrainingDivergedError(epoch, index, float(values[index]), batch.trajectory(index))


def stream_update(state: StreamState, chunk: StreamChunk, config: TrainConfig, behaviour=EXPLORE,
                  posterior: Optional[TargetDistribution] = None):
    """
    Train G_{t+1} from a warm copy of G_t against the frozen G_t

    SB batches come from the exploration mixture of the model being trained
    (``explore``) or of the frozen reference (``reference``). KL batches are
    always k on-policy trajectories and leave log Z untouched.

    Returns:
        tuple: (new StreamState, list of StreamTraceRow)
    """
    if behaviour not in BEHAVIOURS:
        raise LabValidationError(f"behaviour must be one of {', '.join(BEHAVIOURS)}")
    update = state.update
    reference = state.policy.frozen()
    policy = state.policy.copy()
    optimizer = Adam(policy.num_parameters)
    base_rates = policy.learning_rates(config.lr_logits, config.lr_log_z)
    if update.name == KL:
        base_rates[-1] = 0.0
    trace = []
    for epoch in range(config.epochs):
        if update.name == SB:
            sampler = policy if behaviour == EXPLORE else reference
            batch = sample_batch(sampler, config.batch, config.eta, config.seed, epoch, config.threads, stream=chunk.t)
            loss, grad = sb_loss_and_gradient(policy, reference, chunk, batch)
        else:
            batch = sample_batch(policy, update.k, 0.0, config.seed, epoch, config.threads, stream=chunk.t)
            loss, grad = kl_stream_gradient_rloo(policy, reference, chunk, batch, update.score)
        if not (np.isfinite(loss) and np.all(np.isfinite(grad))):
            raise _diverged(policy, reference, chunk, batch, update, epoch)
        rates = base_rates * config.learning_rate_scale(epoch)
        policy.set_parameter_vector(optimizer.step(policy.parameter_vector(), grad, rates))
        policy.clamp_()
        if config.traced(epoch):
            row = StreamTraceRow(chunk.t, epoch, loss, _tv(policy, posterior, config.capacity))
            trace.append(row)
            logger.info(f'chunk {chunk.t} epoch {epoch}: loss {loss:.6g}')
    return StreamState(policy, reference, state.t + 1, update), trace


def initial_model(prior: TargetDistribution, config: Optional[TrainConfig] = None) -> TabularPolicy:
    """G_0: the exact balanced policy for the prior, or a TB-trained one when ``config`` is given."""
    if config is None:
        return balanced_policy(prior.graph, prior)
    graph = prior.graph
    policy = TabularPolicy.uniform(graph, backward=config.backward, state_flows=False)
    return train(graph, prior, LossKind(TB), config, policy=policy).policy


def run_stream(prior: TargetDistribution, chunks: Iterable[StreamChunk], update: UpdateKind, config: TrainConfig,
               initial: Optional[TabularPolicy] = None, behaviour=EXPLORE) -> StreamRun:
    """Feed ``chunks`` through ``stream_update`` in order, starting from ``initial`` (default: exact G_0)."""
    policy = initial if initial is not None else initial_model(prior)
    run = StreamRun(prior, policies=[policy], posterior=prior)
    state = StreamState(policy, None, 0, update)
    for position, chunk in enumerate(chunks):
        run.posterior = posterior_target(run.posterior, [chunk])
        state, trace = stream_update(
            state, chunk, replace(config, seed=config.seed + position), behaviour, run.posterior,
        )
        run.policies.append(state.policy)
        run.logliks.append(chunk.loglik)
        run.trace.extend(trace)
    logger.info(f'streamed {len(run.logliks)} chunks with {update}')
    return run
