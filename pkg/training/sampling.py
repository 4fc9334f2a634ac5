"""
Forward trajectory sampling with an exploration mixture

At every state the next child is drawn from (1 - η)·p_F + η·uniform(children).
Batches are cut into fixed chunks; chunk k of an epoch draws from the stream
(seed, epoch, k), so a batch does not depend on how many threads sample it.
"""

import logging
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from flows.policy import TabularPolicy
from flows.segments import SegmentSampler
from flows.trajectories import Trajectory, TrajectoryBatch
from utils import LabValidationError, rng_stream

logger = logging.getLogger(__name__)

CHUNK_SIZE = 16


def exploration_probs(policy: TabularPolicy, eta) -> np.ndarray:
    """Per-edge probabilities of the behaviour policy."""
    if not 0.0 <= eta < 1.0:
        raise LabValidationError(f'exploration weight eta must lie in [0, 1), got {eta}')
    graph = policy.graph
    probs = policy.forward_probs()
    if eta > 0:
        probs = (1.0 - eta) * probs + eta / graph.out_degree[graph.edge_source]
    return probs


def walk(graph, sampler: SegmentSampler, size, rng) -> TrajectoryBatch:
    """``size`` forward walks from s0, all advanced one step at a time."""
    width = graph.max_trajectory_length
    states = np.full((size, width + 1), -1, dtype=np.int64)
    edges = np.full((size, width), -1, dtype=np.int64)
    lengths = np.zeros(size, dtype=np.int64)
    current = np.full(size, graph.initial, dtype=np.int64)
    states[:, 0] = graph.initial
    active = graph.terminal_index[current] < 0
    step = 0
    while active.any():
        rows = np.flatnonzero(active)
        chosen = sampler.draw(current[rows], rng.random(len(rows)))
        current[rows] = graph.edge_target[chosen]
        edges[rows, step] = chosen
        states[rows, step + 1] = current[rows]
        lengths[rows] += 1
        step += 1
        active = graph.terminal_index[current] < 0
    longest = int(lengths.max())
    return TrajectoryBatch(graph, states[:, : longest + 1], edges[:, :longest], lengths)


def _sampler(policy, eta):
    graph = policy.graph
    return SegmentSampler(exploration_probs(policy, eta), np.arange(graph.num_edges), graph.forward_ptr)


def sample_trajectory(policy: TabularPolicy, eta, rng) -> Trajectory:
    """One complete trajectory from the exploration mixture."""
    return walk(policy.graph, _sampler(policy, eta), 1, rng).trajectory(0)


def sample_batch(policy: TabularPolicy, size, eta=0.0, seed=0, epoch=0, threads=1, stream=0) -> TrajectoryBatch:
    """
    ``size`` trajectories for one epoch

    Args:
        stream (int): Extra key separating independent consumers of the same seed
    """
    size = int(size)
    if size < 1:
        raise LabValidationError('batch size must be positive')
    graph = policy.graph
    sampler = _sampler(policy, eta)
    chunks = [(k, min(CHUNK_SIZE, size - start)) for k, start in enumerate(range(0, size, CHUNK_SIZE))]

    def run(chunk):
        k, count = chunk
        return walk(graph, sampler, count, rng_stream(seed, stream, epoch, k))

    if threads > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=int(threads)) as pool:
            parts = list(pool.map(run, chunks))
    else:
        parts = [run(chunk) for chunk in chunks]
    if len(parts) == 1:
        return parts[0]
    return TrajectoryBatch.concatenate(graph, parts)
