"""
Coverage of the state space by a sampling policy

N_v is the number of distinct states visited by M sampled trajectories.
Each trajectory holds at most K states, so E[N_v] <= max(MK, 1) and Markov
gives P[N_v >= s|S|] <= min(1, max(MK, 1) / (s|S|)).
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np

from flows.policy import TabularPolicy
from graphs.state_graph import StateGraph
from training.sampling import sample_batch
from utils import LabValidationError

logger = logging.getLogger(__name__)

COVERAGE_HEADER = ('s', 'empirical', 'bound', 'vacuous', 'within_noise')
DEFAULT_GRID = (0.05, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.8, 1.0)


@dataclass
class CoveragePoint:
    s: float
    empirical: float
    bound: float
    vacuous: bool
    within_noise: bool

    def as_row(self):
        return (self.s, self.empirical, self.bound, self.vacuous, self.within_noise)


@dataclass
class CoverageReport:
    num_states: int
    trajectories: int
    state_cap: int
    trials: int
    visited: np.ndarray
    points: List[CoveragePoint] = field(default_factory=list)

    @property
    def mean_visited(self) -> float:
        return float(np.mean(self.visited))

    @property
    def all_within_bound(self) -> bool:
        return all(point.within_noise for point in self.points)

    def rows(self):
        return [point.as_row() for point in self.points]


def markov_bound(M, K, s, num_states) -> float:
    if s <= 0:
        raise LabValidationError('coverage fractions must be positive')
    return min(1.0, max(M * K, 1) / (s * num_states))


def visited_states(policy: TabularPolicy, M, seed, trial, eta=0.0) -> int:
    """Distinct states touched by M trajectories; s0 counts even when M = 0."""
    if M == 0:
        return 1
    batch = sample_batch(policy, M, eta=eta, seed=seed, epoch=trial)
    return int(np.unique(batch.states[batch.states >= 0]).size)


def exploration_coverage(graph: StateGraph, M, trials=1000, seed=0, grid: Sequence[float] = DEFAULT_GRID,
                         K: Optional[int] = None, policy: Optional[TabularPolicy] = None, threads=1) -> CoverageReport:
    """
    Empirical P[N_v >= s|S|] over ``trials`` independent runs, against the Markov bound

    The sampling policy defaults to uniform children at every state.
    Points are flagged ``vacuous`` where the bound is 1 and
    ``within_noise`` where the empirical rate stays under the bound plus
    three binomial standard errors.
    """
    M, trials = int(M), int(trials)
    if M < 0:
        raise LabValidationError('trajectory count must be nonnegative')
    if trials < 100:
        raise LabValidationError(f'coverage needs at least 100 trials, got {trials}')
    if policy is None:
        policy = TabularPolicy(graph)
    K = int(K) if K is not None else graph.max_trajectory_length + 1
    if K < graph.max_trajectory_length + 1:
        raise LabValidationError(f'state cap K={K} is below the longest trajectory ({graph.max_trajectory_length + 1} states)')
    size = graph.num_states

    def run(trial):
        return visited_states(policy, M, seed, trial)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=int(threads)) as pool:
            visited = np.array(list(pool.map(run, range(trials))))
    else:
        visited = np.array([run(trial) for trial in range(trials)])

    report = CoverageReport(size, M, K, trials, visited)
    for s in grid:
        bound = markov_bound(M, K, s, size)
        empirical = float(np.mean(visited >= math.ceil(s * size - 1e-9)))
        noise = 3.0 * math.sqrt(bound * (1.0 - bound) / trials)
        report.points.append(CoveragePoint(float(s), empirical, bound, bound >= 1.0, empirical <= bound + noise))
    logger.info(f'{M} trajectories over {trials} trials visit {report.mean_visited:.2f} of {size} states on average')
    return report
