"""
Flow consistency in sub-graphs (FCS)

For a subset S of terminals, e(S) is the TV between the model and target
distributions conditioned on S. The mean of e over random subsets is zero
exactly when the model is correct, and Hoeffding gives a PAC upper bound
on its expectation from m sampled subsets.
"""

import itertools
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from flows.marginals import exact_marginal, importance_marginal
from flows.policy import TabularPolicy
from flows.targets import TargetDistribution
from utils import LabError, LabValidationError, check_capacity, lab_default, rng_stream

logger = logging.getLogger(__name__)

EXACT = 'exact'
IMPORTANCE = 'importance'


def pac_bound(mean, m, confidence) -> float:
    """mean + sqrt(log(1/η) / (2m))."""
    if not 0 < confidence < 1:
        raise LabValidationError(f'confidence level must lie in (0, 1), got {confidence}')
    if int(m) < 1:
        raise LabValidationError('the PAC bound needs at least one sampled subset')
    return float(mean + math.sqrt(math.log(1.0 / confidence) / (2.0 * int(m))))


@dataclass
class FCSReport:
    subset_size: int
    samples: int
    errors: np.ndarray
    confidence: float
    mode: str = EXACT
    subsets: List[Tuple[int, ...]] = field(default_factory=list)
    importance_samples: Optional[int] = None
    estimator_stderr: Optional[float] = None

    @property
    def mean(self) -> float:
        return float(np.mean(self.errors))

    @property
    def pac_bound(self) -> float:
        return pac_bound(self.mean, self.samples, self.confidence)

    def to_document(self) -> dict:
        document = {
            'subset_size': self.subset_size,
            'samples': self.samples,
            'confidence': self.confidence,
            'mode': self.mode,
            'errors': [float(e) for e in self.errors],
            'mean': self.mean,
            'pac_bound': self.pac_bound,
            'subsets': [list(s) for s in self.subsets],
        }
        if self.mode == IMPORTANCE:
            document['importance_samples'] = self.importance_samples
            document['estimator_stderr'] = self.estimator_stderr
        return document


def subset_error(p, pi, positions) -> float:
    """e(S) = ½ Σ_{x∈S} |p(x)/p(S) - π(x)/π(S)| for terminal positions S."""
    positions = np.asarray(positions, dtype=np.int64)
    p_sub = np.asarray(p, dtype=float)[positions]
    pi_sub = np.asarray(pi, dtype=float)[positions]
    if p_sub.sum() <= 0 or pi_sub.sum() <= 0:
        raise LabError('a sampled subset carries no probability mass')
    return float(0.5 * np.abs(p_sub / p_sub.sum() - pi_sub / pi_sub.sum()).sum())


def _check_subset_size(B, n):
    if not 2 <= int(B) <= n:
        raise LabValidationError(f'subset size must satisfy 2 <= B <= n={n}, got B={B}')


def sample_subsets(n, B, m, seed=0) -> List[np.ndarray]:
    """m subsets of size B, i.i.d. across draws, each uniform without replacement."""
    _check_subset_size(B, n)
    if int(m) < 1:
        raise LabValidationError('need at least one subset')
    return [np.sort(rng_stream(seed, i).choice(n, size=int(B), replace=False)) for i in range(int(m))]


def fcs_from_marginals(p, pi, B, m, seed=0, confidence=0.05, threads=1) -> FCSReport:
    """FCS of a model marginal ``p`` against ``pi`` (both in terminal order)."""
    p = np.asarray(p, dtype=float)
    subsets = sample_subsets(len(p), B, m, seed)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=int(threads)) as pool:
            errors = list(pool.map(lambda s: subset_error(p, pi, s), subsets))
    else:
        errors = [subset_error(p, pi, s) for s in subsets]
    return FCSReport(int(B), int(m), np.array(errors), confidence, subsets=[tuple(int(i) for i in s) for s in subsets])


def fcs(policy: TabularPolicy, target: TargetDistribution, B, m, seed=0, mode=EXACT, k=None,
        confidence=0.05, threads=1, capacity=None) -> FCSReport:
    """
    FCS report for a policy

    In ``importance`` mode only the terminals of the sampled subsets are
    estimated, each from k backward trajectories; the report carries the
    largest estimator stderr. Subsets are reported as terminal ids.
    """
    graph = policy.graph
    n = graph.num_terminals
    if mode == EXACT:
        report = fcs_from_marginals(
            exact_marginal(policy, capacity=capacity), target.probabilities, B, m, seed, confidence, threads,
        )
    elif mode == IMPORTANCE:
        k = int(k or lab_default('importance_samples', 1000))
        subsets = sample_subsets(n, B, m, seed)
        needed = sorted({int(i) for s in subsets for i in s})
        estimates = {}
        for position in needed:
            estimates[position] = importance_marginal(policy, graph.terminal_ids[position], k, seed)
        p = np.zeros(n)
        for position, estimate in estimates.items():
            p[position] = estimate.estimate
        errors = np.array([subset_error(p, target.probabilities, s) for s in subsets])
        report = FCSReport(
            int(B), int(m), errors, confidence, IMPORTANCE,
            subsets=[tuple(int(i) for i in s) for s in subsets],
            importance_samples=k,
            estimator_stderr=max(e.stderr for e in estimates.values()),
        )
    else:
        raise LabValidationError(f"unknown marginal mode '{mode}' ({EXACT}, {IMPORTANCE})")
    report.subsets = [tuple(graph.terminal_ids[i] for i in s) for s in report.subsets]
    logger.info(f'FCS over {m} subsets of size {B}: mean {report.mean:.6f}, PAC bound {report.pac_bound:.6f}')
    return report


def fcs_exhaustive(p, pi, B, capacity=None) -> float:
    """Mean of e(S) over every size-B subset."""
    n = len(p)
    _check_subset_size(B, n)
    check_capacity('exhaustive FCS subsets', math.comb(n, int(B)), capacity)
    errors = [subset_error(p, pi, subset) for subset in itertools.combinations(range(n), int(B))]
    return float(np.mean(errors))


def pac_coverage(p, pi, B, m, confidence=0.05, trials=500, seed=0) -> float:
    """
    Fraction of independent samplings whose PAC bound covers the exhaustive FCS mean
    """
    truth = fcs_exhaustive(p, pi, B)
    covered = 0
    for trial in range(int(trials)):
        report = fcs_from_marginals(p, pi, B, m, seed=int(seed) * 1_000_003 + trial, confidence=confidence)
        covered += int(truth <= report.pac_bound)
    return covered / int(trials)
