"""
Popular quality metrics that a tempered model can fool

Expected reward and log-log correlation both score p ∝ π̃^α as good or
perfect for α > 1, which is why they are reported next to TV and FCS.
"""

import logging
from dataclasses import dataclass

import numpy as np
from scipy import stats

from flows.distances import total_variation
from flows.marginals import exact_marginal
from flows.policy import TabularPolicy
from flows.targets import TargetDistribution

logger = logging.getLogger(__name__)


@dataclass
class PitfallReport:
    expected_reward_model: float
    expected_reward_target: float
    correlation: float
    accuracy: float
    tv: float

    def to_document(self) -> dict:
        return {
            'expected_reward_model': self.expected_reward_model,
            'expected_reward_target': self.expected_reward_target,
            'correlation': None if np.isnan(self.correlation) else self.correlation,
            'accuracy': self.accuracy,
            'tv': self.tv,
        }


def log_log_correlation(p, pi) -> float:
    """Pearson correlation of log p against log π; NaN when either side is constant."""
    log_p = np.log(np.asarray(p, dtype=float))
    log_pi = np.log(np.asarray(pi, dtype=float))
    if np.ptp(log_p) == 0 or np.ptp(log_pi) == 0 or not np.all(np.isfinite(log_p)):
        logger.warning('log-log correlation is undefined for a constant or zero-mass distribution')
        return float('nan')
    return float(stats.pearsonr(log_p, log_pi)[0])


def pitfalls_from_marginals(p, target: TargetDistribution) -> PitfallReport:
    """
    Expected reward, correlation and accuracy min(E_p[π̃] / E_π[π̃], 1)

    Rewards are normalised to π so the metrics do not depend on the
    scale of π̃.
    """
    p = np.asarray(p, dtype=float)
    pi = target.probabilities
    model = float(np.dot(p, pi))
    reference = float(np.dot(pi, pi))
    if np.ptp(pi) == 0:
        logger.warning('uniform target: every model has accuracy 1')
    return PitfallReport(
        expected_reward_model=model,
        expected_reward_target=reference,
        correlation=log_log_correlation(p, pi),
        accuracy=min(model / reference, 1.0),
        tv=total_variation(p, pi),
    )


def pitfall_metrics(policy: TabularPolicy, target: TargetDistribution, capacity=None) -> PitfallReport:
    return pitfalls_from_marginals(exact_marginal(policy, capacity=capacity), target)
