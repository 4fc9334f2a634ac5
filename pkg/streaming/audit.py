"""
Error propagation across streaming updates, evaluated exactly

For a step t → t+1 with f = f(D_{t+1} | ·), prior reward π̃ and
Z*_k = Σ_x π̃(x) Π_{i≤k} f_i(x), three bounds are checked:

ls_bound
    δ_LS(p_{t+1}, π_{t+1}) ≤ δ_LS(p_{t+1}, p̂) + |log Ẑ/Z*_{t+1}|
                              + δ_LS(p_t, π_t) + |log Z_t/Z*_t|
tv_likelihood_bound
    TV(p_{t+1}, π_{t+1}) ≤ TV(p_{t+1}, p̂)
                           + ½ f(x̂) Σ_x |Z_t/Ẑ p_t(x) - Z*_t/Z*_{t+1} π_t(x)|
tv_kl_bound
    TV(p_{t+1}, π_{t+1}) ≤ √(KL(p'_F || p) / 2) + TV(p̂, π_{t+1})

with p̂ ∝ p_t f the exact update of the previous marginal, Ẑ = Z_t E_{p_t}[f]
and every δ_LS weighted by π_{t+1}. The ``stated`` columns carry the
variants with the trained Z_{t+1} in place of Ẑ and ½√KL in place of
√(KL/2); those are reported, not asserted.
"""

import logging
from dataclasses import dataclass, field
from typing import List, Sequence

import numpy as np
from scipy.special import logsumexp

from flows.distances import log_delta_ls, total_variation
from flows.marginals import log_exact_marginal
from flows.policy import TabularPolicy
from flows.targets import TargetDistribution
from utils import LabValidationError

from .chunks import StreamChunk
from .objectives import trajectory_kl

logger = logging.getLogger(__name__)

AUDIT_TOLERANCE = 1e-9
AUDIT_HEADER = ('step', 'bound', 'lhs', 'estimation', 'accuracy', 'rhs', 'holds', 'stated_rhs', 'stated_holds')

LS_BOUND = 'ls_bound'
TV_LIKELIHOOD_BOUND = 'tv_likelihood_bound'
TV_KL_BOUND = 'tv_kl_bound'


@dataclass
class AuditRow:
    step: int
    bound: str
    lhs: float
    estimation: float
    accuracy: float
    stated_rhs: float

    @property
    def rhs(self) -> float:
        return self.estimation + self.accuracy

    @property
    def holds(self) -> bool:
        return self.lhs <= self.rhs + AUDIT_TOLERANCE

    @property
    def stated_holds(self) -> bool:
        return self.lhs <= self.stated_rhs + AUDIT_TOLERANCE

    def as_row(self):
        return (self.step, self.bound, self.lhs, self.estimation, self.accuracy, self.rhs, self.holds,
                self.stated_rhs, self.stated_holds)


@dataclass
class AuditReport:
    rows: List[AuditRow] = field(default_factory=list)

    @property
    def all_hold(self) -> bool:
        return all(row.holds for row in self.rows)

    def by_bound(self, bound) -> List[AuditRow]:
        return [row for row in self.rows if row.bound == bound]

    def table(self):
        return [row.as_row() for row in self.rows]


def audit_step(step, previous: TabularPolicy, current: TabularPolicy, log_prior, history_loglik, loglik,
               capacity=None) -> List[AuditRow]:
    """
    Rows for the update that produced ``current`` from ``previous``

    Args:
        log_prior: log π̃ in terminal order
        history_loglik: Σ of the log-likelihoods of the chunks before this one
        loglik: log f of this step's chunk
    """
    log_p_prev = log_exact_marginal(previous, capacity)
    log_p_next = log_exact_marginal(current, capacity)
    log_tilde_prev = log_prior + history_loglik
    log_z_star_prev = float(logsumexp(log_tilde_prev))
    log_z_star_next = float(logsumexp(log_tilde_prev + loglik))
    log_pi_prev = log_tilde_prev - log_z_star_prev
    log_pi_next = log_tilde_prev + loglik - log_z_star_next
    pi_next = np.exp(log_pi_next)

    log_mean_f = float(logsumexp(log_p_prev + loglik))
    log_z_hat = previous.log_Z + log_mean_f
    log_p_hat = log_p_prev + loglik - log_mean_f

    lhs_ls = log_delta_ls(log_p_next, log_pi_next, pi_next)
    estimation_ls = log_delta_ls(log_p_next, log_p_hat, pi_next) + abs(log_z_hat - log_z_star_next)
    accuracy_ls = log_delta_ls(log_p_prev, log_pi_prev, pi_next) + abs(previous.log_Z - log_z_star_prev)
    rows = [AuditRow(step, LS_BOUND, lhs_ls, estimation_ls, accuracy_ls, estimation_ls + accuracy_ls)]

    p_next = np.exp(log_p_next)
    p_hat = np.exp(log_p_hat)
    lhs_tv = total_variation(p_next, pi_next)
    log_f_max = float(loglik.max())
    log_ratio_star = log_z_star_prev - log_z_star_next

    def likelihood_term(log_z_new):
        a = np.exp(log_f_max + previous.log_Z - log_z_new + log_p_prev)
        b = np.exp(log_f_max + log_ratio_star + log_pi_prev)
        return 0.5 * float(np.abs(a - b).sum())

    estimation_tv = total_variation(p_next, p_hat)
    rows.append(AuditRow(
        step, TV_LIKELIHOOD_BOUND, lhs_tv, estimation_tv, likelihood_term(log_z_hat),
        estimation_tv + likelihood_term(current.log_Z),
    ))

    kl = trajectory_kl(current, previous, StreamChunk(step, loglik))
    accuracy_kl = total_variation(p_hat, pi_next)
    rows.append(AuditRow(
        step, TV_KL_BOUND, lhs_tv, float(np.sqrt(kl / 2.0)), accuracy_kl, 0.5 * float(np.sqrt(kl)) + accuracy_kl,
    ))
    return rows


def propagation_audit(prior: TargetDistribution, policies: Sequence[TabularPolicy], logliks, capacity=None) -> AuditReport:
    """
    Audit every step of a stream

    ``policies`` holds G_0..G_T and ``logliks`` the T chunk log-likelihoods;
    G_0 is compared against the normalised prior.
    """
    if len(policies) != len(logliks) + 1:
        raise LabValidationError(f'{len(policies)} models need {len(policies) - 1} chunks, got {len(logliks)}')
    log_prior = np.asarray(prior.log_reward, dtype=float)
    history = np.zeros_like(log_prior)
    report = AuditReport()
    for step, loglik in enumerate(logliks, start=1):
        loglik = np.asarray(loglik, dtype=float)
        report.rows.extend(audit_step(step, policies[step - 1], policies[step], log_prior, history, loglik, capacity))
        history = history + loglik
    failed = [row for row in report.rows if not row.holds]
    if failed:
        logger.error(f'{len(failed)} propagation bound(s) violated, first at step {failed[0].step} ({failed[0].bound})')
    return report
