"""
Distances between distributions on the terminal set
"""

import numpy as np

from utils import LabValidationError


def _pair(p, q):
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if p.shape != q.shape or p.ndim != 1:
        raise LabValidationError(f'distributions must be vectors of equal length, got {p.shape} and {q.shape}')
    return p, q


def total_variation(p, q) -> float:
    """½ Σ |p - q|."""
    p, q = _pair(p, q)
    return float(0.5 * np.abs(p - q).sum())


def delta_ls(p, q, weight) -> float:
    """
    Weighted log-squared distance (E_{x~ξ}[(log p(x) - log q(x))²])^{1/2}

    ``weight`` is normalised to sum to one; p and q must be strictly positive.
    """
    p, q = _pair(p, q)
    weight = np.asarray(weight, dtype=float)
    if weight.shape != p.shape or np.any(weight < 0) or weight.sum() <= 0:
        raise LabValidationError('weight must be a nonnegative vector of the same length with positive mass')
    if np.any(p <= 0) or np.any(q <= 0):
        raise LabValidationError('log-squared distance needs strictly positive entries')
    weight = weight / weight.sum()
    return float(np.sqrt(np.dot(weight, (np.log(p) - np.log(q)) ** 2)))


def log_delta_ls(log_p, log_q, weight) -> float:
    """Same as ``delta_ls`` with inputs already in log space."""
    log_p, log_q = _pair(log_p, log_q)
    weight = np.asarray(weight, dtype=float)
    weight = weight / weight.sum()
    return float(np.sqrt(np.dot(weight, (log_p - log_q) ** 2)))
