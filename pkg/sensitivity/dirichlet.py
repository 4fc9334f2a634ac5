"""
Expected TV when the extra flow is split by a Dirichlet draw

Monte Carlo runs in fixed-size blocks, block k drawing from the stream
(seed, k), so the estimate does not depend on the thread count.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional

import numpy as np

from utils import LabValidationError, check_capacity, rng_stream

from .bounds import Interval, dag_bounds, imbalance_envelope
from .imbalance import ImbalanceModel
from .special import betainc

logger = logging.getLogger(__name__)

BLOCK_SIZE = 1000
MIN_REPLICATIONS = 100


@dataclass
class DirichletEstimate:
    mean: float
    stderr: float
    replications: int
    minimum: float
    maximum: float
    bounds: Interval
    within_bounds: int

    @property
    def all_within_bounds(self) -> bool:
        return self.within_bounds == self.replications


@dataclass
class DirichletClosedForm:
    """Expected TV under a symmetric Dirichlet split, three ways."""

    exact: float
    draft: Optional[float]
    corollary: Optional[float]
    lambda_exact: float
    lambda_draft: Optional[float]
    lambda_corollary: Optional[float]


def expected_tv_from_lambda(lam, n, d, F, delta) -> float:
    """(d(Λ - 1/n) + 1) δ / (2(F + δ))."""
    return (d * (lam - 1.0 / n) + 1.0) * delta / (2.0 * (F + delta))


def dirichlet_expected_tv_mc(model: ImbalanceModel, edge, delta, alpha, reps, seed=0, threads=1, capacity=None):
    """
    Monte Carlo mean and standard error of TV(μ_δ, π) over Dirichlet(α) splits

    Every replication is also checked against the bound interval: the
    appendix DAG bounds for a uniform target, the exact envelope otherwise.

    Args:
        model (ImbalanceModel): Balanced base network
        edge (tuple): Imbalanced edge (u, v)
        delta (float): Extra flow
        alpha (array): Concentration over the descendant leaves of v
        reps (int): Replications, at least 100
        seed (int): Seed of the block streams
        threads (int): Worker threads

    Returns:
        DirichletEstimate
    """
    reps = int(reps)
    if reps < MIN_REPLICATIONS:
        raise LabValidationError(f'Dirichlet Monte Carlo needs at least {MIN_REPLICATIONS} replications')
    positions = model.positions(edge)
    d = len(positions)
    if d == 0:
        raise LabValidationError(f'state {edge[1]} has no descendant leaves')
    alpha = np.asarray(alpha, dtype=float)
    if alpha.shape == ():
        alpha = np.full(d, float(alpha))
    if alpha.shape != (d,) or np.any(alpha <= 0):
        raise LabValidationError(f'Dirichlet concentration must be {d} positive values')
    check_capacity('Dirichlet Monte Carlo draws', reps * d, capacity)

    n = model.graph.num_terminals
    uniform = np.allclose(model.pi, 1.0 / n, rtol=0, atol=1e-15)
    if uniform and d < n:
        bounds = dag_bounds(n, d, model.F, delta)
    else:
        bounds = imbalance_envelope(model.pi, positions, model.F, delta)

    def block(k):
        size = min(BLOCK_SIZE, reps - k * BLOCK_SIZE)
        if d == 1:
            shares = np.ones((size, 1))
        else:
            shares = rng_stream(seed, k).dirichlet(alpha, size=size)
        return np.atleast_1d(model.tv(edge, delta, shares))

    num_blocks = -(-reps // BLOCK_SIZE)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=int(threads)) as pool:
            values = list(pool.map(block, range(num_blocks)))
    else:
        values = [block(k) for k in range(num_blocks)]
    values = np.concatenate(values)
    logger.info(f'Dirichlet Monte Carlo: {reps} replications in {num_blocks} blocks')

    inside = int(np.sum((values >= bounds.lower - 1e-9) & (values <= bounds.upper + 1e-9)))
    if inside < reps:
        logger.error(f'{reps - inside} Dirichlet replications fall outside [{bounds.lower}, {bounds.upper}]')
    stderr = float(values.std(ddof=1) / np.sqrt(reps)) if d > 1 else 0.0
    return DirichletEstimate(
        mean=float(np.mean(values)),
        stderr=stderr,
        replications=reps,
        minimum=float(values.min()),
        maximum=float(values.max()),
        bounds=bounds,
        within_bounds=inside,
    )


def dirichlet_expected_tv_closed(n, d, alpha, F, delta) -> DirichletClosedForm:
    """
    Expected TV for a uniform target and a symmetric Dirichlet(α) split

    Each share is marginally Beta(α, (d-1)α). The exact value uses
    Λ* = E|s - 1/n| = 2c I_c(a, b) - 2 a/(a+b) I_c(a+1, b) + a/(a+b) - c with
    c = 1/n. The draft value uses
    Λ = 2c I_c(a, b) - 2 I_c(a+1, b+1) + 1 - c, and for α = 1 the corollary
    polynomial (d - 1)(1/2 - 1/n + 1/n²) is returned as well.

    Raises:
        LabValidationError: asymmetric α, or n, d out of range
    """
    alpha = np.atleast_1d(np.asarray(alpha, dtype=float))
    if np.any(alpha <= 0):
        raise LabValidationError('Dirichlet concentration must be positive')
    if np.any(alpha != alpha[0]):
        raise LabValidationError('the closed form needs a symmetric Dirichlet concentration (all alpha equal)')
    if int(n) < 2 or not 1 <= int(d) <= int(n):
        raise LabValidationError(f'need n >= 2 and 1 <= d <= n, got n={n}, d={d}')
    if not F > 0 or not delta >= 0:
        raise LabValidationError('need F > 0 and delta >= 0')
    n, d, a = int(n), int(d), float(alpha[0])
    c = 1.0 / n

    if d == 1:
        lambda_exact = 1.0 - c
        lambda_draft = None
    else:
        b = (d - 1) * a
        mean = a / (a + b)
        lambda_exact = 2 * c * betainc(a, b, c) - 2 * mean * betainc(a + 1, b, c) + mean - c
        lambda_draft = 2 * c * betainc(a, b, c) - 2 * betainc(a + 1, b + 1, c) + 1 - c
    lambda_corollary = (d - 1) * (0.5 - c + c * c) if a == 1.0 else None

    def tv(lam):
        return None if lam is None else expected_tv_from_lambda(lam, n, d, F, delta)

    return DirichletClosedForm(
        exact=tv(lambda_exact),
        draft=tv(lambda_draft),
        corollary=tv(lambda_corollary),
        lambda_exact=lambda_exact,
        lambda_draft=lambda_draft,
        lambda_corollary=lambda_corollary,
    )
