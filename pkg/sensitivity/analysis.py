"""
One imbalance experiment: the measured TV next to every bound that applies
"""

import logging
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from utils import LabValidationError

from .bounds import (
    BoundReport, dag_bounds, imbalance_envelope, kmode_bounds, main_text_dag_upper, tree_bounds,
)
from .dirichlet import DirichletEstimate, dirichlet_expected_tv_closed, dirichlet_expected_tv_mc
from .imbalance import DIRICHLET, ImbalanceModel, SplitRule

logger = logging.getLogger(__name__)


@dataclass
class SensitivityResult:
    tv: float
    reports: List[BoundReport] = field(default_factory=list)
    estimate: Optional[DirichletEstimate] = None

    @property
    def primary(self) -> BoundReport:
        """Tightest asserted report: tree, then appendix DAG, then K-mode envelope, then envelope."""
        order = ('tree', 'dag_appendix', 'kmode_envelope', 'envelope')
        by_name = {report.bound_name: report for report in self.reports}
        for name in order:
            if name in by_name:
                return by_name[name]
        return self.reports[0]

    @property
    def all_asserted_contained(self) -> bool:
        return all(report.contained for report in self.reports if report.asserted)

    def rows(self):
        return [report.as_row() for report in self.reports]


def is_uniform(pi) -> bool:
    return bool(np.allclose(pi, 1.0 / len(pi), rtol=0, atol=1e-15))


def bound_reports(model: ImbalanceModel, edge, delta, value, tree_shape=None) -> List[BoundReport]:
    """
    Reports for every bound family that applies to this graph and target

    Args:
        tree_shape (tuple | None): (g, h) when the graph is a regular tree
    """
    n = model.graph.num_terminals
    positions = model.positions(edge)
    d = len(positions)
    F = model.F
    common = {'F': F, 'delta': delta, 'n': n, 'd': d}
    reports = []

    envelope = imbalance_envelope(model.pi, positions, F, delta)
    reports.append(BoundReport('envelope', envelope.lower, value, envelope.upper, dict(common)))

    uniform = is_uniform(model.pi)
    if uniform and tree_shape is not None:
        g, h = tree_shape
        lower, upper = tree_bounds(g, h, F, delta)
        reports.append(BoundReport('tree', lower, value, upper, dict(common, g=g, h=h)))
    if uniform and d < n:
        lower, upper = dag_bounds(n, d, F, delta)
        reports.append(BoundReport('dag_appendix', lower, value, upper, dict(common)))
        reports.append(BoundReport(
            'dag_main_text', lower, value, main_text_dag_upper(n, F, delta), dict(common), asserted=False,
        ))

    modes = getattr(model.target, 'modes', None)
    if modes is not None and d < n:
        K = len(modes)
        R = float(model.pi[model.graph.terminal_index[modes[0]]] * n)
        below = set(model.descendants(edge))
        b = sum(1 for x in modes if x in below)
        parameters = dict(common, K=K, R=R, b=b)
        try:
            lower, upper = kmode_bounds(n, K, R, d, b, F, delta)
        except LabValidationError as exc:
            logger.warning(f'K-mode forms not applicable: {exc}')
        else:
            reports.append(BoundReport('kmode_stated', lower, value, upper, parameters, asserted=False))
            reports.append(BoundReport('kmode_envelope', envelope.lower, value, envelope.upper, parameters))
    return reports


def run_sensitivity(model: ImbalanceModel, edge, delta, split: SplitRule, reps=None, seed=0, threads=1,
                    tree_shape=None, capacity=None) -> SensitivityResult:
    """
    Exact TV for one split, or the Monte Carlo mean over Dirichlet splits when ``reps`` is given
    """
    if reps and split.kind != DIRICHLET:
        raise LabValidationError('--reps only applies to the dirichlet split rule')
    if not reps:
        shares = model.shares(edge, split)
        value = model.tv(edge, delta, shares)
        return SensitivityResult(value, bound_reports(model, edge, delta, value, tree_shape))

    d = len(model.positions(edge))
    alpha = split.alpha_vector(d)
    estimate = dirichlet_expected_tv_mc(model, edge, delta, alpha, reps, seed=seed, threads=threads, capacity=capacity)
    reports = bound_reports(model, edge, delta, estimate.mean, tree_shape)
    n = model.graph.num_terminals
    if is_uniform(model.pi) and split.is_symmetric:
        closed = dirichlet_expected_tv_closed(n, d, alpha, model.F, delta)
        low = estimate.mean - 3 * estimate.stderr
        high = estimate.mean + 3 * estimate.stderr
        parameters = {'alpha': float(alpha[0]), 'n': n, 'd': d, 'reps': estimate.replications}
        for name in ('exact', 'draft', 'corollary'):
            value = getattr(closed, name)
            if value is None:
                continue
            deviation = value - estimate.mean
            logger.info(f'Dirichlet closed form ({name}) deviates from the Monte Carlo mean by {deviation:.3g}')
            reports.append(BoundReport(f'dirichlet_{name}', low, value, high, dict(parameters), asserted=False))
    else:
        logger.warning('Dirichlet closed form skipped: it needs a uniform target and a symmetric concentration')
    reports.append(BoundReport(
        'dirichlet_per_replication', estimate.bounds.lower, estimate.minimum, estimate.bounds.upper,
        {'within': estimate.within_bounds, 'reps': estimate.replications, 'maximum': estimate.maximum},
        asserted=True,
    ))
    if not estimate.all_within_bounds:
        reports[-1].value = estimate.maximum if estimate.maximum > estimate.bounds.upper else estimate.minimum
    return SensitivityResult(estimate.mean, reports, estimate)
