"""
Bound containment sweeps over families of instances

Each sweep draws random splits per instance and counts how often the
asserted interval (and the informational one, where there is one) holds.
"""

import logging
from dataclasses import dataclass

import numpy as np

from flows.targets import kmodes_target, uniform_target
from graphs.builders import build_random_dag, build_regular_tree, build_split_dag
from utils import rng_stream

from .bounds import dag_bounds, imbalance_envelope, kmode_bounds, main_text_dag_upper, tree_bounds
from .imbalance import CONCENTRATED, EQUAL, PROPORTIONAL, ImbalanceModel, SplitRule

logger = logging.getLogger(__name__)


@dataclass
class SweepSummary:
    cases: int = 0
    asserted_contained: int = 0
    reported_contained: int = 0
    max_lower_gap: float = 0.0
    max_upper_gap: float = 0.0

    def add(self, asserted, reported=True):
        self.cases += 1
        self.asserted_contained += int(asserted)
        self.reported_contained += int(reported)

    @property
    def all_contained(self) -> bool:
        return self.asserted_contained == self.cases

    @property
    def reported_rate(self) -> float:
        return self.reported_contained / self.cases if self.cases else float('nan')


def _named_splits(model, edge):
    return [model.shares(edge, SplitRule(kind)) for kind in (EQUAL, CONCENTRATED, PROPORTIONAL)]


def tree_sweep(shapes, flows, deltas, splits=200, seed=0) -> SweepSummary:
    """
    Root-edge imbalances on g-ary trees with a uniform target

    ``max_lower_gap`` and ``max_upper_gap`` record how far the equal and
    concentrated splits land from ε(δ, g) and ε(δ, g^h).
    """
    summary = SweepSummary()
    for index, (g, h) in enumerate(shapes):
        graph = build_regular_tree(g, h)
        target = uniform_target(graph)
        edge = (graph.initial, graph.children(graph.initial)[0])
        rng = rng_stream(seed, index)
        d = graph.reachable_count(edge[1])
        random_shares = rng.dirichlet(np.ones(d), size=splits) if d > 1 else np.ones((splits, 1))
        for F in flows:
            model = ImbalanceModel(graph, target, F)
            for delta in deltas:
                interval = tree_bounds(g, h, F, delta)
                values = np.atleast_1d(model.tv(edge, delta, random_shares))
                for value in values:
                    summary.add(interval.contains(value))
                equal = model.tv(edge, delta, model.shares(edge, SplitRule(EQUAL)))
                concentrated = model.tv(edge, delta, model.shares(edge, SplitRule(CONCENTRATED)))
                summary.add(interval.contains(equal))
                summary.add(interval.contains(concentrated))
                summary.max_lower_gap = max(summary.max_lower_gap, abs(equal - interval.lower))
                summary.max_upper_gap = max(summary.max_upper_gap, abs(concentrated - interval.upper))
    logger.info(f'tree sweep: {summary.asserted_contained}/{summary.cases} contained')
    return summary


def dag_sweep(instances, max_states=40, seed=0) -> SweepSummary:
    """
    Random DAGs with a uniform target and one random imbalanced edge

    The appendix interval is asserted; the main-text upper form is counted
    in ``reported_contained``. Edges whose head reaches every terminal are
    skipped when drawing.
    """
    summary = SweepSummary()
    for index in range(int(instances)):
        rng = rng_stream(seed, index)
        graph = build_random_dag(int(rng.integers(6, max_states + 1)), seed=int(rng.integers(0, 2 ** 31)),
                                 edge_probability=float(rng.uniform(0.05, 0.4)))
        n = graph.num_terminals
        candidates = [(u, v) for u, v in graph.edges() if graph.reachable_count(v) < n]
        if n < 2 or not candidates:
            continue
        edge = candidates[int(rng.integers(len(candidates)))]
        d = graph.reachable_count(edge[1])
        F = float(rng.uniform(0.1, 10.0))
        delta = float(rng.uniform(0.0, 10.0))
        model = ImbalanceModel(graph, uniform_target(graph), F)
        shares = rng.dirichlet(np.ones(d)) if d > 1 else np.ones(1)
        value = model.tv(edge, delta, shares)
        lower, upper = dag_bounds(n, d, F, delta)
        main_upper = main_text_dag_upper(n, F, delta)
        summary.add(lower - 1e-9 <= value <= upper + 1e-9, lower - 1e-9 <= value <= main_upper + 1e-9)
    logger.info(
        f'DAG sweep: appendix bounds {summary.asserted_contained}/{summary.cases}, '
        f'main-text upper {summary.reported_contained}/{summary.cases}'
    )
    return summary


def kmode_grid(sizes, modes=(1, 2, 3), ratios=(1.5, 2.0, 3.0)):
    """Admissible (n, K, R, d, b) with 1 < R, K*R < n, 1 <= d <= n-1, K-b <= n-d."""
    for n in sizes:
        for K in modes:
            for R in ratios:
                if not (1 < R < n and K * R < n and K < n):
                    continue
                for d in range(1, n):
                    for b in range(max(0, K - (n - d)), min(K, d) + 1):
                        yield n, K, R, d, b


def kmode_sweep(sizes, F=1.0, delta=0.5, splits=20, seed=0) -> SweepSummary:
    """
    Split-DAG instances: b modes among the d leaves below s0 -> A, K - b among the rest

    The exact envelope is asserted; the stated closed forms are counted in
    ``reported_contained``.
    """
    summary = SweepSummary()
    for index, (n, K, R, d, b) in enumerate(kmode_grid(sizes)):
        graph = build_split_dag(n, d)
        target = kmodes_target(graph, K, R, modes=list(range(b)) + list(range(d, d + K - b)))
        model = ImbalanceModel(graph, target, F)
        edge = (graph.initial, 1)
        envelope = imbalance_envelope(model.pi, model.positions(edge), F, delta)
        stated = kmode_bounds(n, K, R, d, b, F, delta)
        rng = rng_stream(seed, index)
        candidates = _named_splits(model, edge)
        candidates.extend(rng.dirichlet(np.ones(d), size=splits) if d > 1 else [np.ones(1)])
        for shares in candidates:
            value = model.tv(edge, delta, shares)
            summary.add(envelope.contains(value), stated.contains(value))
    logger.info(
        f'K-mode sweep: envelope {summary.asserted_contained}/{summary.cases}, '
        f'stated forms {summary.reported_contained}/{summary.cases}'
    )
    return summary
