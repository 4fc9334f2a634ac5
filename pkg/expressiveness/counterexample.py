"""
A two-level state graph whose target no 1-WL policy can represent

S0 branches to N1 (a 6-cycle) and N2 (two triangles). 1-WL cannot tell N1
from N2, so a colour-tied policy uses one split b at both: with a the
probability of N1 the leaves (G1, G2, G3, G4) get

    (a b, a (1-b), (1-a) b, (1-a) (1-b))

G1/G3 add a node joined to node 0 and G2/G4 add an isolated node.
"""

import logging
from dataclasses import dataclass
from typing import Union

import numpy as np
from scipy.optimize import minimize

from flows.targets import TargetDistribution
from graphs.builders import state_records
from graphs.state_graph import StateGraph
from utils import LabValidationError

from .tying import state_partition
from .wl import GraphState, WlPartition

logger = logging.getLogger(__name__)

HETERO = 'hetero'
HOMO = 'homo'
TARGETS = {
    HETERO: (1 / 6, 1 / 6, 1 / 6, 1 / 2),
    HOMO: (1 / 6, 1 / 3, 1 / 6, 1 / 3),
}

S0, N1, N2, G1, G2, G3, G4 = range(7)


@dataclass
class WlInstance:
    graph: StateGraph
    target: TargetDistribution
    partition: WlPartition


def counterexample_graph() -> StateGraph:
    n1 = GraphState.cycle(6)
    n2 = GraphState.disjoint(GraphState.cycle(3), GraphState.cycle(3))
    labels = [GraphState.empty(6), n1, n2, n1.with_node([0]), n1.with_node(), n2.with_node([0]), n2.with_node()]
    flags = [False, False, False, True, True, True, True]
    edges = [(S0, N1), (S0, N2), (N1, G1), (N1, G2), (N2, G3), (N2, G4)]
    return StateGraph(state_records(flags, labels), edges, initial=S0)


def wl_counterexample(target=HETERO) -> WlInstance:
    """The instance with the ``hetero`` target (1/6, 1/6, 1/6, 1/2) or the learnable ``homo`` one."""
    if target not in TARGETS:
        raise LabValidationError(f"unknown counterexample target '{target}' ({', '.join(TARGETS)})")
    graph = counterexample_graph()
    distribution = TargetDistribution.from_rewards(graph, np.array(TARGETS[target]), name=target)
    return WlInstance(graph, distribution, state_partition(graph))


def tied_marginal(a, b) -> np.ndarray:
    """Leaf distribution of a tied policy; broadcasts over arrays of (a, b)."""
    a, b = np.broadcast_arrays(np.asarray(a, dtype=float), np.asarray(b, dtype=float))
    return np.stack([a * b, a * (1 - b), (1 - a) * b, (1 - a) * (1 - b)], axis=-1)


def _tied_tv(a, b, target):
    return 0.5 * np.abs(tied_marginal(a, b) - target).sum(axis=-1)


@dataclass
class TyingFloor:
    value: float
    a: float
    b: float


def _target_vector(target):
    if isinstance(target, WlInstance):
        target = target.target
    if isinstance(target, TargetDistribution):
        target = target.probabilities
    target = np.asarray(target, dtype=float)
    if target.shape != (4,) or np.any(target < 0) or not np.isclose(target.sum(), 1.0):
        raise LabValidationError('the tied floor needs a distribution over the four leaves')
    return target


def min_tv_under_tying(target: Union[WlInstance, TargetDistribution, np.ndarray], points=201, zooms=10) -> TyingFloor:
    """
    min over (a, b) in [0, 1]² of TV(tied_marginal(a, b), target)

    A dense grid is zoomed around its best point ``zooms`` times and the
    result is polished with Nelder-Mead.
    """
    target = _target_vector(target)
    lo_a, hi_a, lo_b, hi_b = 0.0, 1.0, 0.0, 1.0
    best = (np.inf, 0.5, 0.5)
    for _ in range(zooms + 1):
        grid_a = np.linspace(lo_a, hi_a, points)
        grid_b = np.linspace(lo_b, hi_b, points)
        values = _tied_tv(grid_a[:, None], grid_b[None, :], target)
        i, j = np.unravel_index(np.argmin(values), values.shape)
        if values[i, j] < best[0]:
            best = (float(values[i, j]), float(grid_a[i]), float(grid_b[j]))
        step_a, step_b = (hi_a - lo_a) / (points - 1), (hi_b - lo_b) / (points - 1)
        lo_a, hi_a = max(0.0, best[1] - 2 * step_a), min(1.0, best[1] + 2 * step_a)
        lo_b, hi_b = max(0.0, best[2] - 2 * step_b), min(1.0, best[2] + 2 * step_b)

    polished = minimize(
        lambda x: float(_tied_tv(x[0], x[1], target)), x0=np.array(best[1:]), method='Nelder-Mead',
        bounds=[(0.0, 1.0), (0.0, 1.0)], options={'xatol': 1e-12, 'fatol': 1e-15, 'maxiter': 4000},
    )
    if polished.fun < best[0]:
        best = (float(polished.fun), float(polished.x[0]), float(polished.x[1]))
    logger.info(f'tied TV floor {best[0]:.6f} at a={best[1]:.6f}, b={best[2]:.6f}')
    return TyingFloor(*best)
