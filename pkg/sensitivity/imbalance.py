"""
Single-edge imbalances on an otherwise balanced flow network

The balanced base carries total flow F and terminal flows F·π(x). An
imbalance adds δ of extra flow on one edge (u, v); the extra flow ends at
the terminals D reachable from v, leaf i receiving the share s_i·δ chosen
by a split rule. The sampled distribution is then

    μ_δ(x) = (F·π(x) + δ·s_x) / (F + δ)

and ‖μ_δ - π‖_TV = δ / (2(F + δ)) · Σ_x |s_x - π(x)| with s zero outside D.
"""

import logging
from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np

from flows.balance import balanced_policy
from flows.marginals import log_state_mass
from flows.targets import TargetDistribution
from graphs.state_graph import StateGraph
from utils import LabValidationError, parse_spec, reject_leftovers, rng_stream, spec_value

logger = logging.getLogger(__name__)

EQUAL = 'equal'
CONCENTRATED = 'concentrated'
DIRICHLET = 'dirichlet'
PROPORTIONAL = 'proportional'
SPLIT_RULES = (EQUAL, CONCENTRATED, DIRICHLET, PROPORTIONAL)


def _parse_alpha(raw):
    values = [float(part) for part in str(raw).split('/') if part.strip()]
    if not values:
        raise ValueError(raw)
    return values


@dataclass(frozen=True)
class SplitRule:
    """
    How the extra flow δ is shared among the descendant leaves of v

    Examples:
        'equal', 'proportional', 'concentrated:leaf=5',
        'dirichlet:alpha=1,seed=3', 'dirichlet:alpha=1/2/3'
    """

    kind: str = PROPORTIONAL
    leaf: Optional[int] = None
    alpha: Tuple[float, ...] = (1.0,)
    seed: int = 0

    @classmethod
    def parse(cls, text):
        kind, raw = parse_spec(text or PROPORTIONAL)
        if kind == CONCENTRATED:
            rule = cls(kind, leaf=spec_value(raw, 'leaf', int, None))
        elif kind == DIRICHLET:
            rule = cls(
                kind,
                alpha=tuple(spec_value(raw, 'alpha', _parse_alpha, [1.0])),
                seed=spec_value(raw, 'seed', int, 0),
            )
        elif kind in (EQUAL, PROPORTIONAL):
            rule = cls(kind)
        else:
            raise LabValidationError(f"unknown split rule '{kind}' ({', '.join(SPLIT_RULES)})")
        reject_leftovers(kind, raw)
        if kind == DIRICHLET and any(a <= 0 for a in rule.alpha):
            raise LabValidationError('Dirichlet concentration must be positive')
        return rule

    def alpha_vector(self, d) -> np.ndarray:
        """Concentration over d leaves; a single value is broadcast."""
        if len(self.alpha) == 1:
            return np.full(d, self.alpha[0])
        if len(self.alpha) != d:
            raise LabValidationError(f'Dirichlet concentration has {len(self.alpha)} entries, v has {d} descendant leaves')
        return np.asarray(self.alpha, dtype=float)

    @property
    def is_symmetric(self) -> bool:
        return len(set(self.alpha)) == 1

    def __str__(self):
        if self.kind == CONCENTRATED:
            return CONCENTRATED if self.leaf is None else f'{CONCENTRATED}:leaf={self.leaf}'
        if self.kind == DIRICHLET:
            return f'{DIRICHLET}:alpha={"/".join(f"{a:g}" for a in self.alpha)},seed={self.seed}'
        return self.kind


def parse_edge(graph: StateGraph, text) -> Tuple[int, int]:
    """
    Resolve an edge option: ``root:i`` (i-th child of s0) or ``u-v``

    Raises:
        LabValidationError: malformed text or the edge is not in the graph
    """
    text = str(text or 'root:0').strip()
    if text.startswith('root'):
        _, _, index = text.partition(':')
        try:
            index = int(index or 0)
        except ValueError:
            raise LabValidationError(f"malformed edge '{text}' (expected root:<child index>)")
        children = graph.children(graph.initial)
        if not 0 <= index < len(children):
            raise LabValidationError(f'the initial state has {len(children)} children, no child {index}')
        return graph.initial, children[index]
    parts = text.replace('->', '-').split('-')
    try:
        u, v = (int(part) for part in parts)
    except ValueError:
        raise LabValidationError(f"malformed edge '{text}' (expected root:<i> or <u>-<v>)")
    graph.edge_id(u, v)
    return u, v


@dataclass(frozen=True)
class ImbalanceSpec:
    edge: Tuple[int, int]
    delta: float
    split: SplitRule = field(default_factory=SplitRule)

    def __post_init__(self):
        if not self.delta >= 0:
            raise LabValidationError(f'imbalance delta must be nonnegative, got {self.delta}')


class ImbalanceModel:
    """
    Balanced base network for (graph, target) with total flow F

    The balanced policy is built once and reused for every proportional
    split. Shares and TVs accept a single split (d,) or a stack (m, d).
    """

    def __init__(self, graph: StateGraph, target: TargetDistribution, F=1.0):
        if not F > 0:
            raise LabValidationError(f'total balanced flow F must be positive, got {F}')
        if target.graph is not graph and target.graph != graph:
            raise LabValidationError('target belongs to a different graph')
        self.graph = graph
        self.target = target
        self.F = float(F)
        self.pi = target.probabilities
        self._policy = None

    @property
    def policy(self):
        if self._policy is None:
            self._policy = balanced_policy(self.graph, self.target)
        return self._policy

    def descendants(self, edge) -> Tuple[int, ...]:
        self.graph.edge_id(*edge)
        return self.graph.reachable_terminals(edge[1])

    def positions(self, edge) -> np.ndarray:
        """Terminal positions of the leaves below the edge, in terminal order."""
        return np.array([self.graph.terminal_index[x] for x in self.descendants(edge)], dtype=np.int64)

    def mass_below(self, edge) -> float:
        return float(self.pi[self.positions(edge)].sum())

    def shares(self, edge, split: SplitRule, rng=None) -> np.ndarray:
        """
        Split fractions over the descendant leaves of the edge

        Raises:
            LabValidationError: a concentrated leaf is not a descendant
        """
        leaves = self.descendants(edge)
        positions = self.positions(edge)
        d = len(leaves)
        if split.kind == EQUAL:
            return np.full(d, 1.0 / d)
        if split.kind == CONCENTRATED:
            shares = np.zeros(d)
            if split.leaf is None:
                shares[int(np.argmin(self.pi[positions]))] = 1.0
            elif split.leaf in leaves:
                shares[leaves.index(split.leaf)] = 1.0
            else:
                raise LabValidationError(f'leaf {split.leaf} does not descend from state {edge[1]}')
            return shares
        if split.kind == DIRICHLET:
            if rng is None:
                rng = rng_stream(split.seed)
            return rng.dirichlet(split.alpha_vector(d))
        log_mass = log_state_mass(self.policy, start=edge[1])
        shares = np.exp(log_mass[list(leaves)])
        return shares / shares.sum()

    def terminal_shares(self, edge, shares) -> np.ndarray:
        """Embed leaf shares into terminal order (zero outside D)."""
        shares = np.asarray(shares, dtype=float)
        full = np.zeros(shares.shape[:-1] + (self.graph.num_terminals,))
        full[..., self.positions(edge)] = shares
        return full

    def distribution(self, edge, delta, shares) -> np.ndarray:
        _check_delta(delta)
        return (self.F * self.pi + delta * self.terminal_shares(edge, shares)) / (self.F + delta)

    def tv(self, edge, delta, shares):
        """TV(μ_δ, π); vectorised over a leading axis of ``shares``."""
        _check_delta(delta)
        shares = np.asarray(shares, dtype=float)
        positions = self.positions(edge)
        outside = 1.0 - self.pi[positions].sum()
        gap = np.abs(shares - self.pi[positions]).sum(axis=-1) + max(outside, 0.0)
        value = delta / (2.0 * (self.F + delta)) * gap
        return float(value) if np.ndim(value) == 0 else value

    def apply(self, spec: ImbalanceSpec, rng=None) -> np.ndarray:
        return self.distribution(spec.edge, spec.delta, self.shares(spec.edge, spec.split, rng))


def _check_delta(delta):
    if not delta >= 0:
        raise LabValidationError(f'imbalance delta must be nonnegative, got {delta}')


def imbalanced_distribution(graph, target, spec: ImbalanceSpec, F=1.0) -> np.ndarray:
    """
    μ_δ over the terminals, in ``graph.terminal_ids`` order

    Examples:
        tree(2,2), uniform, F=1, δ=1, equal split on root:0 → (0.375, 0.375, 0.125, 0.125)
    """
    return ImbalanceModel(graph, target, F).apply(spec)
