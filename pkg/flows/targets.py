"""
Unnormalised target distributions over the terminals of a state graph

Rewards are held in log space (tempered set rewards overflow otherwise);
``reward`` and ``partition`` expose the linear values.
"""

import csv
import io
import json
import logging
from pathlib import Path

import numpy as np
from scipy.special import logsumexp

from graphs.state_graph import StateGraph
from utils import LabValidationError, parse_spec, reject_leftovers, spec_value

logger = logging.getLogger(__name__)


class TargetDistribution:
    """
    π̃ over the terminals of ``graph``, indexed by terminal position

    Args:
        graph (StateGraph): Graph whose terminals carry the rewards
        log_reward (array): log π̃ in ``graph.terminal_ids`` order
        name (str): Short description used in reports
    """

    def __init__(self, graph: StateGraph, log_reward, name='custom'):
        log_reward = np.asarray(log_reward, dtype=float)
        if log_reward.shape != (graph.num_terminals,):
            raise LabValidationError(
                f'target needs {graph.num_terminals} rewards, got shape {log_reward.shape}'
            )
        if not np.all(np.isfinite(log_reward)):
            raise LabValidationError('target rewards must be strictly positive and finite')
        self.graph = graph
        self.name = name
        self.log_reward = log_reward
        self.log_reward.setflags(write=False)
        self.log_partition = float(logsumexp(log_reward))

    @classmethod
    def from_rewards(cls, graph, rewards, name='custom'):
        """Build from linear rewards, either an array in terminal order or a {terminal id: reward} mapping."""
        if isinstance(rewards, dict):
            values = np.empty(graph.num_terminals)
            missing = [x for x in graph.terminal_ids if x not in rewards and str(x) not in rewards]
            if missing:
                raise LabValidationError(f'no reward for terminals {missing[:10]}')
            unknown = [key for key in rewards if int(key) not in set(graph.terminal_ids)]
            if unknown:
                raise LabValidationError(f'rewards given for non-terminal states {unknown[:10]}')
            for position, x in enumerate(graph.terminal_ids):
                values[position] = float(rewards[x] if x in rewards else rewards[str(x)])
        else:
            values = np.asarray(rewards, dtype=float)
        if values.shape != (graph.num_terminals,) or not np.all(np.isfinite(values)) or np.any(values <= 0):
            raise LabValidationError('target rewards must be strictly positive and finite, one per terminal')
        return cls(graph, np.log(values), name=name)

    @property
    def reward(self) -> np.ndarray:
        return np.exp(self.log_reward)

    @property
    def partition(self) -> float:
        return float(np.exp(self.log_partition))

    @property
    def probabilities(self) -> np.ndarray:
        return np.exp(self.log_reward - self.log_partition)

    def log_reward_of(self, x) -> float:
        position = self.graph.terminal_index[self.graph.check_state(x)]
        if position < 0:
            raise LabValidationError(f'state {x} is not terminal')
        return float(self.log_reward[position])

    def reward_map(self):
        return {x: float(r) for x, r in zip(self.graph.terminal_ids, self.reward)}

    def tempered(self, alpha):
        """π̃^(1/α)."""
        if alpha <= 0:
            raise LabValidationError('temperature alpha must be positive')
        return TargetDistribution(self.graph, self.log_reward / alpha, name=f'{self.name}^(1/{alpha:g})')

    def __repr__(self):
        return f'TargetDistribution({self.name}, n={self.graph.num_terminals}, log Z={self.log_partition:.6f})'


def uniform_target(graph):
    return TargetDistribution(graph, np.zeros(graph.num_terminals), name='uniform')


def kmodes_target(graph, K, R, seed=None, modes=None):
    """
    K modes with mass R/n each; the other n-K terminals share the rest evenly

    Modes are the first K terminals unless a seed asks for random positions
    or ``modes`` lists terminal positions explicitly.
    """
    n = graph.num_terminals
    K, R = int(K), float(R)
    if not 1 <= K < n:
        raise LabValidationError(f'K-mode target needs 1 <= K < n={n}, got K={K}')
    if not (R > 1 and K * R < n):
        raise LabValidationError(f'K-mode target needs R > 1 and K*R < n, got K={K}, R={R}, n={n}')
    if modes is not None:
        modes = np.unique(np.asarray(modes, dtype=np.int64))
        if len(modes) != K or modes.min() < 0 or modes.max() >= n:
            raise LabValidationError(f'need {K} distinct mode positions in 0..{n - 1}')
    elif seed is None:
        modes = np.arange(K)
    else:
        modes = np.sort(np.random.default_rng(seed).choice(n, size=K, replace=False))
    probs = np.full(n, (n - K * R) / (n * (n - K)))
    probs[modes] = R / n
    target = TargetDistribution(graph, np.log(probs), name=f'kmodes(K={K},R={R:g})')
    target.modes = tuple(graph.terminal_ids[i] for i in modes)
    return target


def set_product_target(graph, seed=0, alpha=1.0, scale=1.0):
    """
    log R(x) = (1/α) Σ_{e∈x} f(e) with f(e) ~ U[-scale, scale], seeded

    Requires set-graph labels (sorted element tuples). The default scale=1
    keeps log rewards within ±|x| so a few thousand epochs train on a
    desk machine; the full benchmark uses scale=5
    (``product:scale=5`` on the command line).
    """
    if alpha <= 0:
        raise LabValidationError('temperature alpha must be positive')
    labels = [graph.label(x) for x in graph.terminal_ids]
    if any(label is None for label in labels):
        raise LabValidationError('product target needs a set graph (terminal labels are element tuples)')
    deposit = max(max(label) for label in labels if len(label))
    values = np.random.default_rng(seed).uniform(-scale, scale, size=deposit)
    log_reward = np.array([values[np.asarray(label, dtype=int) - 1].sum() for label in labels]) / alpha
    target = TargetDistribution(graph, log_reward, name=f'product(seed={seed},alpha={alpha:g})')
    target.element_values = values
    return target


def _read_reward_csv(path, text):
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or [cell.strip() for cell in rows[0]] != ['terminal_id', 'reward']:
        raise LabValidationError(f'{path}: reward table needs the header terminal_id,reward')
    rewards = {}
    for line, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        try:
            rewards[int(row[0])] = float(row[1])
        except (IndexError, ValueError):
            raise LabValidationError(f'{path}:{line}: expected <terminal id>,<reward>')
    return rewards


def load_target(graph, path):
    """
    Tabulated rewards: a JSON object of terminal id -> reward, or a CSV
    table with header ``terminal_id,reward``
    """
    path = Path(path)
    try:
        text = path.read_text(encoding='utf-8')
    except OSError as exc:
        raise LabValidationError(f'{path}: cannot read target file ({exc.strerror})')
    if path.suffix.lower() == '.csv':
        rewards = _read_reward_csv(path, text)
    else:
        try:
            document = json.loads(text)
        except json.JSONDecodeError as exc:
            raise LabValidationError(f'{path}:{exc.lineno}:{exc.colno}: {exc.msg}')
        if not isinstance(document, dict):
            raise LabValidationError(f'{path}: expected an object of terminal id -> reward')
        try:
            rewards = {int(key): value for key, value in document.items()}
        except ValueError:
            raise LabValidationError(f'{path}: keys must be terminal ids')
    return TargetDistribution.from_rewards(graph, rewards, name=f'file:{path}')


def build_target(text, graph):
    """
    Parse a target option

    Examples:
        'uniform', 'kmodes:K=2,R=2,seed=1', 'product:seed=3,alpha=1.0', 'file:rewards.json'
    """
    kind, raw = parse_spec(text or 'uniform')
    if kind == 'uniform':
        target = uniform_target(graph)
    elif kind == 'kmodes':
        target = kmodes_target(
            graph,
            spec_value(raw, 'K', int, required=True),
            spec_value(raw, 'R', float, required=True),
            spec_value(raw, 'seed', int, None),
        )
    elif kind == 'product':
        target = set_product_target(
            graph,
            seed=spec_value(raw, 'seed', int, 0),
            alpha=spec_value(raw, 'alpha', float, 1.0),
            scale=spec_value(raw, 'scale', float, 1.0),
        )
    elif kind in ('file', 'tabulated'):
        target = load_target(graph, spec_value(raw, 'path', str, required=True))
    else:
        raise LabValidationError(f"unknown target kind '{kind}' (uniform, kmodes, product, file)")
    reject_leftovers(kind, raw)
    return target
