"""
Multi-seed comparison runners

Both return final TVs per (variant, seed); ``Comparison`` gives medians
and paired per-seed wins.
"""

import logging
from dataclasses import dataclass, field, replace
from typing import Dict, List, Sequence

import numpy as np

from flows.targets import TargetDistribution
from graphs.state_graph import StateGraph

from .config import DB, DOWNSTREAM, KL, TB, TD3, UPSTREAM, LossKind, TrainConfig
from .trainer import train

logger = logging.getLogger(__name__)

ABLATION_HEADER = ('variant', 'seed', 'final_tv')


@dataclass
class VariantRuns:
    variant: str
    final_tvs: Dict[int, float] = field(default_factory=dict)

    @property
    def median(self) -> float:
        return float(np.median(list(self.final_tvs.values())))


@dataclass
class Comparison:
    runs: List[VariantRuns]

    def medians(self) -> Dict[str, float]:
        return {run.variant: run.median for run in self.runs}

    def paired_wins(self, better, worse) -> int:
        """Seeds on which ``better`` ends with the lower TV."""
        a = self._by_name(better).final_tvs
        b = self._by_name(worse).final_tvs
        return sum(1 for seed in a if seed in b and a[seed] < b[seed])

    def rows(self):
        for run in self.runs:
            for seed, tv in run.final_tvs.items():
                yield (run.variant, seed, tv)

    def _by_name(self, variant):
        for run in self.runs:
            if run.variant == variant:
                return run
        raise KeyError(variant)


def compare(graph: StateGraph, targets, variants, seeds: Sequence[int], config: TrainConfig) -> Comparison:
    """
    Train every (variant, seed) pair

    Args:
        targets: one target for all variants, or a dict variant name -> target
        variants: dict variant name -> LossKind
    """
    runs = []
    for name, kind in variants.items():
        target = targets[name] if isinstance(targets, dict) else targets
        run = VariantRuns(name)
        for seed in seeds:
            result = train(graph, target, kind, replace(config, seed=int(seed), trace_every=0))
            run.final_tvs[int(seed)] = result.final_tv
        logger.info(f'{name}: median final TV {run.median:.6f} over {len(seeds)} seeds')
        runs.append(run)
    return Comparison(runs)


def td3_variants(beta0=1.0, anneal=0) -> Dict[str, LossKind]:
    return {
        'td3-upstream': LossKind(TD3, beta0=beta0, anneal=anneal, direction=UPSTREAM),
        'db': LossKind(DB),
        'td3-downstream': LossKind(TD3, beta0=beta0, anneal=anneal, direction=DOWNSTREAM),
    }


def td3_ablation(graph, target, seeds, config: TrainConfig, beta0=1.0, anneal=0) -> Comparison:
    """Upstream TD3 against plain DB against downstream TD3, same seeds and budget."""
    return compare(graph, target, td3_variants(beta0, anneal), seeds, config)


def set_generation_sweep(graph, target: TargetDistribution, seeds, config: TrainConfig,
                         alphas=(1.0, 0.75, 0.5)) -> Comparison:
    """TB against KL on tempered copies of ``target`` for each α."""
    variants, targets = {}, {}
    for alpha in alphas:
        for kind in (TB, KL):
            name = f'{kind}@alpha={alpha:g}'
            variants[name] = LossKind(kind)
            targets[name] = target.tempered(alpha)
    return compare(graph, targets, variants, seeds, config)
