"""
Tied vs untied TB training on the counterexample
"""

import logging
from dataclasses import dataclass, field, replace
from typing import List, Sequence

import numpy as np

from flows.policy import TabularPolicy
from training.config import TB, LossKind, TrainConfig
from training.trainer import train

from .counterexample import HETERO, min_tv_under_tying, wl_counterexample
from .tying import tied_policy

logger = logging.getLogger(__name__)

TIED = 'tied'
UNTIED = 'untied'
DEMO_HEADER = ('mode', 'seed', 'final_tv', 'floor')


@dataclass
class DemoRun:
    mode: str
    seed: int
    final_tv: float
    floor: float

    def as_row(self):
        return (self.mode, self.seed, self.final_tv, self.floor)


@dataclass
class DemoReport:
    target: str
    floor: float
    runs: List[DemoRun] = field(default_factory=list)

    def final_tvs(self, mode) -> List[float]:
        return [run.final_tv for run in self.runs if run.mode == mode]

    def median(self, mode) -> float:
        return float(np.median(self.final_tvs(mode)))

    @property
    def tied_above_floor(self) -> bool:
        return all(tv >= self.floor - 1e-9 for tv in self.final_tvs(TIED))

    def rows(self):
        return [run.as_row() for run in self.runs]


def wl_demo(target=HETERO, seeds: Sequence[int] = range(20), config: TrainConfig = None) -> DemoReport:
    """Train a colour-tied and an untied policy per seed with TB and record the final exact TV."""
    instance = wl_counterexample(target)
    config = config or TrainConfig(epochs=2000, lr_logits=0.05, lr_log_z=0.1)
    floor = min_tv_under_tying(instance).value
    report = DemoReport(target, floor)
    graph = instance.graph
    for seed in seeds:
        run_config = replace(config, seed=int(seed), trace_every=0)
        for mode in (TIED, UNTIED):
            if mode == TIED:
                policy = tied_policy(graph, instance.partition)
            else:
                policy = TabularPolicy.uniform(graph, state_flows=False)
            result = train(graph, instance.target, LossKind(TB), run_config, policy=policy)
            report.runs.append(DemoRun(mode, int(seed), result.final_tv, floor))
    logger.info(f'{target}: median tied TV {report.median(TIED):.6f}, untied {report.median(UNTIED):.6f}, floor {floor:.6f}')
    return report
