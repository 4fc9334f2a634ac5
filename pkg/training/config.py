"""
Loss kinds and training hyperparameters
"""

import logging
from dataclasses import dataclass, field
from typing import Optional

from utils import LabValidationError, lab_default, parse_spec, reject_leftovers, spec_value

from .exceptions import LossConfigurationError

logger = logging.getLogger(__name__)

TB = 'tb'
DB = 'db'
SUBTB = 'subtb'
TD3 = 'td3'
KL = 'kl'
LOSS_KINDS = (TB, DB, SUBTB, TD3, KL)

UPSTREAM = 'upstream'
DOWNSTREAM = 'downstream'


@dataclass(frozen=True)
class LossKind:
    """
    Parsed ``--loss`` option

    Examples:
        'tb', 'db', 'subtb:lambda=0.9', 'td3:beta0=1.0,anneal=2000,direction=upstream', 'kl'
    """

    name: str = TB
    lam: float = 0.9
    beta0: float = 1.0
    anneal: int = 0
    direction: str = UPSTREAM

    def __post_init__(self):
        if self.name not in LOSS_KINDS:
            raise LossConfigurationError(f"unknown loss '{self.name}' ({', '.join(LOSS_KINDS)})")
        if not 0 < self.lam <= 1:
            raise LossConfigurationError(f'SubTB lambda must lie in (0, 1], got {self.lam}')
        if self.beta0 < 0 or self.anneal < 0:
            raise LossConfigurationError('TD3 beta0 and anneal must be nonnegative')
        if self.direction not in (UPSTREAM, DOWNSTREAM):
            raise LossConfigurationError(f"TD3 direction must be '{UPSTREAM}' or '{DOWNSTREAM}'")

    @classmethod
    def parse(cls, text):
        name, raw = parse_spec(text or TB)
        if name == SUBTB:
            kind = cls(name, lam=spec_value(raw, 'lambda', float, lab_default('subtb_lambda', 0.9)))
        elif name == TD3:
            kind = cls(
                name,
                beta0=spec_value(raw, 'beta0', float, 1.0),
                anneal=spec_value(raw, 'anneal', int, 0),
                direction=spec_value(raw, 'direction', str, UPSTREAM),
            )
        else:
            kind = cls(name)
        reject_leftovers(name, raw)
        return kind

    @property
    def needs_state_flows(self) -> bool:
        return self.name in (DB, SUBTB, TD3)

    @property
    def is_residual(self) -> bool:
        return self.name != KL

    def beta(self, epoch) -> float:
        """β(e) = β0 · max(0, 1 - e/E); constant β0 when E = 0."""
        if self.anneal <= 0:
            return self.beta0
        return self.beta0 * max(0.0, 1.0 - epoch / self.anneal)

    def check_policy(self, policy):
        if self.needs_state_flows and not policy.has_state_flows:
            raise LossConfigurationError(f'{self.name} needs log state flows, the policy has none')

    def __str__(self):
        if self.name == SUBTB:
            return f'{SUBTB}:lambda={self.lam:g}'
        if self.name == TD3:
            return f'{TD3}:beta0={self.beta0:g},anneal={self.anneal},direction={self.direction}'
        return self.name


@dataclass
class TrainConfig:
    """
    Optimisation settings for one training run

    ``lr_final_fraction`` < 1 decays both rates linearly to that fraction of
    their start value over the run. ``trace_every`` = 0 traces only the
    last epoch.
    """

    epochs: int = 1000
    batch: int = 16
    lr_logits: float = field(default_factory=lambda: float(lab_default('lr_logits', 1e-3)))
    lr_log_z: float = field(default_factory=lambda: float(lab_default('lr_log_z', 1e-1)))
    eta: float = 0.0
    seed: int = 0
    trace_every: int = 100
    lr_final_fraction: float = 1.0
    threads: int = 1
    backward: str = 'uniform'
    capacity: Optional[int] = None
    fcs_subset: int = field(default_factory=lambda: int(lab_default('trace_fcs_subset', 2)))
    fcs_samples: int = field(default_factory=lambda: int(lab_default('trace_fcs_samples', 50)))

    def __post_init__(self):
        if self.epochs < 1 or self.batch < 1:
            raise LabValidationError('epochs and batch size must be positive')
        if not (self.lr_logits > 0 and self.lr_log_z > 0):
            raise LabValidationError('learning rates must be positive')
        if not 0.0 <= self.eta < 1.0:
            raise LabValidationError(f'exploration weight eta must lie in [0, 1), got {self.eta}')
        if self.trace_every < 0:
            raise LabValidationError('trace cadence must be nonnegative')
        if not 0.0 < self.lr_final_fraction <= 1.0:
            raise LabValidationError('final learning-rate fraction must lie in (0, 1]')
        if self.threads < 1:
            raise LabValidationError('threads must be at least 1')

    def learning_rate_scale(self, epoch) -> float:
        if self.epochs <= 1:
            return 1.0
        return 1.0 - (1.0 - self.lr_final_fraction) * epoch / (self.epochs - 1)

    def traced(self, epoch) -> bool:
        last = epoch == self.epochs - 1
        return last or (self.trace_every > 0 and epoch % self.trace_every == 0)
