"""
Streaming update kinds
"""

from dataclasses import dataclass

from utils import LabValidationError, parse_spec, reject_leftovers, spec_value

SB = 'sb'
KL = 'kl'

EXPLORE = 'explore'
REFERENCE = 'reference'
BEHAVIOURS = (EXPLORE, REFERENCE)


@dataclass(frozen=True)
class UpdateKind:
    """
    Parsed ``--update`` option

    Examples:
        'sb', 'kl:k=8', 'kl:k=8,score=1'
    """

    name: str = SB
    k: int = 8
    score: bool = False

    def __post_init__(self):
        if self.name not in (SB, KL):
            raise LabValidationError(f"unknown update '{self.name}' ({SB}, {KL})")
        if self.name == KL and self.k < 2:
            raise LabValidationError(f'KL updates need k >= 2 trajectories per step, got k={self.k}')

    @classmethod
    def parse(cls, text):
        name, raw = parse_spec(text or SB)
        if name == KL:
            kind = cls(name, k=spec_value(raw, 'k', int, 8), score=bool(spec_value(raw, 'score', int, 0)))
        else:
            kind = cls(name)
        reject_leftovers(name, raw)
        return kind

    def __str__(self):
        if self.name == KL:
            return f'{KL}:k={self.k}' + (',score=1' if self.score else '')
        return self.name
