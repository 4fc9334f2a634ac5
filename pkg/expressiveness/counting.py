"""
Size of graph-generation state spaces with and without node labels

A non-invariant policy sees every labelled graph on up to n nodes as its
own state; a permutation-invariant one only sees isomorphism classes.
Unlabelled counts come from Burnside's lemma over the cycle types of S_n.
"""

from dataclasses import dataclass
from fractions import Fraction
from math import comb, factorial, gcd
from typing import Iterator, List, Tuple

from utils import LabValidationError

COUNT_HEADER = ('n', 'labelled', 'unlabelled', 'ratio')


def _partitions(n, largest=None) -> Iterator[Tuple[int, ...]]:
    largest = n if largest is None else largest
    if n == 0:
        yield ()
        return
    for part in range(min(n, largest), 0, -1):
        for rest in _partitions(n - part, part):
            yield (part,) + rest


def _centraliser_size(cycle_type) -> int:
    size = 1
    for length in set(cycle_type):
        multiplicity = cycle_type.count(length)
        size *= length ** multiplicity * factorial(multiplicity)
    return size


def _edge_cycles(cycle_type) -> int:
    """Cycles induced on unordered node pairs by a permutation of this cycle type."""
    within = sum(length // 2 for length in cycle_type)
    across = sum(gcd(cycle_type[i], cycle_type[j]) for i in range(len(cycle_type)) for j in range(i + 1, len(cycle_type)))
    return within + across


def labelled_graph_count(n) -> int:
    return 2 ** comb(int(n), 2)


def unlabelled_graph_count(n) -> int:
    n = int(n)
    if n < 0:
        raise LabValidationError('node count must be nonnegative')
    total = sum(Fraction(2 ** _edge_cycles(cycle_type), _centraliser_size(cycle_type)) for cycle_type in _partitions(n))
    if total.denominator != 1:
        raise ArithmeticError(f'Burnside count for n={n} is not an integer')
    return int(total)


@dataclass
class GraphCountReport:
    n: int
    labelled: int
    unlabelled: int

    @property
    def ratio(self) -> float:
        return self.labelled / self.unlabelled

    def as_row(self):
        return (self.n, self.labelled, self.unlabelled, self.ratio)


def graph_count_ratio(n) -> GraphCountReport:
    """
    Labelled vs unlabelled graphs with 1..n nodes, summed over node counts

    States, not trajectories: an isomorphism class on k nodes has at most k!
    labellings, so the ratio stays below n! (at n = 12 it is 4.4e8 against
    12! = 4.8e8). Larger figures count construction orders as well.
    """
    n = int(n)
    if n < 1:
        raise LabValidationError('node count must be positive')
    return GraphCountReport(
        n,
        sum(labelled_graph_count(k) for k in range(1, n + 1)),
        sum(unlabelled_graph_count(k) for k in range(1, n + 1)),
    )


def graph_count_table(n) -> List[GraphCountReport]:
    return [graph_count_ratio(k) for k in range(1, int(n) + 1)]
