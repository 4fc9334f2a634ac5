"""
Closed-form total variation bounds for a single-edge imbalance

Every function returns an ``Interval`` (lower, upper). ``BoundReport`` pairs
an interval with the measured TV; only reports with ``asserted`` set are
treated as theorems, the others are informational.
"""

import logging
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from utils import LabValidationError

logger = logging.getLogger(__name__)

CONTAINMENT_TOLERANCE = 1e-9

REPORT_HEADER = ('bound_name', 'lower', 'exact_or_mean', 'upper', 'contained')


class Interval(NamedTuple):
    lower: float
    upper: float

    def contains(self, value, tolerance=CONTAINMENT_TOLERANCE) -> bool:
        return bool(self.lower - tolerance <= value <= self.upper + tolerance)


@dataclass
class BoundReport:
    bound_name: str
    lower: float
    value: float
    upper: float
    parameters: dict = field(default_factory=dict)
    asserted: bool = True

    @property
    def contained(self) -> bool:
        return Interval(self.lower, self.upper).contains(self.value)

    def as_row(self):
        return (self.bound_name, self.lower, self.value, self.upper, self.contained)


def _check_flows(F, delta):
    if not F > 0:
        raise LabValidationError(f'total flow F must be positive, got {F}')
    if not delta >= 0:
        raise LabValidationError(f'imbalance delta must be nonnegative, got {delta}')


def epsilon(delta, x, F) -> float:
    """ε(δ, x, F) = (1 - 1/x) δ / (F + δ)."""
    _check_flows(F, delta)
    return (1.0 - 1.0 / x) * delta / (F + delta)


def tree_bounds(g, h, F, delta) -> Interval:
    """
    (ε(δ, g, F), ε(δ, g^h, F)) for a g-ary tree of depth h with uniform target

    Examples:
        tree_bounds(2, 2, 1, 1) → (0.25, 0.375)
    """
    if int(g) < 2 or int(h) < 1:
        raise LabValidationError(f'tree bounds need g >= 2 and h >= 1, got g={g}, h={h}')
    return Interval(epsilon(delta, int(g), F), epsilon(delta, float(int(g)) ** int(h), F))


def _check_descendants(n, d):
    if int(n) < 2 or not 1 <= int(d) <= int(n) - 1:
        raise LabValidationError(f'need n >= 2 and 1 <= d <= n-1, got n={n}, d={d}')


def dag_bounds(n, d, F, delta) -> Interval:
    """
    δ(n - d) / (2n(F + δ)) ≤ TV ≤ δ(n + dn - d) / (2n(F + δ)) for a uniform target

    Examples:
        dag_bounds(4, 2, 1, 1) → (0.125, 0.625)
    """
    _check_descendants(n, d)
    _check_flows(F, delta)
    n, d = int(n), int(d)
    scale = delta / (2.0 * n * (F + delta))
    return Interval(scale * (n - d), scale * (n + d * n - d))


def main_text_dag_upper(n, F, delta) -> float:
    """The tighter δ(n - 1) / (2n(F + δ)) upper form; reported, not asserted."""
    _check_flows(F, delta)
    return delta * (n - 1) / (2.0 * n * (F + delta))


def kmode_bounds(n, K, R, d, b, F, delta) -> Interval:
    """
    Stated lower and upper forms for a K-mode target, b modes below the edge

    Each of the K modes has mass R/n and the other n - K terminals share the
    rest. K = 1 has its own case analysis, see ``one_mode_bounds``.
    """
    n, K, d, b, R = int(n), int(K), int(d), int(b), float(R)
    _check_descendants(n, d)
    _check_flows(F, delta)
    if K < 1:
        raise LabValidationError(f'K-mode bounds need K >= 1, got K={K}')
    if not (1 < R < n and K * R < n):
        raise LabValidationError(f'K-mode bounds need 1 < R < n and K*R < n, got R={R}, K={K}, n={n}')
    if not 0 <= b <= min(K, d):
        raise LabValidationError(f'modes below the edge must satisfy 0 <= b <= min(K, d), got b={b}')
    if K - b > n - d:
        raise LabValidationError(f'{K - b} modes cannot fit among the {n - d} leaves outside the edge')
    if K == 1:
        return one_mode_bounds(n, R, d, b, F, delta)
    scale = delta / (2.0 * n * (n - K) * (F + delta))
    lower = 2 * n * n - 2 * n * K + 2 * d * K * R - 2 * d * n + b * n - R * b * n - R * n + R * K
    upper = 2 * n * n - K * K * R - 2 * n * K - n * b + b * K * R
    return Interval(scale * lower, scale * upper)


def one_mode_bounds(n, R, d, b, F, delta) -> Interval:
    """
    Stated forms for a single mode of mass R/n, b in {0, 1} telling whether it lies below the edge

    With s = δ/(F + δ) and p = (n - R)/(n(n - 1)) the mass of a non-mode
    leaf, the leaves outside the edge contribute exactly
    s(R/n + (n - d - 1)p) when the mode is outside and s(n - d)p when it is
    below; half of that is the lower form. Upper forms bound the leaves below
    the edge by the triangle inequality: s(1 + dp) with the mode outside,
    s(R/n + 1 + (d - 1)p) with the mode below and R >= n/2, and s(n - 2R)/n
    with the mode below and R < n/2. The last one is not a valid bound (an
    equal split exceeds it); it is kept as stated and never asserted.

    Examples:
        one_mode_bounds(8, 2, 3, 1, 1, 0.5) → (5/56, 29/168)
    """
    n, d, b, R = int(n), int(d), int(b), float(R)
    _check_descendants(n, d)
    _check_flows(F, delta)
    if b not in (0, 1):
        raise LabValidationError(f'a single mode is either below the edge or not, got b={b}')
    s = delta / (F + delta)
    p = (n - R) / (n * (n - 1))
    if b == 0:
        outside = s * (R / n + (n - d - 1) * p)
        inside = s * (1 + d * p)
    else:
        outside = s * (n - d) * p
        inside = s * (R / n + 1 + (d - 1) * p) if 2 * R >= n else s * (n - 2 * R) / n
    return Interval(outside / 2, (outside + inside) / 2)


def imbalance_envelope(pi, positions, F, delta) -> Interval:
    """
    Exact range of TV over every split of δ among the leaves ``positions``

    [δ(1 - π(D)) / (F + δ), δ(1 - min_D π) / (F + δ)]. The lower end is
    reached by any split with s_i ≥ π_i, the upper end by concentrating on
    the leaf of least target mass.
    """
    _check_flows(F, delta)
    pi = np.asarray(pi, dtype=float)
    below = pi[np.asarray(positions, dtype=np.int64)]
    if len(below) == 0:
        raise LabValidationError('the imbalanced edge has no descendant leaves')
    scale = delta / (F + delta)
    return Interval(scale * max(1.0 - below.sum(), 0.0), scale * (1.0 - below.min()))


def epsilon_to_delta(eps, backward_edge_flow) -> float:
    """
    Extra flow δ = (e^√ε - 1) F(s' → s) behind a detailed-balance residual ε

    Examples:
        epsilon_to_delta(log(2)**2, 1) → 1.0
    """
    if eps < 0:
        raise LabValidationError(f'residual epsilon must be nonnegative, got {eps}')
    if not backward_edge_flow > 0:
        raise LabValidationError('backward edge flow must be positive')
    return float(np.expm1(np.sqrt(eps)) * backward_edge_flow)


def epsilon_uniform_bounds(eps, backward_edge_flow, n, d, F) -> Interval:
    """
    TV range for a uniform target written in terms of the residual ε

    With δ = (e^√ε - 1) F(s' → s) this is [δ(n - d) / (n(F + δ)), δ(n - 1) / (n(F + δ))],
    i.e. twice the lower form of ``dag_bounds``.
    """
    _check_descendants(n, d)
    delta = epsilon_to_delta(eps, backward_edge_flow)
    _check_flows(F, delta)
    scale = delta / (n * (F + delta))
    return Interval(scale * (n - d), scale * (n - 1))
