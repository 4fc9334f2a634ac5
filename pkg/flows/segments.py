"""
Vectorised helpers over edge segments (all out-edges or all in-edges of a state)
"""

import numpy as np


def segment_log_softmax(values, segments, num_segments):
    """
    Log-softmax of ``values`` within groups given by ``segments``

    Args:
        values (np.ndarray): One entry per edge
        segments (np.ndarray): Group id (state id) per edge
        num_segments (int): Number of groups

    Returns:
        np.ndarray: Log-probabilities, each group normalised
    """
    peak = np.full(num_segments, -np.inf)
    np.maximum.at(peak, segments, values)
    shifted = values - peak[segments]
    totals = np.bincount(segments, weights=np.exp(shifted), minlength=num_segments)
    with np.errstate(divide='ignore'):
        log_totals = np.log(totals)
    return shifted - log_totals[segments]


def segment_logsumexp(values, segments, num_segments):
    """Per-group log-sum-exp; empty groups get -inf."""
    peak = np.full(num_segments, -np.inf)
    np.maximum.at(peak, segments, values)
    safe_peak = np.where(np.isfinite(peak), peak, 0.0)
    totals = np.bincount(segments, weights=np.exp(values - safe_peak[segments]), minlength=num_segments)
    with np.errstate(divide='ignore'):
        return np.log(totals) + safe_peak


class SegmentSampler:
    """
    Draw one edge per query state from per-state categorical distributions

    ``order`` lists edge ids grouped contiguously by state, ``ptr`` gives the
    group boundaries (CSR). Draws use inverse-CDF lookup with one uniform
    number per query, so a fixed generator gives a fixed result.
    """

    def __init__(self, probs, order, ptr):
        self.order = np.asarray(order)
        self.ptr = np.asarray(ptr)
        ordered = np.asarray(probs, dtype=float)[self.order]
        counts = np.diff(self.ptr)
        owners = np.repeat(np.arange(len(counts)), counts)
        running = np.cumsum(ordered)
        starts = self.ptr[:-1]
        before = np.where(starts > 0, running[np.maximum(starts - 1, 0)], 0.0)
        within = running - np.repeat(before, counts)
        totals = np.repeat(np.where(counts > 0, within[np.maximum(self.ptr[1:] - 1, 0)], 1.0), counts)
        within = within / totals
        nonempty = counts > 0
        within[self.ptr[1:][nonempty] - 1] = 1.0
        self.keys = owners + within

    def draw(self, states, uniforms):
        states = np.asarray(states, dtype=np.int64)
        position = np.searchsorted(self.keys, states + uniforms, side='right')
        position = np.clip(position, self.ptr[states], self.ptr[states + 1] - 1)
        return self.order[position]
