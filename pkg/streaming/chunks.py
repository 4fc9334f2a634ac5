"""
Data chunks: one log-likelihood log f(D_t | x) per terminal

Chunk files are JSON documents ``{"t": 2, "loglik": {"<terminal id>": -1.3, ...}}``.
"""

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import List

import numpy as np
from rest_framework import serializers

from flows.targets import TargetDistribution
from graphs.serializers import StrictSerializer, flatten_errors
from graphs.state_graph import StateGraph
from utils import LabValidationError, rng_stream, write_json_atomic

logger = logging.getLogger(__name__)


class ChunkDocumentSerializer(StrictSerializer):
    t = serializers.IntegerField(min_value=1)
    loglik = serializers.DictField(child=serializers.FloatField(), allow_empty=False)


@dataclass(frozen=True)
class StreamChunk:
    """Chunk ``t`` with its log-likelihoods in terminal order."""

    t: int
    loglik: np.ndarray

    def __post_init__(self):
        loglik = np.array(self.loglik, dtype=float)
        if loglik.ndim != 1 or not np.all(np.isfinite(loglik)):
            raise LabValidationError(f'chunk {self.t}: log-likelihoods must be a finite vector')
        loglik.setflags(write=False)
        object.__setattr__(self, 'loglik', loglik)

    @property
    def argmax(self) -> int:
        """Terminal position of the maximum-likelihood instance."""
        return int(np.argmax(self.loglik))

    def scaled(self, factor) -> 'StreamChunk':
        return StreamChunk(self.t, self.loglik * float(factor))

    def to_document(self, graph: StateGraph) -> dict:
        return {'t': self.t, 'loglik': {str(x): float(v) for x, v in zip(graph.terminal_ids, self.loglik)}}


def chunk_from_document(document, graph: StateGraph, source='<chunk>') -> StreamChunk:
    serializer = ChunkDocumentSerializer(data=document)
    if not serializer.is_valid():
        raise LabValidationError(f'{source}: {"; ".join(flatten_errors(serializer.errors))}')
    data = serializer.validated_data
    values = {}
    for key, value in data['loglik'].items():
        try:
            values[int(key)] = value
        except ValueError:
            raise LabValidationError(f"{source}: loglik key '{key}' is not a terminal id")
    unknown = sorted(set(values) - set(graph.terminal_ids))
    if unknown:
        raise LabValidationError(f'{source}: non-terminal states {unknown[:10]} carry log-likelihoods')
    missing = [x for x in graph.terminal_ids if x not in values]
    if missing:
        raise LabValidationError(f'{source}: no log-likelihood for terminals {missing[:10]}')
    try:
        return StreamChunk(data['t'], [values[x] for x in graph.terminal_ids])
    except LabValidationError as exc:
        raise LabValidationError(f'{source}: {exc}')


def load_chunk(path, graph: StateGraph) -> StreamChunk:
    path = Path(path)
    try:
        document = json.loads(path.read_text(encoding='utf-8'))
    except OSError as exc:
        raise LabValidationError(f'{path}: cannot read chunk file ({exc.strerror})')
    except json.JSONDecodeError as exc:
        raise LabValidationError(f'{path}:{exc.lineno}:{exc.colno}: {exc.msg}')
    chunk = chunk_from_document(document, graph, source=str(path))
    logger.info(f'Loaded chunk {chunk.t} from {path}')
    return chunk


def save_chunk(chunk: StreamChunk, graph: StateGraph, path):
    return write_json_atomic(path, chunk.to_document(graph))


def synthetic_chunk(graph: StateGraph, t, seed=0, scale=1.0) -> StreamChunk:
    """
    Seeded log-likelihoods

    On a set graph loglik(x) = scale · Σ_{e∈x} g(e) with g(e) ~ N(0, 1)
    per element; elsewhere each terminal gets its own N(0, 1) draw times
    ``scale``.
    """
    rng = rng_stream(seed, t)
    labels = [graph.label(x) for x in graph.terminal_ids]
    if all(isinstance(label, (tuple, list)) for label in labels):
        deposit = max((max(label) for label in labels if len(label)), default=0)
        g = rng.normal(size=deposit)
        loglik = np.array([g[np.asarray(label, dtype=int) - 1].sum() for label in labels])
    else:
        loglik = rng.normal(size=graph.num_terminals)
    return StreamChunk(int(t), scale * loglik)


def synthetic_chunks(graph: StateGraph, count, seed=0, scale=1.0) -> List[StreamChunk]:
    return [synthetic_chunk(graph, t, seed, scale) for t in range(1, int(count) + 1)]


def posterior_target(prior: TargetDistribution, chunks) -> TargetDistribution:
    """π̃_t(x) = π̃(x) Π_{i≤t} f(D_i | x)."""
    log_reward = np.array(prior.log_reward, dtype=float)
    count = 0
    for chunk in chunks:
        if chunk.loglik.shape != log_reward.shape:
            raise LabValidationError(f'chunk {chunk.t} has {len(chunk.loglik)} values for {len(log_reward)} terminals')
        log_reward = log_reward + chunk.loglik
        count += 1
    return TargetDistribution(prior.graph, log_reward, name=f'{prior.name}|{count} chunks')
