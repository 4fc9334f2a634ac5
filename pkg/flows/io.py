"""
Policy snapshots (JSON, logits per state id) and terminal distribution tables (CSV)
"""

import json
import logging
from pathlib import Path

import numpy as np

from graphs.serializers import flatten_errors
from graphs.state_graph import StateGraph
from utils import LabValidationError, csv_text, write_csv_atomic, write_json_atomic

from .policy import TabularPolicy
from .serializers import PolicySnapshotSerializer

logger = logging.getLogger(__name__)

DISTRIBUTION_HEADER = ('terminal_id', 'p_model', 'p_target', 'abs_diff')


def policy_to_document(policy: TabularPolicy) -> dict:
    """
    Snapshot document

    ``forward_logits`` maps each nonterminal to its logits in child order and
    ``backward_logits`` each non-initial state to its logits in parent order.
    Tied policies additionally carry ``forward_tie`` and ``forward_params``.
    """
    graph = policy.graph
    logits = policy.forward_logits
    forward = {}
    for v in range(graph.num_states):
        start, stop = graph.forward_ptr[v], graph.forward_ptr[v + 1]
        if stop > start:
            forward[str(v)] = [float(value) for value in logits[start:stop]]
    document = {
        'graph': {'states': graph.num_states, 'edges': graph.num_edges, 'terminals': graph.num_terminals},
        'backward_mode': policy.backward_mode,
        'log_Z': float(policy.log_Z),
        'forward_logits': forward,
        'backward_logits': None,
        'log_state_flow': None,
    }
    if policy.backward_logits is not None:
        document['backward_logits'] = {
            str(v): [float(policy.backward_logits[graph.edge_id(u, v)]) for u in graph.parents(v)]
            for v in range(graph.num_states)
            if graph.parents(v)
        }
    if policy.log_state_flow is not None:
        document['log_state_flow'] = {str(v): float(value) for v, value in enumerate(policy.log_state_flow)}
    if policy.is_tied:
        document['forward_tie'] = [int(slot) for slot in policy.forward_tie]
        document['forward_params'] = [float(value) for value in policy.forward_params]
    return document


def policy_from_document(document, graph: StateGraph, source='<snapshot>') -> TabularPolicy:
    serializer = PolicySnapshotSerializer(data=document)
    if not serializer.is_valid():
        raise LabValidationError(f'{source}: {"; ".join(flatten_errors(serializer.errors))}')
    data = serializer.validated_data
    shape = data['graph']
    if (shape['states'], shape['edges'], shape['terminals']) != (graph.num_states, graph.num_edges, graph.num_terminals):
        raise LabValidationError(
            f'{source}: snapshot was taken on a graph with {shape["states"]} states, {shape["edges"]} edges '
            f'and {shape["terminals"]} terminals'
        )

    if data.get('forward_tie') is not None:
        forward_tie = data['forward_tie']
        forward_params = data['forward_params']
    else:
        forward_tie = None
        forward_params = np.zeros(graph.num_edges)
        for v in range(graph.num_states):
            start, stop = graph.forward_ptr[v], graph.forward_ptr[v + 1]
            if stop == start:
                continue
            row = data['forward_logits'].get(str(v))
            if row is None or len(row) != stop - start:
                raise LabValidationError(f'{source}: forward_logits.{v} needs {stop - start} values')
            forward_params[start:stop] = row

    backward_logits = None
    if data.get('backward_logits') is not None:
        backward_logits = np.zeros(graph.num_edges)
        for v in range(graph.num_states):
            parents = graph.parents(v)
            if not parents:
                continue
            row = data['backward_logits'].get(str(v))
            if row is None or len(row) != len(parents):
                raise LabValidationError(f'{source}: backward_logits.{v} needs {len(parents)} values')
            for u, value in zip(parents, row):
                backward_logits[graph.edge_id(u, v)] = value

    log_state_flow = None
    if data.get('log_state_flow') is not None:
        flows = data['log_state_flow']
        missing = [v for v in range(graph.num_states) if str(v) not in flows]
        if missing:
            raise LabValidationError(f'{source}: log_state_flow misses states {missing[:10]}')
        log_state_flow = np.array([flows[str(v)] for v in range(graph.num_states)])

    return TabularPolicy(
        graph,
        forward_params=forward_params,
        forward_tie=forward_tie,
        backward_logits=backward_logits,
        log_state_flow=log_state_flow,
        log_Z=data['log_Z'],
    )


def save_policy(policy: TabularPolicy, path):
    return write_json_atomic(path, policy_to_document(policy))


def load_policy(path, graph: StateGraph) -> TabularPolicy:
    path = Path(path)
    try:
        document = json.loads(path.read_text(encoding='utf-8'))
    except OSError as exc:
        raise LabValidationError(f'{path}: cannot read policy snapshot ({exc.strerror})')
    except json.JSONDecodeError as exc:
        raise LabValidationError(f'{path}:{exc.lineno}:{exc.colno}: {exc.msg}')
    policy = policy_from_document(document, graph, source=str(path))
    logger.info(f'Loaded {policy!r} from {path}')
    return policy


def distribution_rows(graph: StateGraph, p_model, p_target):
    p_model = np.asarray(p_model, dtype=float)
    p_target = np.asarray(p_target, dtype=float)
    return [
        (x, float(p), float(q), float(abs(p - q)))
        for x, p, q in zip(graph.terminal_ids, p_model, p_target)
    ]


def distribution_csv(graph: StateGraph, p_model, p_target) -> str:
    return csv_text(DISTRIBUTION_HEADER, distribution_rows(graph, p_model, p_target))


def save_distribution(path, graph: StateGraph, p_model, p_target):
    return write_csv_atomic(path, DISTRIBUTION_HEADER, distribution_rows(graph, p_model, p_target))
