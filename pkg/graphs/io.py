"""
Graph JSON documents and DOT export
"""

import json
import logging
from pathlib import Path

from utils import check_capacity, write_text_atomic

from .exceptions import GraphFormatError
from .serializers import GraphDocumentSerializer, flatten_errors
from .state_graph import StateGraph, StateRecord

logger = logging.getLogger(__name__)


def graph_to_document(graph: StateGraph) -> dict:
    return graph.canonical()


def graph_from_document(document, source='<document>', capacity=None) -> StateGraph:
    """
    Validate a parsed JSON document and build the graph

    Raises:
        GraphFormatError: field-level problems, one line per field
        GraphValidationError: structural invariant violations
    """
    serializer = GraphDocumentSerializer(data=document)
    if not serializer.is_valid():
        details = '; '.join(flatten_errors(serializer.errors))
        raise GraphFormatError(f'{source}: {details}')
    data = serializer.validated_data
    check_capacity(f'{source} states', len(data['states']), capacity)
    records = [StateRecord(item['id'], item['terminal'], item.get('label')) for item in data['states']]
    return StateGraph(records, [tuple(edge) for edge in data['edges']], initial=data['initial'])


def load_graph(path, capacity=None) -> StateGraph:
    path = Path(path)
    try:
        text = path.read_text(encoding='utf-8')
    except OSError as exc:
        raise GraphFormatError(f'{path}: cannot read graph file ({exc.strerror})')
    try:
        document = json.loads(text)
    except json.JSONDecodeError as exc:
        raise GraphFormatError(f'{path}:{exc.lineno}:{exc.colno}: {exc.msg}')
    graph = graph_from_document(document, source=str(path), capacity=capacity)
    logger.info(f'Loaded {graph!r} from {path}')
    return graph


def save_graph(graph: StateGraph, path):
    text = json.dumps(graph_to_document(graph), indent=1, sort_keys=True) + '\n'
    return write_text_atomic(path, text)


def dot_source(graph: StateGraph) -> str:
    """Graphviz source; terminals are drawn as double circles."""
    lines = ['digraph state_graph {', '  rankdir=TB;']
    for record in graph.states:
        shape = 'doublecircle' if record.terminal else 'circle'
        extra = ', style=bold' if record.id == graph.initial else ''
        lines.append(f'  {record.id} [label="{record.id}", shape={shape}{extra}];')
    for u, v in graph.edges():
        lines.append(f'  {u} -> {v};')
    lines.append('}')
    return '\n'.join(lines) + '\n'


def export_dot(graph: StateGraph, path):
    return write_text_atomic(path, dot_source(graph))
