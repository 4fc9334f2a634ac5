"""
Utility functions shared by the gfnlab apps
"""

import csv
import io
import json
import logging
import math
import os
import tempfile
from pathlib import Path

import numpy as np

logger = logging.getLogger(__name__)

DEFAULT_CAPACITY = 1_000_000


class LabError(Exception):
    """Runtime failure inside a lab computation (exit code 1)."""

    exit_code = 1


class LabValidationError(LabError, ValueError):
    """Invalid input or configuration (exit code 2)."""

    exit_code = 2


class CapacityError(LabValidationError):
    """An exact enumeration would exceed the configured guard."""

    def __init__(self, what, size, limit):
        self.what = what
        self.size = size
        self.limit = limit
        super().__init__(
            f'{what} needs {size} entries, above the enumeration guard of {limit} '
            f'(raise GFNLAB_CAPACITY or --capacity to allow it)'
        )


def capacity_limit(override=None):
    """
    Resolve the enumeration guard

    Args:
        override (int | None): Explicit value, e.g. from ``--capacity``

    Returns:
        int: Guard taken from the override, then settings, then the environment
    """
    if override is not None:
        return int(override)
    try:
        from django.conf import settings
        if settings.configured:
            return int(getattr(settings, 'GFNLAB_CAPACITY', DEFAULT_CAPACITY))
    except ImportError:
        pass
    return int(os.getenv('GFNLAB_CAPACITY', DEFAULT_CAPACITY))


def lab_default(key, fallback):
    """Look up one entry of ``settings.GFNLAB_LAB_DEFAULTS``."""
    try:
        from django.conf import settings
        if settings.configured:
            return getattr(settings, 'GFNLAB_LAB_DEFAULTS', {}).get(key, fallback)
    except ImportError:
        pass
    return fallback


def check_capacity(what, size, limit=None):
    limit = capacity_limit(limit)
    if size > limit:
        raise CapacityError(what, size, limit)
    return size


def parse_spec(text):
    """
    Split a ``kind:key=value,key=value`` option string

    Args:
        text (str): e.g. ``tree:g=2,h=3`` or ``equal``

    Returns:
        tuple: (kind, dict of raw string values)

    Examples:
        parse_spec('tree:g=2,h=3') → ('tree', {'g': '2', 'h': '3'})
        parse_spec('file:graphs/t.json') → ('file', {'path': 'graphs/t.json'})
    """
    if text is None or not str(text).strip():
        raise LabValidationError('empty option string')
    text = str(text).strip()
    kind, _, rest = text.partition(':')
    kind = kind.strip().lower()
    params = {}
    if not rest:
        return kind, params
    if '=' not in rest:
        params['path'] = rest
        return kind, params
    for item in rest.split(','):
        if not item.strip():
            continue
        key, sep, value = item.partition('=')
        if not sep:
            raise LabValidationError(f"malformed option '{item}' in '{text}' (expected key=value)")
        params[key.strip()] = value.strip()
    return kind, params


def spec_value(params, key, cast, default=None, required=False):
    """Pop and convert one option from a parsed option string."""
    if key not in params:
        if required:
            raise LabValidationError(f"missing option '{key}'")
        return default
    raw = params.pop(key)
    try:
        return cast(raw)
    except (TypeError, ValueError):
        raise LabValidationError(f"option '{key}' has invalid value '{raw}'")


def reject_leftovers(kind, params):
    if params:
        raise LabValidationError(f"unknown option(s) for '{kind}': {', '.join(sorted(params))}")


def rng_stream(seed, *key):
    """
    Independent generator for one replication, block or trajectory

    The stream depends only on the seed and the key, never on scheduling,
    so results are identical for any worker count.
    """
    if seed is None:
        seed = 0
    if int(seed) < 0 or any(int(k) < 0 for k in key):
        raise LabValidationError('seeds and stream keys must be nonnegative')
    sequence = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.PCG64(sequence))


def format_value(value):
    """Six decimals for summaries, lower-case booleans."""
    if isinstance(value, (bool, np.bool_)):
        return 'true' if value else 'false'
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        if math.isnan(value):
            return 'nan'
        return f'{float(value):.6f}'
    return str(value)


def summary_line(**fields):
    return ' '.join(f'{key}={format_value(value)}' for key, value in fields.items())


def full_precision(value):
    """Shortest repr that round-trips, used in every output file."""
    if isinstance(value, (bool, np.bool_)):
        return 'true' if value else 'false'
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if value is None:
        return ''
    return str(value)


def write_text_atomic(path, text):
    """
    Write a file through a temporary sibling and rename it into place

    Args:
        path (str | Path): Destination
        text (str): Full file contents

    Returns:
        Path: The destination path
    """
    path = Path(path)
    if path.parent and not path.parent.exists():
        path.parent.mkdir(parents=True, exist_ok=True)
    handle = tempfile.NamedTemporaryFile(
        'w', dir=path.parent, prefix=f'.{path.name}.', suffix='.tmp',
        delete=False, encoding='utf-8', newline='',
    )
    try:
        with handle:
            handle.write(text)
        os.replace(handle.name, path)
    except OSError:
        logger.error(f'Could not write {path}')
        if os.path.exists(handle.name):
            os.unlink(handle.name)
        raise
    logger.info(f'Wrote {path}')
    return path


def csv_text(header, rows):
    """CSV document with a fixed header; floats at full precision."""
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator='\n')
    writer.writerow(header)
    for row in rows:
        writer.writerow([full_precision(value) for value in row])
    return buffer.getvalue()


def write_csv_atomic(path, header, rows):
    return write_text_atomic(path, csv_text(header, rows))


def write_json_atomic(path, document):
    return write_text_atomic(path, json.dumps(document, indent=1, sort_keys=True, default=_json_default) + '\n')


def _json_default(value):
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.floating):
        return float(value)
    if isinstance(value, np.bool_):
        return bool(value)
    if isinstance(value, np.ndarray):
        return value.tolist()
    raise TypeError(f'{type(value).__name__} is not JSON serialisable')
