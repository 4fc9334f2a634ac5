"""
Experiment configuration: command flags layered over an optional JSON config file

Precedence is command defaults < config file < explicit flags. The config
file may only use the option names the subcommand itself declares.
"""

import argparse
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Optional

from rest_framework import serializers

from graphs.serializers import StrictSerializer, flatten_errors
from utils import LabValidationError

logger = logging.getLogger(__name__)

# Options contributed by Django itself; never part of an experiment config
DJANGO_OPTIONS = frozenset({
    'help', 'version', 'verbosity', 'settings', 'pythonpath', 'traceback',
    'no_color', 'force_color', 'skip_checks', 'stdout', 'stderr',
})
NOT_CONFIGURABLE = frozenset({'config', 'record'})


@dataclass
class ExperimentConfig:
    """Fully resolved options of one command invocation."""

    subcommand: str
    options: Dict[str, Any] = field(default_factory=dict)
    config_path: Optional[str] = None

    def __getitem__(self, key):
        return self.options[key]

    def get(self, key, default=None):
        value = self.options.get(key)
        return default if value is None else value

    @property
    def seed(self) -> int:
        return int(self.get('seed', 0))

    @property
    def threads(self) -> int:
        return int(self.get('threads', 1))

    @property
    def capacity(self):
        return self.options.get('capacity')

    def as_record(self) -> dict:
        """JSON-safe view of the options, without Django's own flags."""
        record = {}
        for key, value in self.options.items():
            if key in DJANGO_OPTIONS or key == 'config':
                continue
            if not isinstance(value, (str, int, float, bool, list, dict, type(None))):
                value = str(value)
            record[key] = value
        return record


def _field_for(action):
    if isinstance(action, (argparse._StoreTrueAction, argparse._StoreFalseAction)):
        return serializers.BooleanField(required=False)
    if action.choices is not None:
        child = serializers.ChoiceField(choices=list(action.choices))
    elif action.type is int:
        child = serializers.IntegerField()
    elif action.type is float:
        child = serializers.FloatField()
    else:
        child = serializers.CharField()
    if action.nargs in ('+', '*'):
        return serializers.ListField(child=child, required=False, allow_empty=action.nargs == '*')
    child.required = False
    return child


def config_serializer_class(parser):
    """
    Serializer accepting exactly the optional flags of ``parser``

    Fields are keyed by option destination (``--epochs-per-chunk`` becomes
    ``epochs_per_chunk``); unknown keys are rejected.
    """
    fields = {}
    for action in parser._actions:
        if not action.option_strings or action.dest in DJANGO_OPTIONS or action.dest in NOT_CONFIGURABLE:
            continue
        fields[action.dest] = _field_for(action)
    return type('ExperimentConfigSerializer', (StrictSerializer,), fields)


def load_config_file(path, parser) -> dict:
    path = Path(path)
    try:
        document = json.loads(path.read_text(encoding='utf-8'))
    except OSError as exc:
        raise LabValidationError(f'{path}: cannot read config file ({exc.strerror})')
    except json.JSONDecodeError as exc:
        raise LabValidationError(f'{path}:{exc.lineno}:{exc.colno}: {exc.msg}')
    if not isinstance(document, dict):
        raise LabValidationError(f'{path}: a config file must hold a JSON object')
    serializer = config_serializer_class(parser)(data=document)
    if not serializer.is_valid():
        raise LabValidationError(f'{path}: {"; ".join(flatten_errors(serializer.errors))}')
    values = dict(serializer.validated_data)
    logger.info(f'Loaded {len(values)} option(s) from {path}')
    return values


def resolve_options(subcommand, options, parser, defaults=None) -> ExperimentConfig:
    """
    Layer command defaults, the config file named by ``--config`` and explicit flags

    Flags are explicit when their value is not None (lab flags default to None).
    """
    resolved = dict(defaults or {})
    config_path = options.get('config')
    if config_path:
        resolved.update(load_config_file(config_path, parser))
    for key, value in options.items():
        if value is not None:
            resolved[key] = value
        else:
            resolved.setdefault(key, None)
    return ExperimentConfig(subcommand, resolved, config_path)
