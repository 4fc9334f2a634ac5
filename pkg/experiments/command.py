"""
Base class of every lab management command
"""

import logging
import time

from django.conf import settings
from django.core.management.base import BaseCommand, CommandError

from flows.targets import build_target
from graphs.builders import build_graph
from utils import LabError, LabValidationError, write_csv_atomic, write_json_atomic, write_text_atomic

from .config import resolve_options
from .models import ExperimentRun
from .records import record_run

logger = logging.getLogger(__name__)


class LabCommand(BaseCommand):
    """
    Shared flags, config layering, error translation and run records

    Subclasses implement ``add_lab_arguments`` and ``perform``; ``perform``
    gets the resolved ExperimentConfig and returns the one-line summary.
    Lab flags default to None so a config file can fill them in.
    """

    requires_system_checks = []
    option_defaults = {}

    def add_arguments(self, parser):
        self.add_lab_arguments(parser)
        common = parser.add_argument_group('common lab options')
        common.add_argument('--seed', type=int, default=None, help='Seed for all random streams (default: 0)')
        common.add_argument('--threads', type=int, default=None, help='Worker threads (default: GFNLAB_DEFAULT_THREADS)')
        common.add_argument('--config', default=None, help='JSON file of option values; explicit flags take precedence')
        common.add_argument('--capacity', type=int, default=None, help='Override the enumeration guard (GFNLAB_CAPACITY)')
        common.add_argument('--record', action='store_true', default=None, help='Store an ExperimentRun row for this invocation')

    def add_lab_arguments(self, parser):
        pass

    def perform(self, config):
        raise NotImplementedError('subclasses of LabCommand must provide a perform() method')

    @property
    def subcommand(self) -> str:
        return type(self).__module__.rsplit('.', 1)[-1]

    def handle(self, *args, **options):
        parser = self.create_parser('gfnlab', self.subcommand)
        defaults = {'seed': 0, 'threads': settings.GFNLAB_DEFAULT_THREADS, 'record': False, **self.option_defaults}
        started = time.monotonic()
        self.outputs = []
        config = None
        try:
            config = resolve_options(self.subcommand, options, parser, defaults)
            self.check_common(config)
            summary = self.perform(config)
        except LabValidationError as exc:
            self.finish(config, '', ExperimentRun.Status.INVALID, started)
            raise CommandError(str(exc), returncode=exc.exit_code)
        except LabError as exc:
            logger.error(f'{self.subcommand} failed: {exc}')
            self.finish(config, '', ExperimentRun.Status.FAILED, started)
            raise CommandError(str(exc), returncode=exc.exit_code)
        self.finish(config, summary, ExperimentRun.Status.SUCCEEDED, started)
        self.stdout.write(self.style.SUCCESS(summary))

    def check_common(self, config):
        if config.seed < 0:
            raise LabValidationError('--seed must be nonnegative')
        if config.threads < 1:
            raise LabValidationError('--threads must be at least 1')
        if config.capacity is not None and config.capacity < 1:
            raise LabValidationError('--capacity must be positive')

    def finish(self, config, summary, status, started):
        if config is None or not config.get('record'):
            return
        record_run(config, summary, self.outputs, status, time.monotonic() - started)

    # Helpers for subclasses

    def build_graph(self, config, key='graph'):
        text = config.get(key)
        if not text:
            raise LabValidationError(f'--{key.replace("_", "-")} is required')
        return build_graph(text, capacity=config.capacity)

    def build_target(self, config, graph, key='target'):
        return build_target(config.get(key, 'uniform'), graph)

    def write_csv(self, path, header, rows):
        self.outputs.append(write_csv_atomic(path, header, rows))

    def write_json(self, path, document):
        self.outputs.append(write_json_atomic(path, document))

    def write_text(self, path, text):
        self.outputs.append(write_text_atomic(path, text))

    def register_output(self, path):
        self.outputs.append(path)
