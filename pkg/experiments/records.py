"""
Optional run records in the database
"""

import logging

from django.db import DatabaseError

from .models import ExperimentRun

logger = logging.getLogger(__name__)


def record_run(config, summary='', outputs=(), status=ExperimentRun.Status.SUCCEEDED, duration=0.0):
    """
    Store one ExperimentRun; database problems are logged and swallowed

    Returns:
        ExperimentRun | None: The saved row, or None when it could not be written
    """
    try:
        run = ExperimentRun.objects.create(
            subcommand=config.subcommand,
            arguments=config.as_record(),
            seed=config.options.get('seed'),
            summary=summary,
            outputs=[str(path) for path in outputs],
            status=status,
            duration_seconds=duration,
        )
    except DatabaseError as exc:
        logger.warning(f'Could not record {config.subcommand} run: {exc}')
        return None
    logger.info(f'Recorded run #{run.pk} ({config.subcommand}, {status})')
    return run
