#!/usr/bin/env python
"""
gfnlab: one binary for every lab workflow

Each subcommand is the Django management command of the same name, so
``gfnlab train ...`` and ``python manage.py train ...`` behave alike.

Exit codes: 0 success, 2 invalid input or usage, 1 runtime failure.
"""

import logging
import os
import sys

__version__ = '0.1.0'

SUBCOMMANDS = ('graph', 'sensitivity', 'train', 'stream', 'diagnose', 'wl', 'explore')

logger = logging.getLogger('gfnlab')


def usage() -> str:
    lines = [
        'usage: gfnlab <subcommand> [options]',
        '       gfnlab --version',
        '',
        'subcommands:',
    ]
    lines.extend(f'  {name}' for name in SUBCOMMANDS)
    lines.append('')
    lines.append("Run 'gfnlab <subcommand> --help' for the options of one subcommand.")
    return '\n'.join(lines)


def version() -> str:
    import django
    import numpy

    return f'gfnlab {__version__} (Django {django.get_version()}, numpy {numpy.__version__})'


def _setup():
    os.environ.setdefault('DJANGO_SETTINGS_MODULE', 'config.settings')
    import django

    django.setup()


def run(argv=None) -> int:
    """
    Dispatch one gfnlab invocation and return its exit code

    Args:
        argv: Arguments without the program name (defaults to sys.argv[1:])
    """
    argv = list(sys.argv[1:] if argv is None else argv)
    if not argv or argv[0] in ('-h', '--help'):
        stream = sys.stdout if argv else sys.stderr
        stream.write(usage() + '\n')
        return 0 if argv else 2
    if argv[0] == '--version':
        sys.stdout.write(version() + '\n')
        return 0

    subcommand, rest = argv[0], argv[1:]
    if subcommand not in SUBCOMMANDS:
        sys.stderr.write(f"gfnlab: unknown subcommand '{subcommand}'\n\n{usage()}\n")
        return 2

    _setup()
    from django.core.management import get_commands, load_command_class

    command = load_command_class(get_commands()[subcommand], subcommand)
    try:
        command.run_from_argv(['gfnlab', subcommand, *rest])
    except SystemExit as exc:
        # argparse usage errors and CommandError both end here
        code = exc.code
        if code is None:
            return 0
        return code if isinstance(code, int) else 1
    except Exception as exc:
        logger.error(f'{subcommand} crashed: {exc}', exc_info=True)
        return 1
    return 0


def main():
    sys.exit(run())


if __name__ == '__main__':
    main()
