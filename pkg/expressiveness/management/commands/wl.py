"""
Show the 1-WL limit on the counterexample, or report state-space counts.

Usage:
    gfnlab wl demo --target hetero --seeds 20 --out wl.csv
    gfnlab wl count --n 12 --out counts.csv
"""

from experiments.command import LabCommand
from expressiveness.counterexample import TARGETS
from expressiveness.counting import COUNT_HEADER, graph_count_ratio, graph_count_table
from expressiveness.demo import DEMO_HEADER, TIED, UNTIED, wl_demo
from training.config import TrainConfig
from utils import LabValidationError, summary_line


class Command(LabCommand):
    help = 'Train tied and untied policies on the 1-WL counterexample, or count labelled vs unlabelled graphs'

    option_defaults = {
        'target': 'hetero',
        'seeds': 20,
        'epochs': 2000,
        'batch': 16,
        'lr': 0.05,
        'lr_logz': 0.1,
        'n': 12,
    }

    def add_lab_arguments(self, parser):
        parser.add_argument('mode', choices=['demo', 'count'], help='demo: tied vs untied training; count: graph counts')
        parser.add_argument('--target', choices=sorted(TARGETS), default=None, help='Counterexample target (default: hetero)')
        parser.add_argument('--seeds', type=int, default=None, help='Number of seeds, 0..N-1 (default: 20)')
        parser.add_argument('--epochs', type=int, default=None, help='TB steps per run (default: 2000)')
        parser.add_argument('--batch', type=int, default=None, help='Trajectories per step (default: 16)')
        parser.add_argument('--lr', type=float, default=None, help='Learning rate of the logits (default: 0.05)')
        parser.add_argument('--lr-logz', type=float, default=None, help='Learning rate of log Z (default: 0.1)')
        parser.add_argument('--n', type=int, default=None, help='Largest node count for count mode (default: 12)')
        parser.add_argument('--out', default=None, help='Write the CSV report here')

    def perform(self, config):
        if config['mode'] == 'count':
            return self.perform_count(config)
        if config['seeds'] < 1:
            raise LabValidationError('--seeds must be at least 1')
        train_config = TrainConfig(
            epochs=config['epochs'],
            batch=config['batch'],
            lr_logits=config['lr'],
            lr_log_z=config['lr_logz'],
            threads=config.threads,
        )
        first = config.seed
        report = wl_demo(config['target'], range(first, first + config['seeds']), train_config)
        if config.get('out'):
            self.write_csv(config['out'], DEMO_HEADER, report.rows())
        return summary_line(
            tied_tv=report.median(TIED),
            untied_tv=report.median(UNTIED),
            floor=report.floor,
            tied_above_floor=report.tied_above_floor,
        )

    def perform_count(self, config):
        if config['n'] < 1:
            raise LabValidationError('--n must be positive')
        if config.get('out'):
            self.write_csv(config['out'], COUNT_HEADER, [row.as_row() for row in graph_count_table(config['n'])])
        report = graph_count_ratio(config['n'])
        return summary_line(n=report.n, labelled=report.labelled, unlabelled=report.unlabelled, ratio=report.ratio)
