"""
Measure the TV caused by a single-edge imbalance and check it against the bounds.

Usage:
    gfnlab sensitivity --graph tree:g=2,h=2 --delta 1 --F 1 --split equal
    gfnlab sensitivity --graph tree:g=2,h=3 --edge root:0 --delta 1.0 --split dirichlet:alpha=1 --reps 100000 --seed 7 --out report.csv
    gfnlab sensitivity --graph split:n=8,d=3 --target kmodes:K=2,R=2 --edge 0-1 --delta 0.5 --split concentrated
"""

from experiments.command import LabCommand
from graphs.builders import GraphKind
from sensitivity.analysis import run_sensitivity
from sensitivity.bounds import REPORT_HEADER
from sensitivity.imbalance import ImbalanceModel, SplitRule, parse_edge
from utils import summary_line


class Command(LabCommand):
    help = 'Inject a single-edge imbalance into a balanced network and report TV against every applicable bound'

    option_defaults = {
        'target': 'uniform',
        'edge': 'root:0',
        'delta': 1.0,
        'F': 1.0,
        'split': 'proportional',
    }

    def add_lab_arguments(self, parser):
        parser.add_argument('--graph', default=None, help='Graph option string, e.g. tree:g=2,h=3')
        parser.add_argument('--target', default=None, help='Target option string (default: uniform)')
        parser.add_argument('--edge', default=None, help='Imbalanced edge: root:<i> or <u>-<v> (default: root:0)')
        parser.add_argument('--delta', type=float, default=None, help='Extra flow on the edge (default: 1)')
        parser.add_argument('--F', type=float, default=None, help='Total flow of the balanced network (default: 1)')
        parser.add_argument(
            '--split', default=None,
            help='equal | concentrated[:leaf=ID] | dirichlet:alpha=A[,seed=S] | proportional (default)',
        )
        parser.add_argument('--reps', type=int, default=None, help='Monte Carlo replications for a dirichlet split')
        parser.add_argument('--out', default=None, help='Write the bound report CSV here')

    def perform(self, config):
        graph = self.build_graph(config)
        target = self.build_target(config, graph)
        model = ImbalanceModel(graph, target, config['F'])
        edge = parse_edge(graph, config['edge'])
        split = SplitRule.parse(config['split'])
        kind = GraphKind.parse(config['graph'])
        tree_shape = (kind.params['g'], kind.params['h']) if kind.kind == 'tree' else None

        result = run_sensitivity(
            model, edge, config['delta'], split,
            reps=config.get('reps'),
            seed=config.seed,
            threads=config.threads,
            tree_shape=tree_shape,
            capacity=config.capacity,
        )
        if config.get('out'):
            self.write_csv(config['out'], REPORT_HEADER, result.rows())

        primary = result.primary
        fields = {
            'tv': result.tv,
            'lower': primary.lower,
            'upper': primary.upper,
            'contained': result.all_asserted_contained,
        }
        if result.estimate is not None:
            fields['stderr'] = result.estimate.stderr
        return summary_line(**fields)
