"""
Simulate state coverage of a sampling policy and compare with the Markov bound.

Usage:
    gfnlab explore --graph tree:g=3,h=4 --trajectories 10 --trials 1000 --out coverage.csv
    gfnlab explore --graph set:d=8,S=4 --trajectories 5 --grid 0.1 0.2 0.5 --policy snap.json
"""

from diagnostics.exploration import COVERAGE_HEADER, DEFAULT_GRID, exploration_coverage
from experiments.command import LabCommand
from flows.io import load_policy
from utils import summary_line


class Command(LabCommand):
    help = 'Estimate P[N_v >= s|S|] for M sampled trajectories against min(1, MK/(s|S|))'

    option_defaults = {
        'trajectories': 10,
        'trials': 1000,
        'grid': list(DEFAULT_GRID),
    }

    def add_lab_arguments(self, parser):
        parser.add_argument('--graph', default=None, help='Graph option string, e.g. tree:g=3,h=4')
        parser.add_argument('--trajectories', type=int, default=None, help='Trajectories per trial, M (default: 10)')
        parser.add_argument('--trials', type=int, default=None, help='Independent trials, at least 100 (default: 1000)')
        parser.add_argument('--grid', type=float, nargs='+', default=None, help='Coverage fractions s')
        parser.add_argument('--K', type=int, default=None, help='States per trajectory cap (default: longest trajectory)')
        parser.add_argument('--policy', default=None, help='Policy snapshot to sample from (default: uniform children)')
        parser.add_argument('--out', default=None, help='Write the s,empirical,bound,vacuous,within_noise CSV here')

    def perform(self, config):
        graph = self.build_graph(config)
        policy = load_policy(config['policy'], graph) if config.get('policy') else None
        report = exploration_coverage(
            graph, config['trajectories'],
            trials=config['trials'],
            seed=config.seed,
            grid=config['grid'],
            K=config.get('K'),
            policy=policy,
            threads=config.threads,
        )
        if config.get('out'):
            self.write_csv(config['out'], COVERAGE_HEADER, report.rows())
        return summary_line(
            states=report.num_states,
            mean_visited=report.mean_visited,
            within_bound=report.all_within_bound,
        )
