"""
Score a policy snapshot against a target.

Usage:
    gfnlab diagnose fcs --graph tree:g=2,h=3 --policy snap.json -B 4 -m 200 --confidence 0.05 --out fcs.json
    gfnlab diagnose fcs --graph set:d=12,S=6 --target product:seed=3 --policy snap.json --mode importance --k 500
    gfnlab diagnose pitfalls --graph tree:g=2,h=2 --target file:rewards.json --policy snap.json
"""

from diagnostics.fcs import EXACT, IMPORTANCE, fcs
from diagnostics.pitfalls import pitfall_metrics
from experiments.command import LabCommand
from flows.balance import balanced_policy
from flows.io import load_policy
from utils import summary_line


class Command(LabCommand):
    help = 'Flow consistency in sub-graphs with its PAC bound, or the expected-reward and correlation metrics'

    option_defaults = {
        'target': 'uniform',
        'B': 2,
        'm': 100,
        'confidence': 0.05,
        'mode': EXACT,
    }

    def add_lab_arguments(self, parser):
        parser.add_argument('metric', choices=['fcs', 'pitfalls'], help='Which diagnostic to compute')
        parser.add_argument('--graph', default=None, help='Graph option string the policy was trained on')
        parser.add_argument('--target', default=None, help='Target option string (default: uniform)')
        parser.add_argument('--policy', default=None, help='Policy snapshot JSON (default: the exact balanced policy)')
        parser.add_argument('-B', dest='B', type=int, default=None, help='Subset size (default: 2)')
        parser.add_argument('-m', dest='m', type=int, default=None, help='Sampled subsets (default: 100)')
        parser.add_argument('--confidence', type=float, default=None, help='PAC failure probability eta (default: 0.05)')
        parser.add_argument('--mode', choices=[EXACT, IMPORTANCE], default=None, help='Terminal marginals: exact or importance')
        parser.add_argument('--k', type=int, default=None, help='Backward samples per terminal in importance mode')
        parser.add_argument('--out', default=None, help='Write the JSON report here')

    def perform(self, config):
        graph = self.build_graph(config)
        target = self.build_target(config, graph)
        if config.get('policy'):
            policy = load_policy(config['policy'], graph)
        else:
            policy = balanced_policy(graph, target)

        if config['metric'] == 'pitfalls':
            report = pitfall_metrics(policy, target, capacity=config.capacity)
            if config.get('out'):
                self.write_json(config['out'], report.to_document())
            return summary_line(
                expected_reward=report.expected_reward_model,
                correlation=report.correlation,
                accuracy=report.accuracy,
                tv=report.tv,
            )

        report = fcs(
            policy, target, config['B'], config['m'],
            seed=config.seed,
            mode=config['mode'],
            k=config.get('k'),
            confidence=config['confidence'],
            threads=config.threads,
            capacity=config.capacity,
        )
        if config.get('out'):
            self.write_json(config['out'], report.to_document())
        return summary_line(mean=report.mean, pac_bound=report.pac_bound, B=report.subset_size, m=report.samples)
