"""
Train a tabular GFlowNet, or run a multi-seed comparison.

Usage:
    gfnlab train --graph tree:g=2,h=3 --loss tb --epochs 2000 --trace trace.csv
    gfnlab train --graph set:d=12,S=6 --target product:seed=3,alpha=1.0 --loss td3:beta0=1.0,anneal=2000 --epochs 5000 --batch 64 --seed 11 --trace trace.csv
    gfnlab train --graph set:d=12,S=6 --target product:seed=3 --ablation td3 --seeds 0 1 2 3 4 5 6 7 8 9 --out ablation.csv
"""

from experiments.command import LabCommand
from flows.io import save_distribution, save_policy
from flows.marginals import exact_marginal
from training.config import LossKind, TrainConfig
from training.runners import ABLATION_HEADER, set_generation_sweep, td3_ablation
from training.trainer import TRACE_HEADER, train
from utils import LabValidationError, lab_default, summary_line

ABLATIONS = ('td3', 'sets')


class Command(LabCommand):
    help = 'Train a tabular policy on TB, DB, SubTB, TD3 or KL and trace loss, exact TV and FCS'

    option_defaults = {
        'target': 'uniform',
        'loss': 'tb',
        'epochs': 1000,
        'batch': 16,
        'eta': 0.0,
        'backward': 'uniform',
        'lr_final': 1.0,
        'trace_every': 100,
        'seeds': [0],
    }

    def add_lab_arguments(self, parser):
        parser.add_argument('--graph', default=None, help='Graph option string, e.g. set:d=8,S=4')
        parser.add_argument('--target', default=None, help='Target option string (default: uniform)')
        parser.add_argument('--loss', default=None, help='tb | db | subtb[:lambda=L] | td3[:beta0=B,anneal=E,direction=D] | kl')
        parser.add_argument('--epochs', type=int, default=None, help='Optimisation steps (default: 1000)')
        parser.add_argument('--batch', type=int, default=None, help='Trajectories per step (default: 16)')
        parser.add_argument('--lr', type=float, default=None, help='Learning rate of the logits and state flows')
        parser.add_argument('--lr-logz', type=float, default=None, help='Learning rate of log Z')
        parser.add_argument('--lr-final', type=float, default=None, help='Final fraction of both rates under linear decay (default: 1)')
        parser.add_argument('--eta', type=float, default=None, help='Exploration weight toward uniform children (default: 0)')
        parser.add_argument('--backward', choices=['uniform', 'learned'], default=None, help='Backward policy (default: uniform)')
        parser.add_argument('--trace', default=None, help='Write the epoch,loss,tv,fcs_mean trace CSV here')
        parser.add_argument('--trace-every', type=int, default=None, help='Trace cadence in epochs (default: 100)')
        parser.add_argument('--policy-out', default=None, help='Write the trained policy snapshot here')
        parser.add_argument('--distribution-out', default=None, help='Write the exact terminal distribution CSV here')
        parser.add_argument('--ablation', choices=ABLATIONS, default=None, help='Multi-seed comparison instead of a single run')
        parser.add_argument('--seeds', type=int, nargs='+', default=None, help='Seeds of an ablation run')
        parser.add_argument('--out', default=None, help='Write the ablation CSV (variant,seed,final_tv) here')

    def train_config(self, config, seed) -> TrainConfig:
        return TrainConfig(
            epochs=config['epochs'],
            batch=config['batch'],
            lr_logits=config.get('lr', lab_default('lr_logits', 1e-3)),
            lr_log_z=config.get('lr_logz', lab_default('lr_log_z', 1e-1)),
            eta=config['eta'],
            seed=seed,
            trace_every=config['trace_every'],
            lr_final_fraction=config['lr_final'],
            threads=config.threads,
            backward=config['backward'],
            capacity=config.capacity,
        )

    def perform(self, config):
        graph = self.build_graph(config)
        target = self.build_target(config, graph)
        if config.get('ablation'):
            return self.perform_ablation(config, graph, target)

        kind = LossKind.parse(config['loss'])
        result = train(graph, target, kind, self.train_config(config, config.seed))
        if config.get('trace'):
            self.write_csv(config['trace'], TRACE_HEADER, [row.as_row() for row in result.trace])
        if config.get('policy_out'):
            self.register_output(save_policy(result.policy, config['policy_out']))
        if config.get('distribution_out'):
            p = exact_marginal(result.policy, capacity=config.capacity)
            self.register_output(save_distribution(config['distribution_out'], graph, p, target.probabilities))
        last = result.trace[-1]
        fields = {'loss': last.loss}
        if last.tv is not None:
            fields['tv'] = last.tv
        if last.fcs_mean is not None:
            fields['fcs_mean'] = last.fcs_mean
        return summary_line(**fields)

    def perform_ablation(self, config, graph, target):
        seeds = config['seeds']
        if any(seed < 0 for seed in seeds):
            raise LabValidationError('--seeds must be nonnegative')
        train_config = self.train_config(config, seeds[0])
        if config['ablation'] == 'td3':
            kind = LossKind.parse(config['loss']) if config['loss'].startswith('td3') else LossKind('td3')
            comparison = td3_ablation(graph, target, seeds, train_config, kind.beta0, kind.anneal)
        else:
            comparison = set_generation_sweep(graph, target, seeds, train_config)
        if config.get('out'):
            self.write_csv(config['out'], ABLATION_HEADER, comparison.rows())
        return summary_line(**{name.replace('@', '_'): median for name, median in comparison.medians().items()})
