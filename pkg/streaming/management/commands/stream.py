"""
Stream data chunks through SB or KL updates and audit the error propagation.

Usage:
    gfnlab stream --graph set:d=8,S=4 --chunks c1.json c2.json --update sb --epochs-per-chunk 3000 --audit audit.csv
    gfnlab stream --graph tree:g=2,h=3 --synthetic 3 --chunk-scale 0.5 --update kl:k=8 --trace trace.csv
"""

from experiments.command import LabCommand
from flows.io import save_policy
from streaming.audit import AUDIT_HEADER, propagation_audit
from streaming.chunks import load_chunk, synthetic_chunks
from streaming.config import BEHAVIOURS, EXPLORE, UpdateKind
from streaming.updater import STREAM_TRACE_HEADER, initial_model, run_stream
from training.config import TrainConfig
from utils import LabValidationError, lab_default, summary_line


class Command(LabCommand):
    help = 'Update a GFlowNet chunk by chunk with the SB loss or the KL criterion'

    option_defaults = {
        'target': 'uniform',
        'update': 'sb',
        'epochs_per_chunk': 1000,
        'prior_epochs': 0,
        'batch': 16,
        'eta': 0.0,
        'behaviour': EXPLORE,
        'chunk_scale': 1.0,
        'trace_every': 100,
    }

    def add_lab_arguments(self, parser):
        parser.add_argument('--graph', default=None, help='Graph option string, e.g. set:d=8,S=4')
        parser.add_argument('--target', default=None, help='Prior reward option string (default: uniform)')
        parser.add_argument('--chunks', nargs='+', default=None, help='Chunk JSON files, consumed in order')
        parser.add_argument('--synthetic', type=int, default=None, help='Generate this many seeded chunks instead')
        parser.add_argument('--chunk-scale', type=float, default=None, help='Scale of synthetic log-likelihoods (default: 1)')
        parser.add_argument('--update', default=None, help='sb | kl[:k=K,score=1] (default: sb)')
        parser.add_argument('--epochs-per-chunk', type=int, default=None, help='Optimisation steps per chunk (default: 1000)')
        parser.add_argument('--prior-epochs', type=int, default=None, help='TB epochs for G_0; 0 uses the exact balanced prior (default)')
        parser.add_argument('--batch', type=int, default=None, help='SB trajectories per step (default: 16)')
        parser.add_argument('--lr', type=float, default=None, help='Learning rate of the logits')
        parser.add_argument('--lr-logz', type=float, default=None, help='Learning rate of log Z (SB only)')
        parser.add_argument('--eta', type=float, default=None, help='Exploration weight of SB batches (default: 0)')
        parser.add_argument('--behaviour', choices=BEHAVIOURS, default=None, help='Which model SB batches are drawn from')
        parser.add_argument('--trace', default=None, help='Write the chunk,epoch,loss,tv trace CSV here')
        parser.add_argument('--trace-every', type=int, default=None, help='Trace cadence in epochs (default: 100)')
        parser.add_argument('--audit', default=None, help='Write the propagation audit CSV here')
        parser.add_argument('--policy-out', default=None, help='Write the final policy snapshot here')

    def train_config(self, config, epochs) -> TrainConfig:
        return TrainConfig(
            epochs=epochs,
            batch=config['batch'],
            lr_logits=config.get('lr', lab_default('lr_logits', 1e-3)),
            lr_log_z=config.get('lr_logz', lab_default('lr_log_z', 1e-1)),
            eta=config['eta'],
            seed=config.seed,
            trace_every=config['trace_every'],
            threads=config.threads,
            capacity=config.capacity,
        )

    def load_chunks(self, config, graph):
        files, count = config.get('chunks'), config.get('synthetic')
        if bool(files) == (count is not None):
            raise LabValidationError('give exactly one of --chunks and --synthetic')
        if files:
            chunks = [load_chunk(path, graph) for path in files]
            expected = list(range(1, len(chunks) + 1))
            if [chunk.t for chunk in chunks] != expected:
                raise LabValidationError(f'chunk indices must run {expected} in file order')
            return chunks
        if count < 1:
            raise LabValidationError('--synthetic needs at least one chunk')
        return synthetic_chunks(graph, count, seed=config.seed, scale=config['chunk_scale'])

    def perform(self, config):
        graph = self.build_graph(config)
        prior = self.build_target(config, graph)
        update = UpdateKind.parse(config['update'])
        if config['prior_epochs'] < 0:
            raise LabValidationError('--prior-epochs must be nonnegative')
        chunks = self.load_chunks(config, graph)

        initial = None
        if config['prior_epochs']:
            initial = initial_model(prior, self.train_config(config, config['prior_epochs']))
        run = run_stream(
            prior, chunks, update, self.train_config(config, config['epochs_per_chunk']),
            initial=initial, behaviour=config['behaviour'],
        )
        if config.get('trace'):
            self.write_csv(config['trace'], STREAM_TRACE_HEADER, [row.as_row() for row in run.trace])
        if config.get('policy_out'):
            self.register_output(save_policy(run.final, config['policy_out']))

        fields = {'tv': run.final_tv(config.capacity), 'chunks': len(run.logliks)}
        if config.get('audit'):
            report = propagation_audit(prior, run.policies, run.logliks, capacity=config.capacity)
            self.write_csv(config['audit'], AUDIT_HEADER, report.table())
            fields['audit_holds'] = report.all_hold
        return summary_line(**fields)
