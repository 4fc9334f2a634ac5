"""
Build, load and export state graphs.

Usage:
    gfnlab graph build --kind tree --g 2 --h 2 --out t.json
    gfnlab graph build --kind set --d 4 --S 2 --dot sets.dot
    gfnlab graph build --in t.json --out copy.json
    gfnlab graph build --graph random:states=30,seed=1 --out random.json
"""

from experiments.command import LabCommand
from graphs.builders import build_random_dag, build_regular_tree, build_set_graph, build_split_dag
from graphs.io import export_dot, load_graph, save_graph
from utils import LabValidationError, summary_line

KINDS = ('tree', 'set', 'random', 'split')


class Command(LabCommand):
    help = 'Build a state graph (or load one) and write it as JSON and/or DOT'

    def add_lab_arguments(self, parser):
        parser.add_argument('action', choices=['build'], help='Only "build" is available')
        parser.add_argument('--kind', choices=KINDS, default=None, help='Graph family to build')
        parser.add_argument('--g', type=int, default=None, help='Tree degree')
        parser.add_argument('--h', type=int, default=None, help='Tree depth')
        parser.add_argument('--d', type=int, default=None, help='Deposit size (set) or descendant leaves (split)')
        parser.add_argument('--S', type=int, default=None, help='Set size')
        parser.add_argument('--n', type=int, default=None, help='Terminal count of a split graph')
        parser.add_argument('--states', type=int, default=None, help='State count of a random DAG')
        parser.add_argument('--p', type=float, default=None, help='Extra edge probability of a random DAG')
        parser.add_argument('--graph', default=None, help='Graph option string, e.g. tree:g=2,h=3')
        parser.add_argument('--in', dest='input', default=None, help='Load a graph JSON file instead of building')
        parser.add_argument('--out', default=None, help='Write the graph JSON here')
        parser.add_argument('--dot', default=None, help='Write Graphviz DOT here')

    def perform(self, config):
        graph = self.load_or_build(config)
        if config.get('out'):
            self.register_output(save_graph(graph, config['out']))
        if config.get('dot'):
            self.register_output(export_dot(graph, config['dot']))
        return summary_line(
            states=graph.num_states,
            terminals=graph.num_terminals,
            edges=graph.num_edges,
            T=graph.max_trajectory_length,
        )

    def load_or_build(self, config):
        sources = [key for key in ('kind', 'graph', 'input') if config.get(key)]
        if len(sources) != 1:
            raise LabValidationError('give exactly one of --kind, --graph or --in')
        if config.get('input'):
            return load_graph(config['input'], capacity=config.capacity)
        if config.get('graph'):
            return self.build_graph(config)

        kind = config['kind']
        capacity = config.capacity
        if kind == 'tree':
            return build_regular_tree(self.require(config, 'g'), self.require(config, 'h'), capacity)
        if kind == 'set':
            return build_set_graph(self.require(config, 'd'), self.require(config, 'S'), capacity)
        if kind == 'random':
            return build_random_dag(self.require(config, 'states'), config.seed, config.get('p', 0.2), capacity)
        return build_split_dag(self.require(config, 'n'), self.require(config, 'd'))

    @staticmethod
    def require(config, key):
        value = config.get(key)
        if value is None:
            raise LabValidationError(f'--{key} is required for --kind {config["kind"]}')
        return value
