import json
import tempfile
from io import StringIO
from pathlib import Path

from django.core.management import call_command
from django.core.management.base import CommandError
from django.test import SimpleTestCase

from utils import CapacityError, LabValidationError

from .builders import (
    GraphKind, build_graph, build_random_dag, build_regular_tree, build_set_graph, build_split_dag,
    set_state_id,
)
from .exceptions import GraphFormatError, GraphValidationError, UnknownStateError
from .io import dot_source, graph_from_document, load_graph, save_graph
from .state_graph import StateGraph, state_records


class RegularTreeTests(SimpleTestCase):

    def test_sizes(self):
        for g, h, states, terminals in [(2, 2, 7, 4), (3, 2, 13, 9), (2, 1, 3, 2), (4, 3, 85, 64)]:
            graph = build_regular_tree(g, h)
            self.assertEqual(graph.num_states, states)
            self.assertEqual(graph.num_terminals, terminals)
            self.assertEqual(graph.num_states, (g ** (h + 1) - 1) // (g - 1))

    def test_bfs_numbering(self):
        graph = build_regular_tree(2, 2)
        self.assertEqual(graph.children(0), (1, 2))
        self.assertEqual(graph.children(1), (3, 4))
        self.assertEqual(graph.terminal_ids, (3, 4, 5, 6))
        self.assertTrue(graph.is_tree())

    def test_star_terminals_at_distance_one(self):
        graph = build_regular_tree(2, 1)
        self.assertEqual([graph.geodesic_depth(x) for x in graph.terminal_ids], [1, 1])

    def test_rejects_bad_parameters(self):
        with self.assertRaises(LabValidationError):
            build_regular_tree(1, 3)
        with self.assertRaises(LabValidationError):
            build_regular_tree(2, 0)

    def test_capacity_guard(self):
        with self.assertRaises(CapacityError):
            build_regular_tree(10, 7, capacity=1000)


class SetGraphTests(SimpleTestCase):

    def test_small_set_graph(self):
        graph = build_set_graph(3, 2)
        self.assertEqual(graph.num_states, 7)
        self.assertEqual(graph.num_terminals, 3)
        self.assertEqual([graph.label(x) for x in graph.terminal_ids], [(1, 2), (1, 3), (2, 3)])

    def test_pair_has_two_parents(self):
        graph = build_set_graph(3, 2)
        pair = set_state_id(3, (1, 2))
        self.assertEqual(graph.label(pair), (1, 2))
        self.assertEqual(graph.parents(pair), (set_state_id(3, (1,)), set_state_id(3, (2,))))

    def test_state_ids_follow_colex_levels(self):
        graph = build_set_graph(5, 3)
        for v in range(graph.num_states):
            self.assertEqual(set_state_id(5, graph.label(v)), v)

    def test_full_scale_set_graph_is_rejected(self):
        with self.assertRaises(CapacityError):
            build_set_graph(24, 18)

    def test_rejects_set_larger_than_deposit(self):
        with self.assertRaises(LabValidationError):
            build_set_graph(3, 4)


class QueryTests(SimpleTestCase):

    def test_reachable_terminals(self):
        tree = build_regular_tree(2, 2)
        self.assertEqual(tree.reachable_terminals(1), (3, 4))
        self.assertEqual(tree.reachable_terminals(5), (5,))
        sets = build_set_graph(3, 2)
        singleton = set_state_id(3, (1,))
        labels = [sets.label(x) for x in sets.reachable_terminals(singleton)]
        self.assertEqual(labels, [(1, 2), (1, 3)])

    def test_every_state_reaches_a_terminal(self):
        graph = build_random_dag(40, seed=3)
        for v in range(graph.num_states):
            self.assertGreaterEqual(graph.reachable_count(v), 1)

    def test_geodesic_depth(self):
        self.assertEqual(build_regular_tree(2, 3).geodesic_depth(0), 0)
        tree = build_regular_tree(2, 3)
        self.assertEqual(tree.geodesic_depth(tree.terminal_ids[-1]), 3)
        sets = build_set_graph(4, 2)
        self.assertEqual(sets.geodesic_depth(set_state_id(4, (1, 3))), 2)
        self.assertEqual(sets.max_trajectory_length, 2)

    def test_adjacency_is_transposed(self):
        graph = build_random_dag(25, seed=7, edge_probability=0.3)
        for u, v in graph.edges():
            self.assertIn(v, graph.children(u))
            self.assertIn(u, graph.parents(v))
        self.assertEqual(sum(len(graph.parents(v)) for v in range(graph.num_states)), graph.num_edges)

    def test_topological_order(self):
        graph = build_random_dag(30, seed=11)
        position = {v: i for i, v in enumerate(graph.topological_order)}
        for u, v in graph.edges():
            self.assertLess(position[u], position[v])

    def test_unknown_state(self):
        graph = build_regular_tree(2, 2)
        with self.assertRaises(UnknownStateError):
            graph.reachable_terminals(99)
        with self.assertRaises(UnknownStateError):
            graph.geodesic_depth(-1)

    def test_split_dag(self):
        graph = build_split_dag(8, 3)
        self.assertEqual(graph.num_terminals, 8)
        self.assertEqual(len(graph.reachable_terminals(1)), 3)
        self.assertEqual(len(graph.reachable_terminals(2)), 5)


class ValidationTests(SimpleTestCase):

    def assertInvariant(self, invariant, flags, edges, initial=0):
        with self.assertRaises(GraphValidationError) as caught:
            StateGraph(state_records(flags), edges, initial=initial)
        self.assertEqual(caught.exception.invariant, invariant)

    def test_cycle(self):
        self.assertInvariant('acyclic', [False, False, False, True], [(0, 1), (1, 2), (2, 1), (2, 3)])

    def test_unreachable_state(self):
        self.assertInvariant('reachable', [False, True, False, True], [(0, 1), (2, 3)])

    def test_terminal_with_children(self):
        self.assertInvariant('terminal-childless', [False, True, True], [(0, 1), (1, 2)])

    def test_undeclared_sink(self):
        self.assertInvariant('terminal-declaration', [False, True, False], [(0, 1), (0, 2)])

    def test_initial_with_parent(self):
        self.assertInvariant('initial-has-no-parents', [False, False, True], [(1, 0), (1, 2), (0, 2)], initial=0)


class GraphFileTests(SimpleTestCase):

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.addCleanup(self.tmp.cleanup)
        self.dir = Path(self.tmp.name)

    def test_round_trip(self):
        for graph in (build_regular_tree(2, 2), build_set_graph(4, 2), build_random_dag(20, seed=2)):
            path = self.dir / 'graph.json'
            save_graph(graph, path)
            self.assertEqual(load_graph(path), graph)
            self.assertEqual(load_graph(path).topological_order, graph.topological_order)

    def test_cycle_file(self):
        path = self.dir / 'cycle.json'
        path.write_text(json.dumps({
            'initial': 0,
            'states': [{'id': 0, 'terminal': False}, {'id': 1, 'terminal': False}, {'id': 2, 'terminal': True}],
            'edges': [[0, 1], [1, 0], [1, 2]],
        }))
        with self.assertRaises(GraphValidationError) as caught:
            load_graph(path)
        self.assertEqual(caught.exception.invariant, 'acyclic')

    def test_syntax_error_reports_position(self):
        path = self.dir / 'broken.json'
        path.write_text('{"initial": 0,\n "states": [}')
        with self.assertRaisesRegex(GraphFormatError, r'broken\.json:2:'):
            load_graph(path)

    def test_field_errors_name_the_field(self):
        document = {'initial': 0, 'states': [{'id': 0, 'terminal': 'maybe'}], 'edges': []}
        with self.assertRaisesRegex(GraphFormatError, r'states\[0\]\.terminal'):
            graph_from_document(document)

    def test_unknown_keys_rejected(self):
        document = build_regular_tree(2, 1).canonical()
        document['colour'] = 'red'
        with self.assertRaisesRegex(GraphFormatError, 'colour'):
            graph_from_document(document)

    def test_dot_marks_terminals(self):
        source = dot_source(build_regular_tree(2, 1))
        self.assertIn('1 [label="1", shape=doublecircle];', source)
        self.assertIn('0 -> 2;', source)


class GraphKindTests(SimpleTestCase):

    def test_parse(self):
        self.assertEqual(GraphKind.parse('tree:g=2,h=3').params, {'g': 2, 'h': 3})
        self.assertEqual(build_graph('set:d=4,S=2').num_terminals, 6)
        self.assertEqual(build_graph('split:n=6,d=2').num_terminals, 6)

    def test_unknown_kind_and_option(self):
        with self.assertRaises(LabValidationError):
            GraphKind.parse('lattice:n=3')
        with self.assertRaises(LabValidationError):
            GraphKind.parse('tree:g=2,h=3,w=1')


class GraphCommandTests(SimpleTestCase):

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.addCleanup(self.tmp.cleanup)
        self.dir = Path(self.tmp.name)

    def test_build_and_reload(self):
        out = StringIO()
        path = self.dir / 't.json'
        call_command('graph', 'build', kind='tree', g=2, h=2, out=str(path), stdout=out)
        self.assertEqual(out.getvalue().strip(), 'states=7 terminals=4 edges=6 T=2')
        copy = self.dir / 'copy.json'
        out = StringIO()
        call_command('graph', 'build', input=str(path), out=str(copy), stdout=out)
        self.assertEqual(out.getvalue().strip(), 'states=7 terminals=4 edges=6 T=2')
        self.assertEqual(path.read_text(), copy.read_text())

    def test_missing_parameter_is_a_validation_error(self):
        with self.assertRaises(CommandError) as caught:
            call_command('graph', 'build', kind='tree', g=2, stdout=StringIO())
        self.assertEqual(caught.exception.returncode, 2)
