import csv
import itertools
import math
import tempfile
from io import StringIO
from pathlib import Path

import numpy as np
from django.core.management import call_command
from django.core.management.base import CommandError
from django.test import SimpleTestCase, tag

from flows.balance import balanced_policy
from flows.distances import total_variation
from flows.marginals import exact_marginal
from graphs.builders import state_records
from graphs.state_graph import StateGraph
from training.config import TrainConfig

from .counterexample import G1, G2, G3, G4, HETERO, HOMO, N1, N2, min_tv_under_tying, tied_marginal, wl_counterexample
from .counting import graph_count_ratio, labelled_graph_count, unlabelled_graph_count
from .demo import DEMO_HEADER, TIED, UNTIED, wl_demo
from .exceptions import GraphStateError, TyingError
from .tying import state_partition, tie_map, tied_policy
from .wl import GraphState, is_stable, wl_colors

HEXAGON = GraphState.cycle(6)
TRIANGLES = GraphState.disjoint(GraphState.cycle(3), GraphState.cycle(3))
PATH = GraphState(3, ((0, 1), (1, 2)))
TRIANGLE = GraphState.cycle(3)
FLOOR = math.sqrt(2) - 4 / 3


class GraphStateTests(SimpleTestCase):

    def test_adjacency_round_trip(self):
        state = GraphState.from_adjacency(HEXAGON.adjacency)
        self.assertEqual(state, HEXAGON)
        self.assertEqual(len(TRIANGLES.edges), 6)
        self.assertEqual(PATH.with_node([0, 2]).edges, ((0, 1), (0, 3), (1, 2), (2, 3)))

    def test_invalid_states(self):
        with self.assertRaises(GraphStateError):
            GraphState(3, ((0, 0),))
        with self.assertRaises(GraphStateError):
            GraphState(2, ((0, 2),))
        with self.assertRaises(GraphStateError):
            GraphState.from_adjacency([[0, 1], [0, 0]])
        with self.assertRaises(GraphStateError):
            GraphState.from_adjacency([[1, 0], [0, 0]])


class WLColorTests(SimpleTestCase):

    def test_isomorphic_graphs_share_a_colour(self):
        relabelled = GraphState(6, ((0, 2), (2, 4), (4, 1), (1, 3), (3, 5), (5, 0)))
        self.assertTrue(relabelled.is_isomorphic(HEXAGON))
        self.assertTrue(wl_colors([HEXAGON, relabelled]).same(0, 1))

    def test_hexagon_and_two_triangles_are_indistinguishable(self):
        partition = wl_colors([HEXAGON, TRIANGLES])
        self.assertTrue(partition.same(0, 1))
        self.assertFalse(HEXAGON.is_isomorphic(TRIANGLES))
        self.assertEqual(HEXAGON.wl_hash(), TRIANGLES.wl_hash())

    def test_path_and_triangle_differ(self):
        self.assertFalse(wl_colors([PATH, TRIANGLE]).same(0, 1))

    def test_partition_is_a_fixpoint(self):
        states = [HEXAGON, TRIANGLES, PATH, TRIANGLE, HEXAGON.with_node([0]), TRIANGLES.with_node([0, 3])]
        partition = wl_colors(states)
        self.assertTrue(is_stable(partition, states))
        for colors, state in zip(partition.node_colors, states):
            neighbors = state.neighbor_lists()
            for v, u in itertools.combinations(range(state.num_nodes), 2):
                if colors[v] == colors[u]:
                    self.assertEqual(sorted(colors[w] for w in neighbors[v]), sorted(colors[w] for w in neighbors[u]))

    def test_round_limit(self):
        states = [HEXAGON.with_node([0]), TRIANGLES.with_node([0])]
        self.assertTrue(wl_colors(states, rounds=1).same(0, 1))
        self.assertFalse(wl_colors(states).same(0, 1))


class TyingTests(SimpleTestCase):

    def setUp(self):
        self.instance = wl_counterexample()

    def test_counterexample_ties_the_two_branches(self):
        partition = self.instance.partition
        graph = self.instance.graph
        tied = [members for members in partition.classes().values() if len(members) > 1 and graph.out_degree[members[0]]]
        self.assertEqual(tied, [[N1, N2]])
        self.assertFalse(partition.same(G1, G3))
        self.assertTrue(partition.same(G2, G4))

    def test_children_share_slots_by_colour_order(self):
        graph = self.instance.graph
        tie = tie_map(graph, self.instance.partition)
        self.assertEqual(tie[graph.edge_id(N1, G1)], tie[graph.edge_id(N2, G3)])
        self.assertEqual(tie[graph.edge_id(N1, G2)], tie[graph.edge_id(N2, G4)])
        self.assertEqual(len(set(tie.tolist())), 4)
        policy = tied_policy(graph, self.instance.partition)
        self.assertTrue(policy.is_tied)
        self.assertEqual(len(policy.forward_params), 4)

    def test_distinct_colours_leave_the_policy_untied(self):
        graph = StateGraph(
            state_records([False, False, True, True, True], [GraphState(1), GraphState(2), PATH, TRIANGLE, GraphState(2, ((0, 1),)).with_node()]),
            [(0, 1), (1, 2), (1, 3), (0, 4)],
        )
        partition = state_partition(graph)
        self.assertEqual(len(set(partition.state_colors)), 5)
        np.testing.assert_array_equal(tie_map(graph, partition), np.arange(graph.num_edges))
        self.assertFalse(tied_policy(graph, partition).is_tied)

    def test_out_degree_mismatch(self):
        labels = [GraphState(0), HEXAGON, TRIANGLES] + [HEXAGON.with_node([k]) for k in range(2)] + [
            TRIANGLES.with_node([k]) for k in (0, 1, 2)
        ]
        graph = StateGraph(
            state_records([False, False, False, True, True, True, True, True], labels),
            [(0, 1), (0, 2), (1, 3), (1, 4), (2, 5), (2, 6), (2, 7)],
        )
        with self.assertRaises(TyingError):
            tie_map(graph, state_partition(graph))

    def test_unlabelled_graph(self):
        graph = StateGraph(state_records([False, True]), [(0, 1)])
        with self.assertRaises(GraphStateError):
            state_partition(graph)


class TyingFloorTests(SimpleTestCase):

    def test_target_sums_to_one(self):
        for name in (HETERO, HOMO):
            self.assertAlmostEqual(wl_counterexample(name).target.probabilities.sum(), 1.0, places=12)

    def test_heterogeneous_floor(self):
        floor = min_tv_under_tying(wl_counterexample(HETERO))
        self.assertAlmostEqual(floor.value, FLOOR, places=7)
        self.assertAlmostEqual(floor.a, 1 - 1 / math.sqrt(2), places=3)
        self.assertAlmostEqual(floor.b, 1 - 1 / math.sqrt(2), places=3)
        marginal = tied_marginal(0.5, 1 / 3)
        self.assertAlmostEqual(0.5 * np.abs(marginal - np.array([1, 1, 1, 3]) / 6).sum(), 1 / 6, places=12)

    def test_learnable_targets(self):
        self.assertLess(min_tv_under_tying(np.full(4, 0.25)).value, 1e-9)
        homo = min_tv_under_tying(wl_counterexample(HOMO))
        self.assertLess(homo.value, 1e-9)

    def test_tied_policies_never_beat_the_floor(self):
        instance = wl_counterexample(HETERO)
        rng = np.random.default_rng(0)
        for _ in range(200):
            policy = tied_policy(instance.graph, instance.partition)
            policy.forward_params = rng.normal(scale=3.0, size=len(policy.forward_params))
            tv = total_variation(exact_marginal(policy), instance.target.probabilities)
            self.assertGreaterEqual(tv, FLOOR - 1e-9)

    def test_untied_balanced_policy_is_exact(self):
        instance = wl_counterexample(HETERO)
        policy = balanced_policy(instance.graph, instance.target)
        self.assertLess(total_variation(exact_marginal(policy), instance.target.probabilities), 1e-12)


class GraphCountTests(SimpleTestCase):

    def test_unlabelled_counts(self):
        self.assertEqual([unlabelled_graph_count(n) for n in range(1, 7)], [1, 2, 4, 11, 34, 156])
        self.assertEqual(unlabelled_graph_count(12), 165091172592)

    def test_ratio(self):
        report = graph_count_ratio(3)
        self.assertEqual((report.labelled, report.unlabelled), (1 + 2 + 8, 1 + 2 + 4))
        self.assertEqual(labelled_graph_count(12), 2 ** 66)
        ratio = graph_count_ratio(12).ratio
        self.assertGreater(ratio, 4.4e8)
        self.assertLess(ratio, 4.6e8)
        self.assertLessEqual(ratio, math.factorial(12))


class WLDemoTests(SimpleTestCase):

    def test_demo_rows(self):
        report = wl_demo(HETERO, seeds=[0, 1], config=TrainConfig(epochs=50, lr_logits=0.05))
        self.assertEqual(len(report.runs), 4)
        self.assertAlmostEqual(report.floor, FLOOR, places=7)
        self.assertTrue(report.tied_above_floor)

    @tag('slow')
    def test_tied_training_is_stuck_and_untied_converges(self):
        report = wl_demo(HETERO, seeds=range(20), config=TrainConfig(epochs=3000, lr_logits=0.05, lr_log_z=0.1))
        self.assertTrue(report.tied_above_floor)
        self.assertLess(max(report.final_tvs(UNTIED)), 1e-3)

    @tag('slow')
    def test_homogeneous_target_is_learnable_when_tied(self):
        report = wl_demo(HOMO, seeds=range(3), config=TrainConfig(epochs=3000, lr_logits=0.05, lr_log_z=0.1))
        self.assertLess(max(report.final_tvs(TIED)), 1e-3)


class WLCommandTests(SimpleTestCase):

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.addCleanup(self.tmp.cleanup)

    def test_demo_csv(self):
        path = Path(self.tmp.name) / 'wl.csv'
        out = StringIO()
        call_command('wl', 'demo', seeds=2, epochs=20, out=str(path), stdout=out)
        with path.open(newline='') as handle:
            rows = list(csv.reader(handle))
        self.assertEqual(tuple(rows[0]), DEMO_HEADER)
        self.assertEqual(sorted({row[0] for row in rows[1:]}), [TIED, UNTIED])
        self.assertIn('floor=0.080880 tied_above_floor=true', out.getvalue())

    def test_count(self):
        out = StringIO()
        call_command('wl', 'count', n=4, stdout=out)
        self.assertIn('n=4 labelled=75 unlabelled=18', out.getvalue())

    def test_bad_seed_count(self):
        with self.assertRaises(CommandError) as caught:
            call_command('wl', 'demo', seeds=0, stdout=StringIO())
        self.assertEqual(caught.exception.returncode, 2)
