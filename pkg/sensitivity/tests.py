import csv
import math
import tempfile
from io import StringIO
from pathlib import Path

import numpy as np
from django.core.management import call_command
from django.core.management.base import CommandError
from django.test import SimpleTestCase, tag
from scipy import special

from flows.distances import total_variation
from flows.targets import TargetDistribution, kmodes_target, uniform_target
from graphs.builders import build_random_dag, build_regular_tree, build_split_dag
from graphs.exceptions import GraphValidationError
from utils import LabValidationError

from .analysis import run_sensitivity
from .bounds import (
    REPORT_HEADER, BoundReport, dag_bounds, epsilon_to_delta, epsilon_uniform_bounds, imbalance_envelope,
    kmode_bounds, one_mode_bounds, tree_bounds,
)
from .dirichlet import dirichlet_expected_tv_closed, dirichlet_expected_tv_mc
from .imbalance import ImbalanceModel, ImbalanceSpec, SplitRule, imbalanced_distribution, parse_edge
from .special import betainc
from .sweeps import dag_sweep, kmode_sweep, tree_sweep

TREE_SHAPES = [(g, h) for g in (2, 3, 4) for h in (1, 2, 3, 4)]


class ImbalanceTests(SimpleTestCase):

    def setUp(self):
        self.graph = build_regular_tree(2, 2)
        self.target = uniform_target(self.graph)

    def distribution(self, split, delta=1.0):
        spec = ImbalanceSpec((0, 1), delta, SplitRule.parse(split))
        return imbalanced_distribution(self.graph, self.target, spec, F=1.0)

    def test_equal_split(self):
        np.testing.assert_allclose(self.distribution('equal'), [0.375, 0.375, 0.125, 0.125], atol=1e-15)

    def test_concentrated_split(self):
        np.testing.assert_allclose(self.distribution('concentrated:leaf=3'), [0.625, 0.125, 0.125, 0.125], atol=1e-15)

    def test_zero_delta_keeps_target(self):
        for split in ('equal', 'concentrated', 'proportional', 'dirichlet:alpha=2,seed=4'):
            np.testing.assert_array_equal(self.distribution(split, delta=0.0), self.target.probabilities)

    def test_proportional_on_uniform_tree_is_equal(self):
        np.testing.assert_allclose(self.distribution('proportional'), self.distribution('equal'), atol=1e-14)

    def test_leaf_must_descend(self):
        with self.assertRaises(LabValidationError):
            self.distribution('concentrated:leaf=5')

    def test_dirichlet_checks(self):
        with self.assertRaises(LabValidationError):
            SplitRule.parse('dirichlet:alpha=0')
        with self.assertRaises(LabValidationError):
            self.distribution('dirichlet:alpha=1/2/3')
        shares = ImbalanceModel(self.graph, self.target).shares((0, 1), SplitRule.parse('dirichlet:alpha=1/2'))
        self.assertAlmostEqual(shares.sum(), 1.0, places=14)

    def test_unknown_rule(self):
        with self.assertRaises(LabValidationError):
            SplitRule.parse('halves')

    def test_negative_delta(self):
        with self.assertRaises(LabValidationError):
            ImbalanceSpec((0, 1), -0.5)

    def test_parse_edge(self):
        self.assertEqual(parse_edge(self.graph, 'root:1'), (0, 2))
        self.assertEqual(parse_edge(self.graph, '1-3'), (1, 3))
        self.assertEqual(parse_edge(self.graph, '2->6'), (2, 6))
        with self.assertRaises(GraphValidationError):
            parse_edge(self.graph, '0-3')
        with self.assertRaises(LabValidationError):
            parse_edge(self.graph, 'root:2')

    def test_tv_formula_matches_distribution(self):
        rng = np.random.default_rng(3)
        graph = build_random_dag(30, seed=5, edge_probability=0.3)
        target = TargetDistribution.from_rewards(graph, rng.uniform(0.1, 2.0, graph.num_terminals))
        model = ImbalanceModel(graph, target, F=2.5)
        for u, v in graph.edges()[:15]:
            d = graph.reachable_count(v)
            shares = rng.dirichlet(np.ones(d)) if d > 1 else np.ones(1)
            mu = model.distribution((u, v), 1.7, shares)
            self.assertAlmostEqual(mu.sum(), 1.0, places=12)
            self.assertAlmostEqual(model.tv((u, v), 1.7, shares), total_variation(mu, target.probabilities), places=12)

    def test_proportional_split_stays_in_envelope(self):
        rng = np.random.default_rng(8)
        graph = build_random_dag(35, seed=2, edge_probability=0.25)
        target = TargetDistribution.from_rewards(graph, rng.uniform(0.1, 2.0, graph.num_terminals))
        model = ImbalanceModel(graph, target, F=1.0)
        for edge in graph.edges():
            shares = model.shares(edge, SplitRule())
            self.assertAlmostEqual(shares.sum(), 1.0, places=12)
            envelope = imbalance_envelope(model.pi, model.positions(edge), 1.0, 0.8)
            self.assertTrue(envelope.contains(model.tv(edge, 0.8, shares)))


class BoundTests(SimpleTestCase):

    def test_tree_bounds(self):
        self.assertEqual(tuple(tree_bounds(2, 2, 1, 1)), (0.25, 0.375))
        self.assertEqual(tuple(tree_bounds(3, 2, 1, 0)), (0.0, 0.0))
        uppers = [tree_bounds(2, h, 1, 1).upper for h in range(1, 12)]
        self.assertTrue(all(a < b for a, b in zip(uppers, uppers[1:])))
        self.assertLess(uppers[-1], 0.5)
        with self.assertRaises(LabValidationError):
            tree_bounds(1, 2, 1, 1)

    def test_dag_bounds(self):
        lower, upper = dag_bounds(4, 2, 1, 1)
        self.assertAlmostEqual(lower, 0.125, places=15)
        self.assertAlmostEqual(upper, 0.625, places=15)
        self.assertEqual(tuple(dag_bounds(6, 3, 2, 0)), (0.0, 0.0))
        for d in (0, 4):
            with self.assertRaises(LabValidationError):
                dag_bounds(4, d, 1, 1)

    def test_dag_bounds_hold_for_equal_split_tree(self):
        graph = build_regular_tree(2, 3)
        model = ImbalanceModel(graph, uniform_target(graph))
        edge = (0, 1)
        value = model.tv(edge, 1.0, model.shares(edge, SplitRule('equal')))
        self.assertTrue(dag_bounds(8, 4, 1.0, 1.0).contains(value))

    def test_kmode_closed_forms(self):
        lower, upper = kmode_bounds(8, 2, 2, 3, 1, 1.0, 0.5)
        self.assertAlmostEqual(lower, 26 / 144, places=14)
        self.assertAlmostEqual(upper, 42 / 144, places=14)
        self.assertEqual(tuple(kmode_bounds(8, 2, 2, 3, 1, 1.0, 0.0)), (0.0, 0.0))

    def test_kmode_parameter_checks(self):
        with self.assertRaises(LabValidationError):
            kmode_bounds(8, 2, 2, 3, 3, 1.0, 0.5)
        with self.assertRaises(LabValidationError):
            kmode_bounds(8, 3, 3, 3, 1, 1.0, 0.5)
        with self.assertRaises(LabValidationError):
            kmode_bounds(8, 2, 2, 8, 1, 1.0, 0.5)

    def test_stated_kmode_upper_can_fail(self):
        graph = build_split_dag(8, 3)
        target = kmodes_target(graph, 2, 2, modes=[0, 3])
        model = ImbalanceModel(graph, target, F=1.0)
        edge = (0, 1)
        value = model.tv(edge, 0.5, model.shares(edge, SplitRule('concentrated')))
        self.assertAlmostEqual(value, 11 / 36, places=14)
        self.assertFalse(kmode_bounds(8, 2, 2, 3, 1, 1.0, 0.5).contains(value))
        self.assertTrue(imbalance_envelope(model.pi, model.positions(edge), 1.0, 0.5).contains(value))

    def test_one_mode_closed_forms(self):
        lower, upper = kmode_bounds(8, 1, 2, 3, 1, 1.0, 0.5)
        self.assertAlmostEqual(lower, 5 / 56, places=14)
        self.assertAlmostEqual(upper, 29 / 168, places=14)
        lower, upper = kmode_bounds(8, 1, 2, 3, 0, 1.0, 0.5)
        self.assertAlmostEqual(lower, 19 / 168, places=14)
        self.assertAlmostEqual(upper, 1 / 3, places=14)
        self.assertEqual(tuple(kmode_bounds(8, 1, 2, 3, 1, 1.0, 0.0)), (0.0, 0.0))
        with self.assertRaises(LabValidationError):
            one_mode_bounds(8, 2, 3, 2, 1.0, 0.5)

    def test_one_mode_forms_against_exact_tv(self):
        edge = (0, 1)
        # mode outside the edge, then below it with R >= n/2
        for mode, R, b in ((3, 2, 0), (0, 5, 1)):
            graph = build_split_dag(8, 3)
            model = ImbalanceModel(graph, kmodes_target(graph, 1, R, modes=[mode]), F=1.0)
            stated = kmode_bounds(8, 1, R, 3, b, 1.0, 0.5)
            rng = np.random.default_rng(b)
            for shares in [np.full(3, 1 / 3)] + list(np.eye(3)) + list(rng.dirichlet(np.ones(3), size=50)):
                self.assertTrue(stated.contains(model.tv(edge, 0.5, shares)))

    def test_one_mode_stated_upper_fails_below_half(self):
        graph = build_split_dag(8, 3)
        model = ImbalanceModel(graph, kmodes_target(graph, 1, 2, modes=[0]), F=1.0)
        edge = (0, 1)
        value = model.tv(edge, 0.5, np.full(3, 1 / 3))
        self.assertAlmostEqual(value, 5 / 28, places=14)
        self.assertFalse(kmode_bounds(8, 1, 2, 3, 1, 1.0, 0.5).contains(value))
        self.assertTrue(imbalance_envelope(model.pi, model.positions(edge), 1.0, 0.5).contains(value))

    def test_epsilon_to_delta(self):
        self.assertEqual(epsilon_to_delta(0.0, 1.0), 0.0)
        self.assertAlmostEqual(epsilon_to_delta(math.log(2) ** 2, 1.0), 1.0, places=14)
        self.assertAlmostEqual(epsilon_to_delta(1.0, 0.5), 0.5 * (math.e - 1), places=14)
        with self.assertRaises(LabValidationError):
            epsilon_to_delta(-0.1, 1.0)

    def test_epsilon_form_matches_dag_bounds(self):
        for n in (4, 9, 30):
            for d in range(1, n):
                for eps in (0.0, 0.01, 0.5, 2.0):
                    for flow, F in ((0.3, 1.0), (1.0, 5.0)):
                        delta = epsilon_to_delta(eps, flow)
                        in_eps = epsilon_uniform_bounds(eps, flow, n, d, F)
                        self.assertAlmostEqual(in_eps.lower, 2 * dag_bounds(n, d, F, delta).lower, delta=1e-12)
                        pi = np.full(n, 1.0 / n)
                        envelope = imbalance_envelope(pi, range(d), F, delta)
                        self.assertAlmostEqual(in_eps.lower, envelope.lower, delta=1e-12)
                        self.assertAlmostEqual(in_eps.upper, envelope.upper, delta=1e-12)

    def test_report_row(self):
        report = BoundReport('tree', 0.25, 0.25 + 5e-10, 0.375)
        self.assertTrue(report.contained)
        self.assertEqual(report.as_row(), ('tree', 0.25, 0.25 + 5e-10, 0.375, True))
        self.assertFalse(BoundReport('tree', 0.25, 0.3751, 0.375).contained)
        self.assertEqual(REPORT_HEADER, ('bound_name', 'lower', 'exact_or_mean', 'upper', 'contained'))


class SweepTests(SimpleTestCase):

    def test_tree_bounds_are_tight(self):
        summary = tree_sweep(TREE_SHAPES, flows=(0.5, 1.0, 10.0), deltas=(0.1, 1.0, 10.0), splits=200)
        self.assertEqual(summary.cases, len(TREE_SHAPES) * 9 * 202)
        self.assertTrue(summary.all_contained)
        self.assertLess(summary.max_lower_gap, 1e-9)
        self.assertLess(summary.max_upper_gap, 1e-9)

    def test_random_dags(self):
        summary = dag_sweep(50, seed=1)
        self.assertGreater(summary.cases, 40)
        self.assertTrue(summary.all_contained)

    def test_kmode_small_grid(self):
        summary = kmode_sweep((6, 8))
        self.assertTrue(summary.all_contained)
        self.assertLess(summary.reported_rate, 1.0)

    @tag('slow')
    def test_random_dags_full(self):
        summary = dag_sweep(500, max_states=64, seed=2)
        self.assertTrue(summary.all_contained)

    @tag('slow')
    def test_kmode_full_grid(self):
        self.assertTrue(kmode_sweep((8, 12, 16, 24, 32)).all_contained)


class SpecialFunctionTests(SimpleTestCase):

    def test_uniform_beta(self):
        self.assertAlmostEqual(betainc(1, 1, 0.25), 0.25, places=15)

    def test_matches_scipy(self):
        for a in (0.3, 1.0, 2.5, 7.0, 40.0):
            for b in (0.5, 1.0, 3.0, 21.0, 150.0):
                for x in (1e-4, 0.01, 0.125, 0.3, 0.5, 0.77, 0.999):
                    self.assertAlmostEqual(betainc(a, b, x), special.betainc(a, b, x), delta=1e-12)

    def test_edges_and_errors(self):
        self.assertEqual(betainc(2, 3, 0.0), 0.0)
        self.assertEqual(betainc(2, 3, 1.0), 1.0)
        with self.assertRaises(LabValidationError):
            betainc(0, 1, 0.5)
        with self.assertRaises(LabValidationError):
            betainc(1, 1, 1.5)


class DirichletTests(SimpleTestCase):

    def setUp(self):
        self.graph = build_regular_tree(2, 3)
        self.model = ImbalanceModel(self.graph, uniform_target(self.graph), F=1.0)

    def test_exact_lambda_by_hand(self):
        closed = dirichlet_expected_tv_closed(4, 2, 1.0, 1.0, 1.0)
        self.assertAlmostEqual(closed.lambda_exact, 0.3125, places=14)

    def test_single_leaf(self):
        closed = dirichlet_expected_tv_closed(8, 1, 2.0, 1.0, 0.5)
        self.assertAlmostEqual(closed.exact, 0.5 * 7 / (8 * 1.5), places=14)
        self.assertIsNone(closed.draft)
        self.assertIsNone(closed.corollary)
        unit = dirichlet_expected_tv_closed(8, 1, 1.0, 1.0, 0.5)
        self.assertAlmostEqual(2 * unit.corollary, unit.exact, places=14)

    def test_zero_delta(self):
        closed = dirichlet_expected_tv_closed(8, 3, 1.0, 1.0, 0.0)
        self.assertEqual((closed.exact, closed.draft, closed.corollary), (0.0, 0.0, 0.0))

    def test_asymmetric_alpha_rejected(self):
        with self.assertRaisesRegex(LabValidationError, 'symmetric'):
            dirichlet_expected_tv_closed(8, 3, [1.0, 2.0, 1.0], 1.0, 1.0)

    def test_monte_carlo_matches_exact_expectation(self):
        estimate = dirichlet_expected_tv_mc(self.model, (0, 1), 1.0, 1.0, reps=20000, seed=7)
        closed = dirichlet_expected_tv_closed(8, 4, 1.0, 1.0, 1.0)
        self.assertLess(abs(estimate.mean - closed.exact), 4 * estimate.stderr)
        self.assertTrue(estimate.all_within_bounds)
        lower, upper = dag_bounds(8, 4, 1.0, 1.0)
        self.assertLessEqual(lower, estimate.mean)
        self.assertLessEqual(estimate.mean, upper)

    def test_monte_carlo_is_thread_independent(self):
        one = dirichlet_expected_tv_mc(self.model, (0, 1), 1.0, 0.5, reps=3500, seed=3, threads=1)
        three = dirichlet_expected_tv_mc(self.model, (0, 1), 1.0, 0.5, reps=3500, seed=3, threads=3)
        self.assertEqual(one.mean, three.mean)
        self.assertEqual(one.stderr, three.stderr)

    def test_monte_carlo_single_leaf(self):
        graph = build_regular_tree(2, 1)
        model = ImbalanceModel(graph, uniform_target(graph), F=1.0)
        estimate = dirichlet_expected_tv_mc(model, (0, 1), 1.0, 3.0, reps=200)
        self.assertAlmostEqual(estimate.mean, 0.25, places=14)
        self.assertEqual(estimate.stderr, 0.0)

    def test_monte_carlo_checks(self):
        with self.assertRaises(LabValidationError):
            dirichlet_expected_tv_mc(self.model, (0, 1), 1.0, 1.0, reps=50)
        estimate = dirichlet_expected_tv_mc(self.model, (0, 1), 0.0, 1.0, reps=100)
        self.assertEqual((estimate.mean, estimate.stderr), (0.0, 0.0))

    def test_run_reports_closed_forms(self):
        result = run_sensitivity(self.model, (0, 1), 1.0, SplitRule.parse('dirichlet:alpha=1'), reps=2000, seed=1,
                                 tree_shape=(2, 3))
        names = [report.bound_name for report in result.reports]
        for name in ('tree', 'dag_appendix', 'dirichlet_exact', 'dirichlet_draft', 'dirichlet_corollary'):
            self.assertIn(name, names)
        self.assertTrue(result.all_asserted_contained)


class SensitivityCommandTests(SimpleTestCase):

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.addCleanup(self.tmp.cleanup)
        self.dir = Path(self.tmp.name)

    def test_equal_split_summary(self):
        out = StringIO()
        path = self.dir / 'report.csv'
        call_command('sensitivity', graph='tree:g=2,h=2', delta=1.0, F=1.0, split='equal', out=str(path), stdout=out)
        self.assertIn('tv=0.250000 lower=0.250000 upper=0.375000 contained=true', out.getvalue())
        with path.open(newline='') as handle:
            rows = list(csv.reader(handle))
        self.assertEqual(rows[0], list(REPORT_HEADER))
        tree_row = next(row for row in rows[1:] if row[0] == 'tree')
        self.assertEqual([float(value) for value in tree_row[1:4]], [0.25, 0.25, 0.375])
        self.assertEqual(tree_row[4], 'true')

    def test_dirichlet_summary_is_reproducible(self):
        outputs = []
        for _ in range(2):
            out = StringIO()
            call_command(
                'sensitivity', graph='tree:g=2,h=3', edge='root:0', split='dirichlet:alpha=1',
                reps=1000, seed=7, stdout=out,
            )
            outputs.append(out.getvalue())
        self.assertEqual(outputs[0], outputs[1])
        self.assertIn('stderr=', outputs[0])

    def test_reps_need_dirichlet(self):
        with self.assertRaises(CommandError) as caught:
            call_command('sensitivity', graph='tree:g=2,h=2', split='equal', reps=500, stdout=StringIO())
        self.assertEqual(caught.exception.returncode, 2)
