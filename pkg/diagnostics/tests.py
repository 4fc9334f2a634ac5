import csv
import json
import math
import tempfile
from io import StringIO
from pathlib import Path

import numpy as np
from django.core.management import call_command
from django.core.management.base import CommandError
from django.test import SimpleTestCase, tag

from flows.balance import balanced_policy
from flows.io import save_policy
from flows.marginals import exact_marginal
from flows.policy import TabularPolicy
from flows.targets import TargetDistribution, uniform_target
from graphs.builders import build_regular_tree
from sensitivity.imbalance import ImbalanceSpec, SplitRule, imbalanced_distribution
from utils import LabValidationError

from .exploration import COVERAGE_HEADER, exploration_coverage, markov_bound
from .fcs import fcs, fcs_exhaustive, fcs_from_marginals, pac_bound, pac_coverage, sample_subsets, subset_error
from .pitfalls import log_log_correlation, pitfall_metrics, pitfalls_from_marginals

IMBALANCED = np.array([0.375, 0.375, 0.125, 0.125])
QUARTER = np.full(4, 0.25)
REWARDS = {3: 1.0, 4: 2.0, 5: 3.0, 6: 4.0}


def root_biased_policy(graph):
    params = np.zeros(graph.num_edges)
    params[graph.edge_id(0, 1)] = math.log(0.75)
    params[graph.edge_id(0, 2)] = math.log(0.25)
    return TabularPolicy(graph, forward_params=params)


class FCSTests(SimpleTestCase):

    def setUp(self):
        self.graph = build_regular_tree(2, 2)
        self.target = uniform_target(self.graph)

    def test_subset_error_by_hand(self):
        self.assertAlmostEqual(subset_error(IMBALANCED, QUARTER, [0, 2]), 0.25, places=15)
        self.assertEqual(subset_error(IMBALANCED, QUARTER, [0, 1]), 0.0)

    def test_pac_bound(self):
        self.assertAlmostEqual(pac_bound(0.1, 50, 0.05), 0.1 + math.sqrt(math.log(20) / 100), places=15)
        with self.assertRaises(LabValidationError):
            pac_bound(0.1, 50, 1.0)
        with self.assertRaises(LabValidationError):
            pac_bound(0.1, 0, 0.05)

    def test_balanced_policy_scores_zero(self):
        report = fcs(balanced_policy(self.graph, self.target), self.target, 2, 40, seed=3)
        self.assertLess(report.mean, 1e-12)
        self.assertEqual(report.samples, 40)
        self.assertTrue(all(x in self.graph.terminal_ids for s in report.subsets for x in s))

    def test_imbalanced_policy(self):
        report = fcs(root_biased_policy(self.graph), self.target, 2, 200, seed=1)
        self.assertTrue(np.all((report.errors >= 0) & (report.errors <= 1)))
        # crossing pairs score 0.25, same-side pairs 0
        self.assertTrue(np.all(np.isclose(report.errors, 0.25) | np.isclose(report.errors, 0.0)))
        self.assertAlmostEqual(fcs_exhaustive(IMBALANCED, QUARTER, 2), 4 * 0.25 / 6, places=15)

    def test_importance_mode_on_a_tree_matches_exact(self):
        policy = root_biased_policy(self.graph)
        exact = fcs(policy, self.target, 3, 20, seed=5)
        estimated = fcs(policy, self.target, 3, 20, seed=5, mode='importance', k=10)
        np.testing.assert_allclose(estimated.errors, exact.errors, atol=1e-12)
        self.assertEqual(estimated.subsets, exact.subsets)
        document = estimated.to_document()
        self.assertEqual(document['importance_samples'], 10)
        self.assertIn('estimator_stderr', document)

    def test_subsets_are_reproducible(self):
        first = sample_subsets(8, 3, 10, seed=4)
        second = sample_subsets(8, 3, 10, seed=4)
        for a, b in zip(first, second):
            np.testing.assert_array_equal(a, b)
            self.assertEqual(len(set(a.tolist())), 3)

    def test_threads_do_not_change_the_report(self):
        p = np.random.default_rng(0).dirichlet(np.ones(10))
        pi = np.random.default_rng(1).dirichlet(np.ones(10))
        single = fcs_from_marginals(p, pi, 4, 50, seed=2)
        pooled = fcs_from_marginals(p, pi, 4, 50, seed=2, threads=3)
        np.testing.assert_array_equal(single.errors, pooled.errors)

    def test_subset_size_checks(self):
        for B in (1, 5):
            with self.assertRaises(LabValidationError):
                fcs_from_marginals(IMBALANCED, QUARTER, B, 10)
        with self.assertRaises(LabValidationError):
            fcs(TabularPolicy(self.graph), self.target, 2, 10, mode='sampled')

    def test_zero_exactly_when_distributions_agree(self):
        rng = np.random.default_rng(7)
        for n in (4, 8, 12):
            pi = rng.dirichlet(np.ones(n))
            for B in (2, 3):
                self.assertLess(fcs_exhaustive(pi, pi, B), 1e-15)
                p = pi.copy()
                p[0], p[1] = p[0] + 0.01 * p[1], 0.99 * p[1]
                self.assertGreater(fcs_exhaustive(p, pi, B), 0.0)

    def test_monotone_in_imbalance(self):
        values = []
        for delta in (0.0, 0.25, 0.5, 1.0, 2.0, 4.0):
            spec = ImbalanceSpec((0, 1), delta, SplitRule.parse('equal'))
            p = imbalanced_distribution(self.graph, self.target, spec, F=1.0)
            values.append(fcs_exhaustive(p, self.target.probabilities, 2))
        self.assertEqual(values, sorted(values))
        self.assertEqual(values[0], 0.0)

    @tag('slow')
    def test_pac_coverage(self):
        pi = np.full(8, 1 / 8)
        p = np.random.default_rng(3).dirichlet(np.ones(8))
        self.assertGreaterEqual(pac_coverage(p, pi, 3, 50, confidence=0.05, trials=500, seed=1), 0.95)


class PitfallTests(SimpleTestCase):

    def setUp(self):
        self.graph = build_regular_tree(2, 2)
        self.target = TargetDistribution.from_rewards(self.graph, REWARDS)

    def test_correct_model(self):
        report = pitfall_metrics(balanced_policy(self.graph, self.target), self.target)
        self.assertAlmostEqual(report.correlation, 1.0, places=10)
        self.assertAlmostEqual(report.accuracy, 1.0, places=12)
        self.assertLess(report.tv, 1e-12)

    def test_tempered_model_fools_the_metrics(self):
        policy = balanced_policy(self.graph, self.target.tempered(0.5))
        p = exact_marginal(policy)
        np.testing.assert_allclose(p, np.array([1, 4, 9, 16]) / 30, atol=1e-12)
        report = pitfall_metrics(policy, self.target)
        self.assertAlmostEqual(report.correlation, 1.0, places=10)
        self.assertEqual(report.accuracy, 1.0)
        self.assertAlmostEqual(report.tv, 4 / 30, places=12)
        self.assertAlmostEqual(fcs_exhaustive(p, self.target.probabilities, 2), 0.11979, places=5)

    def test_uniform_target_is_degenerate(self):
        target = uniform_target(self.graph)
        with self.assertLogs('diagnostics.pitfalls', 'WARNING'):
            report = pitfalls_from_marginals(IMBALANCED, target)
        self.assertEqual(report.accuracy, 1.0)
        self.assertTrue(math.isnan(report.correlation))
        self.assertIsNone(report.to_document()['correlation'])

    def test_correlation_of_constant_model(self):
        with self.assertLogs('diagnostics.pitfalls', 'WARNING'):
            self.assertTrue(math.isnan(log_log_correlation(QUARTER, IMBALANCED)))


class ExplorationTests(SimpleTestCase):

    def setUp(self):
        self.graph = build_regular_tree(3, 4)

    def test_state_count(self):
        self.assertEqual(self.graph.num_states, 121)

    def test_markov_bound(self):
        self.assertEqual(markov_bound(10, 5, 0.1, 121), 1.0)
        self.assertAlmostEqual(markov_bound(10, 5, 0.5, 121), 50 / 60.5)
        self.assertAlmostEqual(markov_bound(0, 5, 0.5, 121), 1 / 60.5)

    def test_uniform_policy_stays_under_bound(self):
        report = exploration_coverage(self.graph, 10, trials=300, seed=2)
        self.assertTrue(report.all_within_bound)
        self.assertTrue(report.points[0].vacuous)
        self.assertLessEqual(report.visited.max(), 10 * 4 + 1)
        self.assertGreater(report.mean_visited, 10)

    def test_no_trajectories_visit_only_the_root(self):
        report = exploration_coverage(self.graph, 0, trials=100, grid=(0.05, 0.5))
        self.assertTrue(np.all(report.visited == 1))
        self.assertEqual([point.empirical for point in report.points], [0.0, 0.0])

    def test_checks(self):
        with self.assertRaises(LabValidationError):
            exploration_coverage(self.graph, 5, trials=50)
        with self.assertRaises(LabValidationError):
            exploration_coverage(self.graph, 5, trials=100, K=3)


class DiagnoseCommandTests(SimpleTestCase):

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.addCleanup(self.tmp.cleanup)
        self.dir = Path(self.tmp.name)

    def test_fcs_report(self):
        out = StringIO()
        path = self.dir / 'fcs.json'
        call_command('diagnose', 'fcs', graph='tree:g=2,h=2', B=2, m=50, out=str(path), stdout=out)
        document = json.loads(path.read_text())
        self.assertEqual(document['samples'], 50)
        self.assertEqual(len(document['errors']), 50)
        self.assertAlmostEqual(document['pac_bound'], document['mean'] + math.sqrt(math.log(20) / 100), places=12)
        self.assertIn('mean=0.000000', out.getvalue())

    def test_pitfalls_on_a_tempered_snapshot(self):
        graph = build_regular_tree(2, 2)
        target = TargetDistribution.from_rewards(graph, REWARDS)
        snapshot = self.dir / 'tempered.json'
        save_policy(balanced_policy(graph, target.tempered(0.5)), snapshot)
        rewards = self.dir / 'rewards.json'
        rewards.write_text(json.dumps({str(k): v for k, v in REWARDS.items()}))
        out = StringIO()
        call_command(
            'diagnose', 'pitfalls', graph='tree:g=2,h=2', target=f'file:{rewards}', policy=str(snapshot), stdout=out,
        )
        self.assertIn('correlation=1.000000 accuracy=1.000000 tv=0.133333', out.getvalue())

    def test_subset_larger_than_terminals(self):
        with self.assertRaises(CommandError) as caught:
            call_command('diagnose', 'fcs', graph='tree:g=2,h=2', B=5, stdout=StringIO())
        self.assertEqual(caught.exception.returncode, 2)

    def test_explore_csv(self):
        path = self.dir / 'coverage.csv'
        out = StringIO()
        call_command('explore', graph='tree:g=3,h=4', trajectories=10, trials=200, grid=[0.1, 0.5], out=str(path), stdout=out)
        with path.open(newline='') as handle:
            rows = list(csv.reader(handle))
        self.assertEqual(tuple(rows[0]), COVERAGE_HEADER)
        self.assertEqual(len(rows), 3)
        self.assertIn('states=121', out.getvalue())
        self.assertIn('within_bound=true', out.getvalue())
