import csv
import json
import math
import tempfile
from pathlib import Path

import numpy as np
from django.test import SimpleTestCase

from graphs.builders import build_random_dag, build_regular_tree, build_set_graph, set_state_id
from utils import CapacityError, LabValidationError

from .balance import (
    FlowAssignment, balanced_policy, flow_from_policy, policy_from_flow, reweight_policy, segment_residual,
)
from .distances import delta_ls, total_variation
from .io import DISTRIBUTION_HEADER, load_policy, policy_from_document, policy_to_document, save_distribution, save_policy
from .marginals import brute_force_marginal, exact_marginal, importance_marginal
from .policy import BACKWARD_LEARNED, TabularPolicy, random_policy
from .segments import SegmentSampler
from .targets import (
    TargetDistribution, build_target, kmodes_target, load_target, set_product_target, uniform_target,
)
from .trajectories import Trajectory, TrajectoryBatch, count_trajectories, enumerate_trajectories


def random_target(graph, rng):
    return TargetDistribution.from_rewards(graph, rng.uniform(0.2, 3.0, graph.num_terminals), name='random')


def root_biased_policy():
    """tree(2,2) with root probabilities (0.75, 0.25) and uniform choices below."""
    graph = build_regular_tree(2, 2)
    params = np.zeros(graph.num_edges)
    params[graph.edge_id(0, 1)] = math.log(0.75)
    params[graph.edge_id(0, 2)] = math.log(0.25)
    return TabularPolicy(graph, forward_params=params)


class ExactMarginalTests(SimpleTestCase):

    def test_uniform_tree(self):
        graph = build_regular_tree(2, 2)
        np.testing.assert_allclose(exact_marginal(TabularPolicy(graph), graph), [0.25] * 4, atol=1e-14)

    def test_root_biased_tree(self):
        np.testing.assert_allclose(exact_marginal(root_biased_policy()), [0.375, 0.375, 0.125, 0.125], atol=1e-14)

    def test_sums_to_one(self):
        rng = np.random.default_rng(0)
        for seed in range(5):
            graph = build_random_dag(40, seed=seed)
            policy = random_policy(graph, rng, scale=3.0)
            self.assertAlmostEqual(exact_marginal(policy).sum(), 1.0, delta=1e-10)

    def test_matches_brute_force(self):
        rng = np.random.default_rng(1)
        for graph in (build_set_graph(4, 2), build_set_graph(5, 3), build_random_dag(25, seed=4, edge_probability=0.3)):
            policy = random_policy(graph, rng, scale=2.0)
            np.testing.assert_allclose(exact_marginal(policy), brute_force_marginal(policy), rtol=1e-10, atol=1e-14)

    def test_capacity_guard(self):
        graph = build_regular_tree(2, 3)
        with self.assertRaises(CapacityError):
            exact_marginal(TabularPolicy(graph), capacity=5)

    def test_graph_mismatch(self):
        with self.assertRaises(LabValidationError):
            exact_marginal(TabularPolicy(build_regular_tree(2, 2)), build_regular_tree(3, 2))


class ImportanceMarginalTests(SimpleTestCase):

    def test_tree_is_exact(self):
        policy = root_biased_policy()
        exact = exact_marginal(policy)
        for position, x in enumerate(policy.graph.terminal_ids):
            estimate = importance_marginal(policy, x, k=10, seed=3)
            self.assertAlmostEqual(estimate.estimate, exact[position], places=14)
            self.assertEqual(estimate.stderr, 0.0)

    def test_set_graph_within_standard_errors(self):
        graph = build_set_graph(3, 2)
        policy = random_policy(graph, np.random.default_rng(5), scale=1.5, backward=BACKWARD_LEARNED)
        x = set_state_id(3, (1, 2))
        exact = exact_marginal(policy)[graph.terminal_index[x]]
        estimate = importance_marginal(policy, x, k=10_000, seed=7)
        self.assertGreater(estimate.stderr, 0.0)
        self.assertLessEqual(abs(estimate.estimate - exact), 4 * estimate.stderr)

    def test_deterministic_per_seed(self):
        graph = build_set_graph(4, 2)
        policy = random_policy(graph, np.random.default_rng(2))
        x = graph.terminal_ids[2]
        self.assertEqual(importance_marginal(policy, x, 50, seed=9), importance_marginal(policy, x, 50, seed=9))

    def test_needs_two_samples(self):
        policy = root_biased_policy()
        with self.assertRaises(LabValidationError):
            importance_marginal(policy, 3, k=1)

    def test_non_terminal(self):
        with self.assertRaises(LabValidationError):
            importance_marginal(root_biased_policy(), 1, k=5)


class FlowTests(SimpleTestCase):

    def test_uniform_tree_flow(self):
        graph = build_regular_tree(2, 2)
        flow = flow_from_policy(TabularPolicy(graph), uniform_target(graph), total=1.0)
        self.assertAlmostEqual(flow.flow(0, 1), 0.5, places=15)
        self.assertAlmostEqual(flow.flow(0, 2), 0.5, places=15)
        self.assertAlmostEqual(flow.flow(1, 3), 0.25, places=15)
        self.assertAlmostEqual(flow.total_flow, 1.0, places=15)

    def test_balanced_flow_conserves(self):
        for seed in range(4):
            graph = build_random_dag(35, seed=seed)
            target = kmodes_target(graph, 2, 1.5) if graph.num_terminals > 3 else uniform_target(graph)
            flow = flow_from_policy(TabularPolicy(graph), target)
            self.assertTrue(flow.is_balanced())
            self.assertLessEqual(np.abs(flow.imbalance()).max(), 1e-10 * flow.total_flow)
            np.testing.assert_allclose(flow.terminal_flows(), target.reward, rtol=1e-12)

    def test_round_trip(self):
        rng = np.random.default_rng(3)
        for graph in (build_set_graph(5, 2), build_random_dag(30, seed=8)):
            target = random_target(graph, rng)
            policy = balanced_policy(graph, target)
            back = policy_from_flow(flow_from_policy(policy, target))
            np.testing.assert_allclose(back.forward_probs(), policy.forward_probs(), atol=1e-12)
            self.assertAlmostEqual(back.log_Z, target.log_partition, places=10)

    def test_balance_implies_correct_marginal(self):
        rng = np.random.default_rng(4)
        graph = build_set_graph(6, 3)
        target = random_target(graph, rng)
        policy = balanced_policy(graph, target)
        self.assertLess(total_variation(exact_marginal(policy), target.probabilities), 1e-12)

    def test_zero_out_flow(self):
        graph = build_regular_tree(2, 2)
        flow = FlowAssignment.from_edge_flows(graph, [0.5, 0.5, 0.0, 0.0, 0.25, 0.25])
        with self.assertRaises(LabValidationError):
            policy_from_flow(flow)

    def test_negative_flow_rejected(self):
        with self.assertRaises(LabValidationError):
            FlowAssignment.from_edge_flows(build_regular_tree(2, 1), [1.0, -0.5])

    def test_uniform_policy_state_flows(self):
        policy = TabularPolicy.uniform(build_regular_tree(2, 2))
        self.assertAlmostEqual(math.exp(policy.log_state_flow[0]), 1.0, places=12)
        self.assertAlmostEqual(math.exp(policy.log_state_flow[1]), 0.5, places=12)


class SegmentResidualTests(SimpleTestCase):

    def test_balanced_solution_has_zero_residuals(self):
        graph = build_set_graph(4, 2)
        target = random_target(graph, np.random.default_rng(6))
        policy = balanced_policy(graph, target)
        for trajectory in enumerate_trajectories(graph):
            for m in range(trajectory.length):
                for n in range(m + 1, trajectory.length + 1):
                    self.assertLess(segment_residual(policy, target, trajectory, m, n), 1e-20)

    def test_uniform_tree_trajectory_balance(self):
        graph = build_regular_tree(2, 2)
        policy = TabularPolicy(graph, log_Z=math.log(4))
        target = uniform_target(graph)
        for x in graph.terminal_ids:
            trajectory = Trajectory((0, graph.parents(x)[0], x))
            self.assertAlmostEqual(segment_residual(policy, target, trajectory, 0, 2), 0.0, places=20)

    def test_doubling_a_state_flow(self):
        graph = build_regular_tree(2, 3)
        target = uniform_target(graph)
        policy = balanced_policy(graph, target)
        trajectory = Trajectory((0, 1, 3, 7))
        policy.log_state_flow[1] += math.log(2)
        self.assertAlmostEqual(segment_residual(policy, target, trajectory, 1, 3), math.log(2) ** 2, places=12)
        self.assertAlmostEqual(segment_residual(policy, target, trajectory, 0, 1), math.log(2) ** 2, places=12)

    def test_index_bounds(self):
        graph = build_regular_tree(2, 2)
        with self.assertRaises(LabValidationError):
            segment_residual(TabularPolicy(graph), uniform_target(graph), Trajectory((0, 1, 3)), 1, 1)

    def test_missing_state_flow(self):
        graph = build_regular_tree(2, 2)
        with self.assertRaises(LabValidationError):
            segment_residual(TabularPolicy(graph), uniform_target(graph), Trajectory((0, 1, 3)), 0, 1)


class DistanceTests(SimpleTestCase):

    def test_total_variation(self):
        self.assertEqual(total_variation([0.2, 0.8], [0.2, 0.8]), 0.0)
        self.assertAlmostEqual(total_variation([0.375, 0.375, 0.125, 0.125], [0.25] * 4), 0.25, places=15)
        self.assertEqual(total_variation([1.0, 0.0], [0.0, 1.0]), 1.0)

    def test_delta_ls(self):
        self.assertEqual(delta_ls([0.5, 0.5], [0.5, 0.5], [1, 1]), 0.0)
        value = delta_ls([0.5, 0.5], [0.25, 0.75], [1, 0])
        self.assertAlmostEqual(value, math.log(2), places=15)

    def test_delta_ls_rejects_zero(self):
        with self.assertRaises(LabValidationError):
            delta_ls([1.0, 0.0], [0.5, 0.5], [1, 1])

    def test_length_mismatch(self):
        with self.assertRaises(LabValidationError):
            total_variation([0.5, 0.5], [1.0])


class TargetTests(SimpleTestCase):

    def test_kmodes_masses(self):
        graph = build_regular_tree(2, 3)
        target = kmodes_target(graph, 2, 2.0)
        probs = target.probabilities
        np.testing.assert_allclose(probs[:2], [0.25, 0.25])
        np.testing.assert_allclose(probs[2:], [(8 - 4) / (8 * 6)] * 6)
        self.assertAlmostEqual(probs.sum(), 1.0, places=14)
        self.assertEqual(target.modes, graph.terminal_ids[:2])

    def test_kmodes_constraints(self):
        graph = build_regular_tree(2, 2)
        with self.assertRaises(LabValidationError):
            kmodes_target(graph, 2, 2.0)

    def test_product_target(self):
        graph = build_set_graph(4, 2)
        target = set_product_target(graph, seed=3, alpha=0.5, scale=5.0)
        values = target.element_values
        x = set_state_id(4, (1, 3))
        self.assertAlmostEqual(target.log_reward_of(x), (values[0] + values[2]) / 0.5, places=12)
        base = set_product_target(graph, seed=3, alpha=1.0, scale=5.0)
        np.testing.assert_allclose(base.tempered(0.5).log_reward, target.log_reward)

    def test_product_target_scale(self):
        graph = build_set_graph(6, 3)
        default = set_product_target(graph, seed=1)
        self.assertLessEqual(np.abs(default.element_values).max(), 1.0)
        self.assertLessEqual(np.abs(default.log_reward).max(), 3.0)
        published = build_target('product:seed=1,scale=5', graph)
        np.testing.assert_allclose(published.element_values, 5.0 * default.element_values)

    def test_partition(self):
        graph = build_regular_tree(2, 2)
        target = build_target('uniform', graph)
        self.assertAlmostEqual(target.partition, 4.0, places=14)

    def test_tabulated_files(self):
        graph = build_regular_tree(2, 1)
        with tempfile.TemporaryDirectory() as tmp:
            json_path = Path(tmp) / 'r.json'
            json_path.write_text(json.dumps({'1': 1.0, '2': 3.0}))
            csv_path = Path(tmp) / 'r.csv'
            csv_path.write_text('terminal_id,reward\n1,1.0\n2,3.0\n')
            for path in (json_path, csv_path):
                np.testing.assert_allclose(load_target(graph, path).probabilities, [0.25, 0.75])
            rewards = build_target(f'file:{csv_path}', graph).reward_map()
            self.assertEqual(sorted(rewards), [1, 2])
            self.assertAlmostEqual(rewards[2], 3.0, places=12)

    def test_rejects_nonpositive_rewards(self):
        graph = build_regular_tree(2, 1)
        with self.assertRaises(LabValidationError):
            TargetDistribution.from_rewards(graph, [1.0, 0.0])

    def test_unknown_kind(self):
        with self.assertRaises(LabValidationError):
            build_target('zipf:s=2', build_regular_tree(2, 1))


class ReweightTests(SimpleTestCase):

    def test_reweighted_marginal(self):
        rng = np.random.default_rng(9)
        graph = build_set_graph(5, 2)
        policy = random_policy(graph, rng)
        log_weights = rng.normal(size=graph.num_terminals)
        updated = reweight_policy(policy, log_weights)
        expected = exact_marginal(policy) * np.exp(log_weights)
        np.testing.assert_allclose(exact_marginal(updated), expected / expected.sum(), rtol=1e-10)
        shift = math.log((exact_marginal(policy) * np.exp(log_weights)).sum())
        self.assertAlmostEqual(updated.log_Z, policy.log_Z + shift, places=10)


class TrajectoryTests(SimpleTestCase):

    def test_enumeration_counts(self):
        graph = build_set_graph(3, 2)
        self.assertEqual(count_trajectories(graph), 6)
        self.assertEqual(len(enumerate_trajectories(graph)), 6)
        with self.assertRaises(CapacityError):
            enumerate_trajectories(graph, limit=5)

    def test_batch_padding(self):
        graph = build_random_dag(20, seed=5)
        trajectories = enumerate_trajectories(graph)[:6]
        batch = TrajectoryBatch.from_trajectories(graph, trajectories)
        self.assertEqual(batch.trajectories(), trajectories)
        self.assertEqual(list(batch.terminals), [t.terminal for t in trajectories])
        self.assertTrue(np.all(batch.edges[np.arange(batch.edges.shape[1]) >= batch.lengths[:, None]] == -1))

    def test_validate(self):
        graph = build_regular_tree(2, 2)
        Trajectory((0, 1, 3)).validate(graph)
        with self.assertRaises(LabValidationError):
            Trajectory((0, 1)).validate(graph)
        with self.assertRaises(LabValidationError):
            Trajectory((0, 2, 3)).validate(graph)


class SegmentSamplerTests(SimpleTestCase):

    def test_zero_probability_edges_are_never_drawn(self):
        graph = build_regular_tree(3, 1)
        probs = np.array([0.0, 1.0, 0.0])
        sampler = SegmentSampler(probs, np.arange(3), graph.forward_ptr)
        edges = sampler.draw(np.zeros(1000, dtype=np.int64), np.random.default_rng(0).random(1000))
        self.assertTrue(np.all(edges == 1))

    def test_frequencies(self):
        graph = build_regular_tree(2, 1)
        sampler = SegmentSampler(np.array([0.3, 0.7]), np.arange(2), graph.forward_ptr)
        edges = sampler.draw(np.zeros(20_000, dtype=np.int64), np.random.default_rng(1).random(20_000))
        self.assertAlmostEqual(np.mean(edges == 0), 0.3, delta=0.015)


class PolicyFileTests(SimpleTestCase):

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.addCleanup(self.tmp.cleanup)
        self.dir = Path(self.tmp.name)

    def test_snapshot_round_trip(self):
        graph = build_set_graph(4, 2)
        policy = random_policy(graph, np.random.default_rng(2), backward=BACKWARD_LEARNED)
        path = self.dir / 'snap.json'
        save_policy(policy, path)
        loaded = load_policy(path, graph)
        np.testing.assert_allclose(loaded.forward_probs(), policy.forward_probs(), rtol=1e-15)
        np.testing.assert_allclose(loaded.backward_probs(), policy.backward_probs(), rtol=1e-15)
        np.testing.assert_allclose(loaded.log_state_flow, policy.log_state_flow)
        self.assertEqual(loaded.log_Z, policy.log_Z)

    def test_snapshot_keys_are_state_ids(self):
        graph = build_regular_tree(2, 1)
        document = policy_to_document(TabularPolicy(graph))
        self.assertEqual(document['forward_logits'], {'0': [0.0, 0.0]})
        self.assertIsNone(document['backward_logits'])

    def test_snapshot_for_another_graph(self):
        document = policy_to_document(TabularPolicy(build_regular_tree(2, 1)))
        with self.assertRaises(LabValidationError):
            policy_from_document(document, build_regular_tree(2, 2))

    def test_snapshot_unknown_key(self):
        graph = build_regular_tree(2, 1)
        document = policy_to_document(TabularPolicy(graph))
        document['temperature'] = 1.0
        with self.assertRaisesRegex(LabValidationError, 'temperature'):
            policy_from_document(document, graph)

    def test_distribution_csv(self):
        graph = build_regular_tree(2, 2)
        path = self.dir / 'dist.csv'
        save_distribution(path, graph, exact_marginal(root_biased_policy()), [0.25] * 4)
        with path.open() as handle:
            rows = list(csv.reader(handle))
        self.assertEqual(tuple(rows[0]), DISTRIBUTION_HEADER)
        self.assertEqual(rows[1][0], '3')
        np.testing.assert_allclose([float(value) for value in rows[1][1:]], [0.375, 0.25, 0.125], atol=1e-14)
