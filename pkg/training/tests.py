import csv
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
from flows.policy import BACKWARD_LEARNED, TabularPolicy, random_policy
from flows.targets import TargetDistribution, set_product_target, uniform_target
from flows.trajectories import TrajectoryBatch, enumerate_trajectories
from graphs.builders import build_random_dag, build_regular_tree, build_set_graph
from utils import LabValidationError

from .config import DB, KL, TB, TD3, LossKind, TrainConfig
from .exceptions import LossConfigurationError, TrainingDivergedError
from .losses import leave_one_out_advantages, loss_and_gradient, pair_weights, residual_losses, td3_gamma
from .optim import Adam
from .runners import td3_ablation
from .sampling import sample_batch, sample_trajectory
from .trainer import TRACE_HEADER, train

RESIDUAL_KINDS = ['tb', 'db', 'subtb:lambda=0.9', 'subtb:lambda=0.5', 'td3', 'td3:beta0=0.5,direction=downstream']


def all_trajectories(graph):
    return TrajectoryBatch.from_trajectories(graph, enumerate_trajectories(graph))


def numeric_gradient(policy, target, batch, kind, step=1e-5):
    base = policy.parameter_vector()
    grad = np.zeros_like(base)
    shifted_policy = policy.copy()
    for i in range(len(base)):
        shifted = base.copy()
        shifted[i] += step
        shifted_policy.set_parameter_vector(shifted)
        upper = loss_and_gradient(shifted_policy, target, batch, kind)[0]
        shifted[i] -= 2 * step
        shifted_policy.set_parameter_vector(shifted)
        lower = loss_and_gradient(shifted_policy, target, batch, kind)[0]
        grad[i] = (upper - lower) / (2 * step)
    return grad


class LossKindTests(SimpleTestCase):

    def test_parse(self):
        self.assertEqual(LossKind.parse('subtb').lam, 0.9)
        kind = LossKind.parse('td3:beta0=2,anneal=100,direction=downstream')
        self.assertEqual((kind.beta0, kind.anneal, kind.direction), (2.0, 100, 'downstream'))
        self.assertEqual(str(kind), 'td3:beta0=2,anneal=100,direction=downstream')
        self.assertTrue(LossKind.parse('db').needs_state_flows)
        self.assertFalse(LossKind.parse('tb').needs_state_flows)

    def test_invalid_kinds(self):
        for text in ('fm', 'subtb:lambda=0', 'subtb:lambda=1.5', 'td3:direction=sideways', 'tb:lambda=0.9'):
            with self.assertRaises(LabValidationError, msg=text):
                LossKind.parse(text)

    def test_beta_schedule(self):
        kind = LossKind(TD3, beta0=2.0, anneal=100)
        self.assertEqual(kind.beta(0), 2.0)
        self.assertEqual(kind.beta(50), 1.0)
        self.assertEqual(kind.beta(150), 0.0)
        self.assertEqual(LossKind(TD3, beta0=2.0).beta(10_000), 2.0)

    def test_train_config_checks(self):
        with self.assertRaises(LabValidationError):
            TrainConfig(eta=1.0)
        with self.assertRaises(LabValidationError):
            TrainConfig(lr_logits=0.0)
        config = TrainConfig(epochs=11, lr_final_fraction=0.1, trace_every=4)
        self.assertEqual(config.learning_rate_scale(0), 1.0)
        self.assertAlmostEqual(config.learning_rate_scale(10), 0.1)
        self.assertEqual([e for e in range(11) if config.traced(e)], [0, 4, 8, 10])


class SamplingTests(SimpleTestCase):

    def setUp(self):
        self.graph = build_regular_tree(2, 2)

    def test_exploration_reaches_every_leaf(self):
        policy = TabularPolicy(self.graph, forward_params=[30, -30, 30, -30, 30, -30])
        batch = sample_batch(policy, 400, eta=0.5, seed=1)
        self.assertEqual(set(batch.terminals.tolist()), {3, 4, 5, 6})

    def test_deterministic_logits(self):
        policy = TabularPolicy(self.graph, forward_params=[30, -30, 30, -30, 30, -30])
        rng = np.random.default_rng(0)
        for _ in range(50):
            self.assertEqual(sample_trajectory(policy, 0.0, rng).states, (0, 1, 3))

    def test_uniform_policy_frequencies(self):
        batch = sample_batch(TabularPolicy(self.graph), 20_000, seed=3)
        counts = np.bincount(batch.terminals, minlength=7)[3:]
        sigma = np.sqrt(20_000 * 0.25 * 0.75)
        self.assertTrue(np.all(np.abs(counts - 5000) < 3 * sigma))

    def test_batches_do_not_depend_on_threads(self):
        policy = random_policy(self.graph, np.random.default_rng(4))
        single = sample_batch(policy, 100, eta=0.1, seed=5, epoch=2)
        pooled = sample_batch(policy, 100, eta=0.1, seed=5, epoch=2, threads=4)
        np.testing.assert_array_equal(single.states, pooled.states)
        np.testing.assert_array_equal(single.edges, pooled.edges)

    def test_epochs_draw_fresh_batches(self):
        policy = TabularPolicy(self.graph)
        first = sample_batch(policy, 64, seed=5, epoch=0)
        second = sample_batch(policy, 64, seed=5, epoch=1)
        self.assertFalse(np.array_equal(first.states, second.states))

    def test_eta_range(self):
        with self.assertRaises(LabValidationError):
            sample_batch(TabularPolicy(self.graph), 4, eta=1.0)


class GradientTests(SimpleTestCase):

    def assert_gradient_matches(self, graph, kind_text, backward='uniform', seed=0, tie=None):
        kind = LossKind.parse(kind_text)
        rng = np.random.default_rng(seed)
        policy = random_policy(graph, rng, backward=backward, state_flows=kind.needs_state_flows)
        if tie is not None:
            policy = TabularPolicy(
                graph, forward_params=rng.uniform(-1, 1, int(tie.max()) + 1), forward_tie=tie,
                backward_logits=policy.backward_logits, log_state_flow=policy.log_state_flow, log_Z=policy.log_Z,
            )
        target = TargetDistribution(graph, rng.uniform(-1, 1, graph.num_terminals))
        batch = all_trajectories(graph)
        _, analytic = loss_and_gradient(policy, target, batch, kind)
        numeric = numeric_gradient(policy, target, batch, kind)
        np.testing.assert_allclose(analytic, numeric, rtol=1e-5, atol=1e-7, err_msg=kind_text)

    def test_tree(self):
        graph = build_regular_tree(2, 2)
        for kind in RESIDUAL_KINDS:
            self.assert_gradient_matches(graph, kind)

    def test_learned_backward(self):
        graph = build_random_dag(10, seed=2, edge_probability=0.4)
        for seed, kind in enumerate(RESIDUAL_KINDS):
            self.assert_gradient_matches(graph, kind, backward=BACKWARD_LEARNED, seed=seed)

    def test_mixed_lengths(self):
        for seed in range(4):
            graph = build_random_dag(12, seed=seed, edge_probability=0.3)
            for kind in RESIDUAL_KINDS:
                self.assert_gradient_matches(graph, kind, seed=seed + 10)

    def test_tied_slots(self):
        graph = build_regular_tree(2, 2)
        tie = np.arange(graph.num_edges) % 2
        for kind in ('tb', 'db', 'subtb'):
            self.assert_gradient_matches(graph, kind, tie=tie)

    def test_balanced_policy_is_stationary(self):
        graph = build_random_dag(12, seed=5, edge_probability=0.3)
        target = TargetDistribution(graph, np.random.default_rng(1).uniform(-2, 2, graph.num_terminals))
        policy = balanced_policy(graph, target)
        batch = sample_batch(policy, 64, eta=0.3, seed=2)
        for text in RESIDUAL_KINDS:
            loss, grad = loss_and_gradient(policy, target, batch, LossKind.parse(text))
            self.assertLess(loss, 1e-20, text)
            np.testing.assert_allclose(grad, 0.0, atol=1e-9, err_msg=text)

    def test_kl_at_balanced_policy(self):
        graph = build_regular_tree(2, 3)
        target = TargetDistribution(graph, np.linspace(-1, 1, graph.num_terminals))
        policy = balanced_policy(graph, target)
        batch = sample_batch(policy, 32, seed=4)
        loss, grad = loss_and_gradient(policy, target, batch, LossKind(KL))
        self.assertAlmostEqual(loss, -target.log_partition, places=10)
        np.testing.assert_allclose(grad, 0.0, atol=1e-10)

    def test_td3_without_tempering_is_scaled_db(self):
        graph = build_random_dag(12, seed=3, edge_probability=0.3)
        rng = np.random.default_rng(6)
        policy = random_policy(graph, rng)
        target = TargetDistribution(graph, rng.uniform(-1, 1, graph.num_terminals))
        batch = all_trajectories(graph)
        db = residual_losses(policy, target, batch, LossKind(DB))
        td3 = residual_losses(policy, target, batch, LossKind(TD3, beta0=0.0))
        np.testing.assert_allclose(td3 * batch.lengths, db, rtol=1e-12)

    def test_td3_weights(self):
        graph = build_regular_tree(2, 2)
        np.testing.assert_array_equal(td3_gamma(graph, LossKind(TD3), 0)[:3], [4.0, 1.0, 1.0])
        np.testing.assert_array_equal(td3_gamma(graph, LossKind(TD3, direction='downstream'), 0)[:3], [0.0, 1.0, 1.0])
        states = np.array([[0, 1, 3]])
        weights = pair_weights(LossKind(TD3), states, 2, 0, graph)
        np.testing.assert_allclose([weights[0, 0, 1], weights[0, 1, 2]], [0.8, 0.2])

    def test_degenerate_td3_weights_fall_back_to_uniform(self):
        graph = build_regular_tree(3, 1)
        states = np.array([[0, 1], [0, 2]])
        with self.assertLogs('training.losses', 'WARNING'):
            weights = pair_weights(LossKind(TD3, direction='downstream'), states, 1, 0, graph)
        np.testing.assert_array_equal(weights[:, 0, 1], [1.0, 1.0])

    def test_state_flows_required(self):
        graph = build_regular_tree(2, 2)
        policy = TabularPolicy.uniform(graph, state_flows=False)
        batch = sample_batch(policy, 4)
        with self.assertRaises(LossConfigurationError):
            loss_and_gradient(policy, uniform_target(graph), batch, LossKind(DB))

    def test_leave_one_out(self):
        np.testing.assert_allclose(leave_one_out_advantages([1.0, 2.0, 6.0]), [-3.0, -1.5, 4.5])
        with self.assertRaises(LossConfigurationError):
            leave_one_out_advantages([1.0])


class AdamTests(SimpleTestCase):

    def test_first_step_moves_by_rate(self):
        optimizer = Adam(3)
        params = optimizer.step(np.zeros(3), np.array([2.0, -0.5, 0.0]), np.array([0.1, 0.1, 1.0]))
        np.testing.assert_allclose(params, [-0.1, 0.1, 0.0], atol=1e-7)

    def test_shape_check(self):
        with self.assertRaises(LabValidationError):
            Adam(2).step(np.zeros(2), np.zeros(3), 0.1)


class TrainerTests(SimpleTestCase):

    def test_uniform_tree_with_tb(self):
        graph = build_regular_tree(2, 3)
        result = train(graph, uniform_target(graph), LossKind(TB), TrainConfig(epochs=2000, trace_every=0, seed=1))
        self.assertEqual(len(result.trace), 1)
        self.assertLess(result.final_tv, 0.01)

    def test_seed_determinism(self):
        graph = build_regular_tree(2, 2)
        target = TargetDistribution.from_rewards(graph, {3: 1.0, 4: 2.0, 5: 3.0, 6: 4.0})
        config = TrainConfig(epochs=60, batch=8, lr_logits=1e-2, trace_every=10, seed=9, eta=0.1)
        first = train(graph, target, LossKind.parse('subtb'), config)
        second = train(graph, target, LossKind.parse('subtb'), config)
        self.assertEqual(first.trace, second.trace)
        np.testing.assert_array_equal(first.policy.parameter_vector(), second.policy.parameter_vector())

    def test_divergence_names_the_trajectory(self):
        graph = build_regular_tree(2, 2)
        policy = TabularPolicy.uniform(graph, state_flows=False)
        policy.log_Z = np.inf
        with self.assertRaises(TrainingDivergedError) as caught:
            train(graph, uniform_target(graph), LossKind(TB), TrainConfig(epochs=5), policy=policy)
        self.assertEqual(caught.exception.epoch, 0)
        self.assertEqual(caught.exception.trajectory_index, 0)
        self.assertEqual(caught.exception.trajectory.states[0], 0)

    def test_kl_ignores_exploration(self):
        graph = build_regular_tree(2, 2)
        with self.assertLogs('training.trainer', 'WARNING'):
            train(graph, uniform_target(graph), LossKind(KL), TrainConfig(epochs=2, eta=0.3, trace_every=0))

    @tag('slow')
    def test_skewed_target_with_tb(self):
        graph = build_regular_tree(2, 2)
        target = TargetDistribution.from_rewards(graph, {3: 1.0, 4: 2.0, 5: 3.0, 6: 4.0})
        config = TrainConfig(epochs=3000, batch=32, lr_logits=1e-2, trace_every=0, seed=2)
        result = train(graph, target, LossKind(TB), config)
        self.assertLess(total_variation(exact_marginal(result.policy), target.probabilities), 0.02)

    @tag('slow')
    def test_td3_ablation_runs(self):
        graph = build_regular_tree(2, 3)
        target = TargetDistribution(graph, np.linspace(0, 2, graph.num_terminals))
        comparison = td3_ablation(graph, target, [0, 1], TrainConfig(epochs=200, batch=16, lr_logits=1e-2))
        self.assertEqual(set(comparison.medians()), {'td3-upstream', 'db', 'td3-downstream'})
        self.assertEqual(len(list(comparison.rows())), 6)

    def test_downstream_td3_never_moves_the_root(self):
        graph = build_set_graph(6, 3)
        target = set_product_target(graph, seed=0)
        root_edges = graph.edge_source == graph.initial
        config = TrainConfig(epochs=40, batch=8, lr_logits=5e-2, trace_every=0)
        downstream = train(graph, target, LossKind(TD3, beta0=1.0, direction='downstream'), config).policy
        np.testing.assert_array_equal(downstream.forward_params[root_edges], 0.0)
        upstream = train(graph, target, LossKind(TD3, beta0=1.0), config).policy
        self.assertGreater(np.abs(upstream.forward_params[root_edges]).max(), 0.0)

    @tag('slow')
    def test_td3_ordering_on_set_generation(self):
        # 30 runs of 3000 epochs; a few minutes on one core
        graph = build_set_graph(12, 6)
        target = set_product_target(graph, seed=0)
        config = TrainConfig(epochs=3000, batch=16, lr_logits=3e-2, lr_final_fraction=0.1)
        comparison = td3_ablation(graph, target, range(10), config)
        medians = comparison.medians()
        self.assertLess(medians['td3-upstream'], medians['db'], msg=str(medians))
        self.assertLess(medians['db'], medians['td3-downstream'], msg=str(medians))
        self.assertGreaterEqual(comparison.paired_wins('td3-upstream', 'db'), 8)


class TrainCommandTests(SimpleTestCase):

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.addCleanup(self.tmp.cleanup)

    def test_trace_file(self):
        path = Path(self.tmp.name) / 'trace.csv'
        out = StringIO()
        call_command('train', graph='tree:g=2,h=2', epochs=20, trace_every=5, trace=str(path), stdout=out)
        with path.open(newline='') as handle:
            rows = list(csv.reader(handle))
        self.assertEqual(tuple(rows[0]), TRACE_HEADER)
        self.assertEqual([int(row[0]) for row in rows[1:]], [0, 5, 10, 15, 19])
        self.assertTrue(out.getvalue().startswith('loss='))
        self.assertIn(' tv=', out.getvalue())

    def test_policy_and_distribution_outputs(self):
        policy_path = Path(self.tmp.name) / 'policy.json'
        distribution_path = Path(self.tmp.name) / 'p.csv'
        call_command(
            'train', graph='tree:g=2,h=2', loss='db', epochs=5,
            policy_out=str(policy_path), distribution_out=str(distribution_path), stdout=StringIO(),
        )
        self.assertTrue(policy_path.exists())
        self.assertEqual(len(distribution_path.read_text().splitlines()), 5)

    def test_bad_loss(self):
        with self.assertRaises(CommandError) as caught:
            call_command('train', graph='tree:g=2,h=2', loss='fm', stdout=StringIO())
        self.assertEqual(caught.exception.returncode, 2)
