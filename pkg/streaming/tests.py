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
from scipy.optimize import minimize

from flows.balance import balanced_policy, reweight_policy
from flows.distances import total_variation
from flows.marginals import exact_marginal
from flows.policy import BACKWARD_LEARNED, TabularPolicy, random_policy
from flows.targets import TargetDistribution, uniform_target
from flows.trajectories import TrajectoryBatch, enumerate_trajectories
from graphs.builders import build_random_dag, build_regular_tree, build_set_graph
from training.config import TrainConfig
from training.sampling import sample_batch
from utils import LabValidationError

from .audit import AUDIT_HEADER, LS_BOUND, TV_KL_BOUND, audit_step, propagation_audit
from .chunks import StreamChunk, chunk_from_document, load_chunk, posterior_target, save_chunk, synthetic_chunk
from .config import KL, SB, UpdateKind
from .objectives import (
    RLOO, SCORE, exact_kl_gradient, kl_gradient_rows, kl_stream_gradient_rloo, sb_loss_and_gradient,
    trajectory_kl, trajectory_kl_enumerated,
)
from .updater import STREAM_TRACE_HEADER, StreamState, run_stream, stream_update

REWARDS = {3: 1.0, 4: 2.0, 5: 3.0, 6: 4.0}


def all_trajectories(graph):
    return TrajectoryBatch.from_trajectories(graph, enumerate_trajectories(graph))


def root_biased_policy(graph, log_Z=0.0):
    params = np.zeros(graph.num_edges)
    params[graph.edge_id(0, 1)] = math.log(0.75)
    params[graph.edge_id(0, 2)] = math.log(0.25)
    return TabularPolicy(graph, forward_params=params, log_Z=log_Z)


def quick_config(epochs, **overrides):
    settings = {'epochs': epochs, 'batch': 16, 'lr_logits': 0.05, 'lr_log_z': 0.1, 'trace_every': 0}
    settings.update(overrides)
    return TrainConfig(**settings)


class ChunkTests(SimpleTestCase):

    def setUp(self):
        self.graph = build_regular_tree(2, 2)

    def test_document(self):
        chunk = chunk_from_document({'t': 2, 'loglik': {'3': -1.0, '4': 0.5, '5': 0.0, '6': -2.0}}, self.graph)
        self.assertEqual(chunk.t, 2)
        np.testing.assert_array_equal(chunk.loglik, [-1.0, 0.5, 0.0, -2.0])
        self.assertEqual(chunk.argmax, 1)
        self.assertFalse(chunk.loglik.flags.writeable)

    def test_invalid_documents(self):
        full = {'3': 0.0, '4': 0.0, '5': 0.0, '6': 0.0}
        documents = [
            {'t': 0, 'loglik': full},
            {'t': 1, 'loglik': {'3': 0.0, '4': 0.0, '5': 0.0}},
            {'t': 1, 'loglik': {**full, '1': 0.0}},
            {'t': 1, 'loglik': {**full, 'leaf': 0.0}},
            {'t': 1, 'loglik': full, 'note': 'extra'},
            {'loglik': full},
        ]
        for document in documents:
            with self.assertRaises(LabValidationError, msg=document):
                chunk_from_document(document, self.graph)

    def test_nonfinite_values(self):
        with self.assertRaises(LabValidationError):
            StreamChunk(1, [0.0, np.inf, 0.0, 0.0])

    def test_file_round_trip_and_errors(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / 'c1.json'
            chunk = synthetic_chunk(self.graph, 1, seed=3)
            save_chunk(chunk, self.graph, path)
            np.testing.assert_array_equal(load_chunk(path, self.graph).loglik, chunk.loglik)
            broken = Path(tmp) / 'broken.json'
            broken.write_text('{"t": 1,')
            with self.assertRaises(LabValidationError):
                load_chunk(broken, self.graph)
            with self.assertRaises(LabValidationError):
                load_chunk(Path(tmp) / 'missing.json', self.graph)

    def test_synthetic_set_chunk_is_additive(self):
        graph = build_set_graph(4, 2)
        chunk = synthetic_chunk(graph, 1, seed=7)
        loglik = {tuple(graph.label(x)): v for x, v in zip(graph.terminal_ids, chunk.loglik)}
        self.assertAlmostEqual(loglik[(1, 2)] + loglik[(3, 4)], loglik[(1, 3)] + loglik[(2, 4)], places=12)
        self.assertAlmostEqual(loglik[(1, 4)] + loglik[(2, 3)], loglik[(1, 3)] + loglik[(2, 4)], places=12)
        np.testing.assert_array_equal(synthetic_chunk(graph, 1, seed=7).loglik, chunk.loglik)
        self.assertFalse(np.array_equal(synthetic_chunk(graph, 2, seed=7).loglik, chunk.loglik))

    def test_posterior(self):
        prior = TargetDistribution.from_rewards(self.graph, REWARDS)
        chunks = [StreamChunk(1, [0.0, 1.0, 0.0, 0.0]), StreamChunk(2, [0.0, 0.0, 0.0, 2.0])]
        posterior = posterior_target(prior, chunks)
        np.testing.assert_allclose(posterior.log_reward, np.log([1.0, 2.0, 3.0, 4.0]) + [0.0, 1.0, 0.0, 2.0])


class UpdateKindTests(SimpleTestCase):

    def test_parse(self):
        self.assertEqual(UpdateKind.parse('sb'), UpdateKind(SB))
        kind = UpdateKind.parse('kl:k=4,score=1')
        self.assertEqual((kind.name, kind.k, kind.score), (KL, 4, True))
        self.assertEqual(str(kind), 'kl:k=4,score=1')
        self.assertEqual(UpdateKind.parse('kl').k, 8)

    def test_invalid(self):
        for text in ('kl:k=1', 'tb', 'sb:k=4'):
            with self.assertRaises(LabValidationError, msg=text):
                UpdateKind.parse(text)


class SBLossTests(SimpleTestCase):

    def setUp(self):
        self.graph = build_regular_tree(2, 3)
        self.batch = all_trajectories(self.graph)
        self.reference = random_policy(self.graph, np.random.default_rng(1), state_flows=False).frozen()

    def test_identical_policies_with_unit_likelihood(self):
        chunk = StreamChunk(1, np.zeros(self.graph.num_terminals))
        loss, grad = sb_loss_and_gradient(self.reference.copy(), self.reference, chunk, self.batch)
        self.assertLess(loss, 1e-24)
        self.assertLess(np.abs(grad).max(), 1e-10)

    def test_constant_likelihood_absorbs_into_log_z(self):
        chunk = StreamChunk(1, np.full(self.graph.num_terminals, -2.5))
        model = self.reference.copy()
        model.log_Z -= 2.5
        self.assertLess(sb_loss_and_gradient(model, self.reference, chunk, self.batch)[0], 1e-24)

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(9)
        for graph, backward in ((self.graph, 'uniform'), (build_random_dag(12, seed=3, edge_probability=0.3), BACKWARD_LEARNED)):
            batch = all_trajectories(graph)
            reference = random_policy(graph, rng, backward=backward, state_flows=False).frozen()
            model = random_policy(graph, rng, backward=backward, state_flows=False)
            chunk = StreamChunk(1, rng.normal(size=graph.num_terminals))
            _, grad = sb_loss_and_gradient(model, reference, chunk, batch)
            base = model.parameter_vector()
            shifted_policy = model.copy()
            numeric = np.zeros_like(base)
            for i in range(len(base)):
                for sign in (1, -1):
                    shifted = base.copy()
                    shifted[i] += sign * 1e-5
                    shifted_policy.set_parameter_vector(shifted)
                    numeric[i] += sign * sb_loss_and_gradient(shifted_policy, reference, chunk, batch)[0]
            np.testing.assert_allclose(grad, numeric / 2e-5, rtol=1e-5, atol=1e-7)

    def test_reweighted_reference_is_the_optimum(self):
        prior = TargetDistribution.from_rewards(build_regular_tree(2, 2), REWARDS)
        reference = balanced_policy(prior.graph, prior).frozen()
        chunk = synthetic_chunk(prior.graph, 1, seed=5)
        model = reweight_policy(reference, chunk.loglik)
        loss, _ = sb_loss_and_gradient(model, reference, chunk, all_trajectories(prior.graph))
        self.assertLess(loss, 1e-20)
        posterior = posterior_target(prior, [chunk])
        self.assertLess(total_variation(exact_marginal(model), posterior.probabilities), 1e-8)

    def test_full_optimisation_is_sound(self):
        prior = uniform_target(self.graph)
        reference = balanced_policy(self.graph, prior).frozen()
        chunk = synthetic_chunk(self.graph, 1, seed=2)
        model = reference.copy()

        def objective(vector):
            model.set_parameter_vector(vector)
            return sb_loss_and_gradient(model, reference, chunk, self.batch)

        result = minimize(
            objective, model.parameter_vector(), jac=True, method='L-BFGS-B',
            options={'maxiter': 5000, 'ftol': 1e-20, 'gtol': 1e-14},
        )
        model.set_parameter_vector(result.x)
        self.assertLess(result.fun, 1e-10)
        posterior = posterior_target(prior, [chunk])
        self.assertLess(total_variation(exact_marginal(model), posterior.probabilities), 1e-4)


class KLCriterionTests(SimpleTestCase):

    def setUp(self):
        self.graph = build_regular_tree(2, 2)
        rng = np.random.default_rng(12)
        self.reference = random_policy(self.graph, rng, state_flows=False).frozen()
        self.model = random_policy(self.graph, rng, state_flows=False)
        self.chunk = StreamChunk(1, rng.normal(size=4) + 3.0)

    def test_optimum_has_constant_gamma(self):
        model = reweight_policy(self.reference, self.chunk.loglik)
        batch = sample_batch(model, 8, seed=1)
        gamma, grad = kl_stream_gradient_rloo(model, self.reference, self.chunk, batch)
        self.assertLess(np.abs(grad).max(), 1e-9)
        expected = -math.log(np.dot(exact_marginal(self.reference), np.exp(self.chunk.loglik)))
        self.assertAlmostEqual(gamma, expected, places=9)
        self.assertLess(np.abs(exact_kl_gradient(model, self.reference, self.chunk)).max(), 1e-9)
        self.assertLess(trajectory_kl(model, self.reference, self.chunk), 1e-9)

    def test_rloo_is_unbiased_and_beats_the_score_estimator(self):
        exact = exact_kl_gradient(self.model, self.reference, self.chunk)
        k, groups = 4, 20_000
        batch = sample_batch(self.model, k * groups, seed=3)
        _, rloo = kl_gradient_rows(self.model, self.reference, self.chunk, batch, k, RLOO)
        _, score = kl_gradient_rows(self.model, self.reference, self.chunk, batch, k, SCORE)
        stderr = rloo.std(axis=0, ddof=1) / math.sqrt(groups)
        self.assertTrue(np.all(np.abs(rloo.mean(axis=0) - exact) <= 4 * stderr + 1e-9))
        self.assertLess(rloo.var(axis=0).sum(), score.var(axis=0).sum())

    def test_score_term_keeps_the_mean(self):
        k, groups = 4, 20_000
        batch = sample_batch(self.model, k * groups, seed=4)
        _, plain = kl_gradient_rows(self.model, self.reference, self.chunk, batch, k, RLOO)
        _, scored = kl_gradient_rows(self.model, self.reference, self.chunk, batch, k, RLOO, include_score=True)
        stderr = (scored - plain).std(axis=0, ddof=1) / math.sqrt(groups)
        self.assertTrue(np.all(np.abs((scored - plain).mean(axis=0)) <= 4 * stderr + 1e-9))

    def test_sample_count_checks(self):
        batch = sample_batch(self.model, 6, seed=0)
        with self.assertRaises(LabValidationError):
            kl_gradient_rows(self.model, self.reference, self.chunk, batch, 4)
        with self.assertRaises(LabValidationError):
            kl_gradient_rows(self.model, self.reference, self.chunk, batch, 1)

    def test_dynamic_programme_matches_enumeration(self):
        rng = np.random.default_rng(21)
        for graph in (self.graph, build_random_dag(12, seed=6, edge_probability=0.3)):
            reference = random_policy(graph, rng, state_flows=False).frozen()
            model = random_policy(graph, rng, state_flows=False)
            chunk = StreamChunk(1, rng.normal(size=graph.num_terminals))
            self.assertAlmostEqual(
                trajectory_kl(model, reference, chunk), trajectory_kl_enumerated(model, reference, chunk), places=10,
            )


class StreamUpdateTests(SimpleTestCase):

    def setUp(self):
        self.graph = build_regular_tree(2, 2)
        self.prior = TargetDistribution.from_rewards(self.graph, REWARDS)

    def test_unit_likelihood_keeps_the_marginal(self):
        flat = StreamChunk(1, np.zeros(4))
        for update in (UpdateKind(SB), UpdateKind(KL, k=4)):
            run = run_stream(self.prior, [flat], update, quick_config(50))
            self.assertEqual(len(run.policies), 2)
            self.assertLess(total_variation(exact_marginal(run.final), self.prior.probabilities), 1e-6)

    def test_reference_is_left_untouched(self):
        start = balanced_policy(self.graph, self.prior)
        before = start.parameter_vector()
        state = StreamState(start, None, 0, UpdateKind(SB))
        new_state, trace = stream_update(state, synthetic_chunk(self.graph, 1), quick_config(30, trace_every=10))
        np.testing.assert_array_equal(start.parameter_vector(), before)
        np.testing.assert_array_equal(new_state.reference.parameter_vector(), before)
        self.assertFalse(new_state.reference.forward_params.flags.writeable)
        self.assertEqual(new_state.t, 1)
        self.assertEqual([row.epoch for row in trace], [0, 10, 20, 29])

    def test_kl_update_leaves_log_z(self):
        start = balanced_policy(self.graph, self.prior)
        state = StreamState(start, None, 0, UpdateKind(KL, k=4))
        new_state, _ = stream_update(state, synthetic_chunk(self.graph, 1), quick_config(20))
        self.assertEqual(new_state.policy.log_Z, start.log_Z)

    def test_unknown_behaviour(self):
        state = StreamState(balanced_policy(self.graph, self.prior), None, 0, UpdateKind(SB))
        with self.assertRaises(LabValidationError):
            stream_update(state, synthetic_chunk(self.graph, 1), quick_config(5), behaviour='offline')

    @tag('slow')
    def test_sb_stream_tracks_the_posterior(self):
        chunks = [synthetic_chunk(self.graph, t, seed=4, scale=0.5) for t in (1, 2)]
        run = run_stream(self.prior, chunks, UpdateKind(SB), quick_config(2000))
        self.assertLess(run.final_tv(), 0.05)

    @tag('slow')
    def test_kl_stream_tracks_the_posterior(self):
        chunks = [synthetic_chunk(self.graph, 1, seed=4, scale=0.5)]
        run = run_stream(self.prior, chunks, UpdateKind(KL, k=8), quick_config(2000))
        self.assertLess(run.final_tv(), 0.05)

    @tag('slow')
    def test_chunk_order_does_not_matter(self):
        a, b = (synthetic_chunk(self.graph, t, seed=4, scale=0.5) for t in (1, 2))
        for update in (UpdateKind(SB), UpdateKind(KL, k=8)):
            forward = run_stream(self.prior, [a, b], update, quick_config(2000))
            swapped = run_stream(self.prior, [b, a], update, quick_config(2000))
            gap = total_variation(exact_marginal(forward.final), exact_marginal(swapped.final))
            self.assertLess(gap, 0.05, msg=str(update))

    def test_logliks_feed_the_audit(self):
        chunks = [synthetic_chunk(self.graph, t, seed=4) for t in (1, 2, 3)]
        run = run_stream(self.prior, chunks, UpdateKind(SB), quick_config(20))
        self.assertEqual(len(run.logliks), 3)
        for recorded, chunk in zip(run.logliks, chunks):
            np.testing.assert_array_equal(recorded, chunk.loglik)
        report = propagation_audit(run.prior, run.policies, run.logliks)
        self.assertEqual(len(report.rows), 9)
        self.assertTrue(report.all_hold)


class PropagationAuditTests(SimpleTestCase):

    def setUp(self):
        self.graph = build_regular_tree(2, 2)
        self.prior = TargetDistribution.from_rewards(self.graph, REWARDS)
        self.chunks = [synthetic_chunk(self.graph, t, seed=8) for t in (1, 2)]

    def test_balanced_steps_have_zero_error(self):
        posteriors = [self.prior, posterior_target(self.prior, self.chunks[:1]), posterior_target(self.prior, self.chunks)]
        policies = [balanced_policy(self.graph, target) for target in posteriors]
        report = propagation_audit(self.prior, policies, [chunk.loglik for chunk in self.chunks])
        self.assertEqual(len(report.rows), 6)
        self.assertTrue(report.all_hold)
        for row in report.rows:
            self.assertLess(row.lhs, 1e-10)

    def test_bounds_hold_for_arbitrary_models(self):
        for seed in range(5):
            rng = np.random.default_rng(seed)
            graph = build_random_dag(12, seed=seed, edge_probability=0.3) if seed % 2 else self.graph
            prior = TargetDistribution(graph, rng.normal(size=graph.num_terminals))
            policies = [random_policy(graph, rng, state_flows=False, log_z_scale=2.0) for _ in range(3)]
            logliks = [rng.normal(size=graph.num_terminals) * scale for scale in (0.5, 3.0)]
            report = propagation_audit(prior, policies, logliks)
            self.assertTrue(report.all_hold, msg=f'seed {seed}')

    def test_undertrained_start_dominates_the_ls_bound(self):
        previous = root_biased_policy(self.graph, log_Z=math.log(4))
        loglik = np.array([0.0, -1.0, -2.0, -3.0])
        current = reweight_policy(previous, loglik)
        rows = audit_step(1, previous, current, np.zeros(4), np.zeros(4), loglik)
        ls = next(row for row in rows if row.bound == LS_BOUND)
        self.assertTrue(ls.holds)
        self.assertGreater(ls.accuracy, ls.estimation)

    def test_sharp_likelihood_shrinks_the_posterior_gap(self):
        previous = root_biased_policy(self.graph, log_Z=math.log(4))
        loglik = np.array([0.0, -1.0, -2.0, -3.0])
        gaps = []
        for scale in (1.0, 100.0):
            rows = audit_step(1, previous, previous, np.zeros(4), np.zeros(4), loglik * scale)
            gaps.append(next(row for row in rows if row.bound == TV_KL_BOUND).accuracy)
        self.assertGreater(gaps[0], 1e-3)
        self.assertLess(gaps[1], 1e-12)

    def test_history_length_must_match(self):
        policy = balanced_policy(self.graph, self.prior)
        with self.assertRaises(LabValidationError):
            propagation_audit(self.prior, [policy, policy], [])


class StreamCommandTests(SimpleTestCase):

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.addCleanup(self.tmp.cleanup)
        self.dir = Path(self.tmp.name)

    def test_synthetic_stream_with_audit(self):
        audit = self.dir / 'audit.csv'
        trace = self.dir / 'trace.csv'
        out = StringIO()
        call_command(
            'stream', graph='tree:g=2,h=2', synthetic=2, epochs_per_chunk=20, trace_every=10,
            audit=str(audit), trace=str(trace), stdout=out,
        )
        with audit.open(newline='') as handle:
            rows = list(csv.reader(handle))
        self.assertEqual(tuple(rows[0]), AUDIT_HEADER)
        self.assertEqual(len(rows), 7)
        with trace.open(newline='') as handle:
            rows = list(csv.reader(handle))
        self.assertEqual(tuple(rows[0]), STREAM_TRACE_HEADER)
        self.assertEqual([(int(r[0]), int(r[1])) for r in rows[1:]], [(1, 0), (1, 10), (1, 19), (2, 0), (2, 10), (2, 19)])
        self.assertTrue(out.getvalue().startswith('tv='))
        self.assertIn('chunks=2 audit_holds=true', out.getvalue())

    def test_chunk_files_with_kl(self):
        graph = build_regular_tree(2, 2)
        paths = []
        for t in (1, 2):
            path = self.dir / f'c{t}.json'
            save_chunk(synthetic_chunk(graph, t, seed=1), graph, path)
            paths.append(str(path))
        policy = self.dir / 'policy.json'
        out = StringIO()
        call_command(
            'stream', graph='tree:g=2,h=2', chunks=paths, update='kl:k=4', epochs_per_chunk=5,
            policy_out=str(policy), stdout=out,
        )
        self.assertTrue(policy.exists())
        self.assertIn('chunks=2', out.getvalue())

    def test_chunk_order_is_checked(self):
        path = self.dir / 'c2.json'
        path.write_text(json.dumps({'t': 2, 'loglik': {'3': 0, '4': 0, '5': 0, '6': 0}}))
        with self.assertRaises(CommandError) as caught:
            call_command('stream', graph='tree:g=2,h=2', chunks=[str(path)], stdout=StringIO())
        self.assertEqual(caught.exception.returncode, 2)

    def test_one_chunk_source(self):
        with self.assertRaises(CommandError) as caught:
            call_command('stream', graph='tree:g=2,h=2', stdout=StringIO())
        self.assertEqual(caught.exception.returncode, 2)
