import os
import tempfile
import unittest
from pathlib import Path

import numpy as np
import pytest
from django.test import SimpleTestCase
from pydantic import ValidationError

from dispatch.exceptions import CheckpointError, CheckpointMismatchError
from dispatch.services.features import FeatureSet, FeatureSetSpec, FeatureVector
from dispatch.services.experiments import solution_quality
from dispatch.services.policies import PFAPolicy, QPolicy, RandomPolicy, tune_threshold_by_enumeration
from dispatch.services.simulator import Alpha, FeasibilityPair, run_episode
from dispatch.services.trainer import (
    LEARNING_CURVE_COLUMNS,
    MODE_NETWORKS,
    DecisionTrace,
    Experience,
    NetworkBank,
    NetworkId,
    ReplayBuffer,
    TrainingSchedule,
    choose_action,
    eps_at,
    evaluate_bank,
    finalize_episode_returns,
    learning_curve_frame,
    load_bank,
    network_for,
    save_bank,
    train_step,
    training_run,
)
from dispatch.services.world import gen_sample_paths

from .fixtures import toy_config

VEHICLE_OPTION = object()
DRONE_OPTION = object()


def _features(*values):
    vector = np.asarray(values, dtype=np.float64)
    return FeatureVector(raw=vector, normalized=vector)


def _tiny_schedule(**changes):
    values = dict(
        total_steps=20,
        minibatch=32,
        buffer_capacity=200,
        eval_interval=10,
        hidden_nodes=8,
    )
    values.update(changes)
    return TrainingSchedule(**values)


class ScheduleTests(SimpleTestCase):
    def test_epsilon_decays_linearly_then_stays(self):
        schedule = TrainingSchedule(total_steps=1000, eps_start=1.0, eps_end=0.01, eps_decay_fraction=0.8)

        self.assertEqual(eps_at(0, schedule), 1.0)
        self.assertAlmostEqual(eps_at(400, schedule), 0.505)
        self.assertAlmostEqual(eps_at(800, schedule), 0.01)
        self.assertAlmostEqual(eps_at(999, schedule), 0.01)

    def test_zero_budget_uses_final_epsilon(self):
        self.assertEqual(eps_at(0, TrainingSchedule(total_steps=0)), 0.01)

    def test_minibatch_bounded_by_buffer(self):
        with self.assertRaises(ValidationError):
            TrainingSchedule(minibatch=100, buffer_capacity=10)


class ReplayBufferTests(SimpleTestCase):
    def _experience(self, value):
        return Experience(_features(value, value), 0, float(value), NetworkId.BOTH)

    def test_ring_overwrites_oldest(self):
        buffer = ReplayBuffer(3, 2)

        for value in range(5):
            buffer.push(self._experience(value))

        self.assertEqual(len(buffer), 3)
        self.assertEqual(list(buffer.ordered().targets), [2.0, 3.0, 4.0])

    def test_partial_fill_keeps_insertion_order(self):
        buffer = ReplayBuffer(5, 2)
        buffer.push(self._experience(7))
        buffer.push(self._experience(8))

        self.assertEqual(list(buffer.ordered().targets), [7.0, 8.0])

    def test_clear(self):
        buffer = ReplayBuffer(3, 2)
        buffer.push(self._experience(1))

        buffer.clear()

        self.assertEqual(len(buffer), 0)

    def test_sample_draws_stored_rows(self):
        buffer = ReplayBuffer(4, 2)
        for value in (10, 20):
            buffer.push(self._experience(value))

        batch = buffer.sample(50, np.random.default_rng(0))

        self.assertEqual(len(batch.targets), 50)
        self.assertTrue(set(batch.targets) <= {10.0, 20.0})


class ReturnTests(SimpleTestCase):
    def test_returns_to_go(self):
        traces = [DecisionTrace(NetworkId.BOTH, 0, _features(0.0)) for _ in range(4)]

        experiences = finalize_episode_returns(traces, [1, 0, 1, 1])

        self.assertEqual([e.return_to_go for e in experiences], [3.0, 2.0, 2.0, 1.0])

    def test_decisions_without_network_are_dropped(self):
        traces = [
            DecisionTrace(NetworkId.VEHICLE_ONLY, 1, _features(0.0)),
            DecisionTrace(None, None, None),
            DecisionTrace(NetworkId.DRONE_ONLY, 0, _features(0.0)),
        ]

        experiences = finalize_episode_returns(traces, [0, 1, 1])

        self.assertEqual([e.network for e in experiences], [NetworkId.VEHICLE_ONLY, NetworkId.DRONE_ONLY])
        self.assertEqual([e.return_to_go for e in experiences], [2.0, 1.0])

    def test_reward_count_must_match(self):
        with self.assertRaises(ValueError):
            finalize_episode_returns([DecisionTrace(None, None, None)], [])


class ActionSelectionTests(SimpleTestCase):
    def setUp(self):
        cfg = toy_config()
        self.spec = FeatureSetSpec(variant=FeatureSet.ACTION_ONLY)
        self.bank = NetworkBank.create(cfg, self.spec, _tiny_schedule(), np.random.default_rng(0))
        self.both = FeasibilityPair(VEHICLE_OPTION, DRONE_OPTION)

    def test_network_for_feasibility_pattern(self):
        self.assertEqual(network_for(self.both, "q"), NetworkId.BOTH)
        self.assertEqual(network_for(FeasibilityPair(VEHICLE_OPTION, None), "q"), NetworkId.VEHICLE_ONLY)
        self.assertEqual(network_for(FeasibilityPair(None, DRONE_OPTION), "q"), NetworkId.DRONE_ONLY)
        self.assertIsNone(network_for(FeasibilityPair(None, None), "q"))
        self.assertEqual(network_for(self.both, "q_no_rej"), NetworkId.NO_REJECT)
        self.assertIsNone(network_for(FeasibilityPair(VEHICLE_OPTION, None), "q_no_rej"))

    def test_greedy_choice_consumes_no_randomness(self):
        rng = np.random.default_rng(5)
        before = rng.bit_generator.state

        choice = choose_action(self.bank, _features(0.2, 0.4, 0.1), self.both, 0.0, rng)

        self.assertEqual(rng.bit_generator.state, before)
        self.assertEqual(choice.network, NetworkId.BOTH)
        q = self.bank.q_values(NetworkId.BOTH, np.array([0.2, 0.4, 0.1]))
        self.assertEqual(choice.action_index, int(np.argmax(q)))

    def test_single_fleet_consults_its_network(self):
        choice = choose_action(self.bank, _features(0.2, 0.4, 0.1), FeasibilityPair(None, DRONE_OPTION), 0.0, None)

        self.assertEqual(choice.network, NetworkId.DRONE_ONLY)
        self.assertIn(choice.alpha, (Alpha.DRONE, Alpha.NO_SERVICE))

    def test_no_reject_bank_takes_only_option(self):
        schedule = _tiny_schedule(mode="q_no_rej")
        bank = NetworkBank.create(toy_config(), self.spec, schedule, np.random.default_rng(0))

        choice = choose_action(bank, None, FeasibilityPair(None, DRONE_OPTION), 0.0, None)

        self.assertEqual(choice.alpha, Alpha.DRONE)
        self.assertIsNone(choice.network)

    def test_nothing_feasible_is_denied(self):
        choice = choose_action(self.bank, None, FeasibilityPair(None, None), 0.0, None)

        self.assertEqual(choice.alpha, Alpha.NO_SERVICE)
        self.assertIsNone(choice.network)

    def test_full_exploration_covers_all_actions(self):
        rng = np.random.default_rng(9)

        picks = {
            choose_action(self.bank, _features(0.2, 0.4, 0.1), self.both, 1.0, rng).alpha
            for _ in range(100)
        }

        self.assertEqual(picks, {Alpha.VEHICLE, Alpha.DRONE, Alpha.NO_SERVICE})

    def test_bank_layout(self):
        self.assertEqual(set(self.bank.params), set(MODE_NETWORKS["q"]))
        self.assertEqual(self.bank.params[NetworkId.BOTH].layer_dims, [3, 8, 8, 3])
        self.assertEqual(self.bank.params[NetworkId.DRONE_ONLY].layer_dims, [3, 8, 8, 2])


class TrainStepTests(SimpleTestCase):
    def setUp(self):
        self.bank = NetworkBank.create(
            toy_config(), FeatureSetSpec(variant=FeatureSet.ACTION_ONLY), _tiny_schedule(), np.random.default_rng(4)
        )

    def _experience(self, network, target):
        return Experience(_features(0.3, 0.6, 0.9), 0, target, network)

    def test_only_networks_with_data_update(self):
        before = {network: params.copy() for network, params in self.bank.params.items()}

        bank, losses = train_step(
            self.bank, [self._experience(NetworkId.BOTH, 5.0)], _tiny_schedule(), 0, np.random.default_rng(0)
        )

        self.assertEqual(set(losses), {NetworkId.BOTH})
        self.assertGreater(losses[NetworkId.BOTH], 0.0)
        self.assertFalse(np.array_equal(bank.params[NetworkId.BOTH].biases[-1], before[NetworkId.BOTH].biases[-1]))
        self.assertTrue(
            np.array_equal(bank.params[NetworkId.DRONE_ONLY].weights[0], before[NetworkId.DRONE_ONLY].weights[0])
        )

    def test_without_replay_only_newest_experiences_remain(self):
        schedule = _tiny_schedule(replay=False)
        rng = np.random.default_rng(0)
        train_step(self.bank, [self._experience(NetworkId.BOTH, 1.0)] * 3, schedule, 0, rng)

        train_step(self.bank, [self._experience(NetworkId.DRONE_ONLY, 2.0)], schedule, 1, rng)

        self.assertEqual(len(self.bank.buffers[NetworkId.BOTH]), 0)
        self.assertEqual(len(self.bank.buffers[NetworkId.DRONE_ONLY]), 1)

    def test_replay_keeps_history(self):
        rng = np.random.default_rng(0)
        train_step(self.bank, [self._experience(NetworkId.BOTH, 1.0)] * 3, _tiny_schedule(), 0, rng)

        train_step(self.bank, [self._experience(NetworkId.DRONE_ONLY, 2.0)], _tiny_schedule(), 1, rng)

        self.assertEqual(len(self.bank.buffers[NetworkId.BOTH]), 3)

    def test_single_experience_converges_to_its_return(self):
        schedule = _tiny_schedule(lr_base=0.5, lr_decay_steps=500)
        rng = np.random.default_rng(0)
        experience = Experience(_features(0.3, 0.6, 0.9), 1, 4.0, NetworkId.BOTH)

        train_step(self.bank, [experience], schedule, 0, rng)
        for step in range(1, 5000):
            train_step(self.bank, [], schedule, step, rng)

        q = self.bank.q_values(NetworkId.BOTH, np.array([0.3, 0.6, 0.9]))
        self.assertAlmostEqual(q[1], 4.0, delta=1e-3)


class CheckpointTests(SimpleTestCase):
    def setUp(self):
        self.cfg = toy_config()
        self.bank = NetworkBank.create(self.cfg, FeatureSetSpec(), _tiny_schedule(), np.random.default_rng(1))
        self.tmp = tempfile.TemporaryDirectory()
        self.addCleanup(self.tmp.cleanup)
        self.target = Path(self.tmp.name) / "bank.sdqb"

    def test_reload_preserves_weights(self):
        save_bank(self.bank, self.target)
        loaded = load_bank(self.target)

        self.assertEqual(loaded.cfg_fleet, (1, 2))
        self.assertEqual(loaded.feature_spec, self.bank.feature_spec)
        for network, params in self.bank.params.items():
            for a, b in zip(params.weights, loaded.params[network].weights):
                self.assertTrue(np.array_equal(a, b))

    def test_garbage_rejected(self):
        self.target.write_bytes(b"not a checkpoint at all")

        with self.assertRaises(CheckpointError):
            load_bank(self.target)

    def test_truncated_rejected(self):
        save_bank(self.bank, self.target)
        self.target.write_bytes(self.target.read_bytes()[:-16])

        with self.assertRaises(CheckpointError):
            load_bank(self.target)

    def test_fleet_mismatch(self):
        with self.assertRaises(CheckpointMismatchError):
            self.bank.check_compatible(toy_config(fleet_m=2))

    def test_feature_size_mismatch(self):
        # FULL features grow with the drone count
        relabelled = NetworkBank((1, 3), self.bank.feature_spec, "q", self.bank.params, self.bank.adam)

        with self.assertRaises(CheckpointMismatchError):
            relabelled.check_compatible(toy_config(fleet_n=3))


class TrainingRunTests(SimpleTestCase):
    def setUp(self):
        self.cfg = toy_config()
        self.paths = gen_sample_paths(self.cfg, 4, 100)
        self.eval_paths = gen_sample_paths(self.cfg, 2, 200)

    def test_smoke(self):
        outcome = training_run(self.cfg, self.paths, _tiny_schedule(), 3, self.eval_paths)

        self.assertEqual([point.step for point in outcome.curve], [10, 20])
        self.assertEqual(outcome.best_eval, max(p.eval_mean_served for p in outcome.curve))
        self.assertAlmostEqual(evaluate_bank(outcome.best_bank, self.eval_paths, self.cfg), outcome.best_eval)

        frame = learning_curve_frame(outcome.curve)
        self.assertEqual(list(frame.columns), LEARNING_CURVE_COLUMNS)
        self.assertEqual(len(frame), 2)
        self.assertTrue(frame["loss_no_reject"].isna().all())

    def test_same_seed_same_weights(self):
        first = training_run(self.cfg, self.paths, _tiny_schedule(), 8)
        second = training_run(self.cfg, self.paths, _tiny_schedule(), 8)

        for network in first.bank.params:
            self.assertTrue(
                np.array_equal(first.bank.params[network].weights[0], second.bank.params[network].weights[0])
            )

    def test_no_reject_mode_and_no_replay(self):
        schedule = _tiny_schedule(mode="q_no_rej", replay=False)

        outcome = training_run(self.cfg, self.paths, schedule, 2, self.eval_paths)

        self.assertEqual(set(outcome.bank.params), {NetworkId.NO_REJECT})

    def test_needs_paths(self):
        with self.assertRaises(ValueError):
            training_run(self.cfg, [], _tiny_schedule(), 0)


@pytest.mark.slow
@unittest.skipUnless(os.getenv("SDD_RUN_SLOW"), "set SDD_RUN_SLOW=1 to run long training checks")
class LongTrainingTests(SimpleTestCase):
    """One vehicle, two drones, about 50 requests a day, 5,000 training steps."""

    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls.cfg = toy_config(fleet_m=1, fleet_n=2, expected_requests=50)
        paths = gen_sample_paths(cls.cfg, 500, 0)
        eval_paths = gen_sample_paths(cls.cfg, 20, 1000)
        schedule = dict(minibatch=256, buffer_capacity=5000, eval_interval=250, eval_paths=20)

        cls.untrained = training_run(cls.cfg, paths, TrainingSchedule(total_steps=0, **schedule), 0, eval_paths)
        cls.trained = training_run(cls.cfg, paths, TrainingSchedule(total_steps=5000, **schedule), 0, eval_paths)
        cls.days = gen_sample_paths(cls.cfg, 200, 50_000)

    def _quality(self, policy):
        return solution_quality([run_episode(policy, day, self.cfg) for day in self.days])

    def test_training_improves_on_the_untrained_bank(self):
        self.assertGreater(
            self._quality(QPolicy(self.trained.best_bank, self.cfg)),
            self._quality(QPolicy(self.untrained.bank, self.cfg)),
        )

    def test_beats_random_by_five_points(self):
        learned = self._quality(QPolicy(self.trained.best_bank, self.cfg))

        self.assertGreaterEqual(learned - self._quality(RandomPolicy(1)), 0.05)

    def test_matches_tuned_threshold_policy(self):
        tuning = tune_threshold_by_enumeration(
            lambda tau: PFAPolicy(tau, self.cfg),
            range(0, 41, 2),
            gen_sample_paths(self.cfg, 50, 60_000),
            self.cfg,
        )
        tuned = self._quality(PFAPolicy(tuning.best, self.cfg))

        self.assertGreaterEqual(self._quality(QPolicy(self.trained.best_bank, self.cfg)), tuned - 0.01)
