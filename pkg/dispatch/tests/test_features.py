import numpy as np
from django.test import SimpleTestCase

from dispatch.services.features import (
    FeatureSet,
    FeatureSetSpec,
    distance_cap,
    extract,
    feature_dim,
    normalization_bounds,
)
from dispatch.services.routing import INFEASIBLE_DELTA
from dispatch.services.simulator import Action, run_episode
from dispatch.services.world import gen_sample_paths

from .fixtures import (
    ILLUSTRATIVE_SCRIPT,
    ScriptedPolicy,
    illustrative_config,
    illustrative_path,
    toy_config,
)


class IllustrativeFeatureTests(SimpleTestCase):
    """Features of the last illustrative decision (t=60, vehicle infeasible)."""

    def setUp(self):
        self.cfg = illustrative_config()
        policy = ScriptedPolicy(ILLUSTRATIVE_SCRIPT)
        run_episode(policy, illustrative_path(self.cfg), self.cfg)
        self.state, self.feasibility = policy.seen[5]

    def _raw(self, variant, basis="vehicle"):
        spec = FeatureSetSpec(variant=variant, distance_basis=basis)
        return list(extract(self.state, self.feasibility, spec, self.cfg).raw)

    def test_full_vector(self):
        self.assertEqual(self._raw(FeatureSet.FULL), [60.0, 60.0, INFEASIBLE_DELTA, 220.0, 124.0])

    def test_drone_distance_basis(self):
        raw = self._raw(FeatureSet.FULL, basis="drone")

        self.assertAlmostEqual(raw[1], 22.3607, places=4)

    def test_local_falls_back_to_earliest_vehicle(self):
        self.assertEqual(self._raw(FeatureSet.LOCAL), [60.0, 60.0, INFEASIBLE_DELTA, 220.0, 124.0])

    def test_reduced_variants(self):
        self.assertEqual(self._raw(FeatureSet.ACTION_ONLY), [60.0, 60.0, INFEASIBLE_DELTA])
        self.assertEqual(self._raw(FeatureSet.DISTANCE_ONLY), [60.0, 60.0])

    def test_post_decision_repeats_no_service_for_infeasible_vehicle(self):
        raw = self._raw(FeatureSet.POST_DECISION)

        self.assertEqual(len(raw), 9)
        self.assertEqual(raw[0:3], raw[6:9])
        self.assertEqual(raw[0:2], [60.0, 360.0])
        self.assertEqual(raw[5], 324.0)

    def test_normalized_in_unit_interval(self):
        for variant in FeatureSet:
            spec = FeatureSetSpec(variant=variant)
            vector = extract(self.state, self.feasibility, spec, self.cfg)
            self.assertTrue(np.all(vector.normalized >= 0.0))
            self.assertTrue(np.all(vector.normalized <= 1.0))
            self.assertEqual(len(vector.normalized), feature_dim(spec, self.cfg))


class NormalizationTests(SimpleTestCase):
    def test_dimensions_per_variant(self):
        cfg = toy_config(fleet_m=2, fleet_n=3)

        dims = {variant: feature_dim(FeatureSetSpec(variant=variant), cfg) for variant in FeatureSet}

        self.assertEqual(
            dims,
            {
                FeatureSet.FULL: 8,
                FeatureSet.LOCAL: 5,
                FeatureSet.ACTION_ONLY: 3,
                FeatureSet.POST_DECISION: 18,
                FeatureSet.DISTANCE_ONLY: 2,
            },
        )

    def test_bounds(self):
        cfg = toy_config()
        lo, hi = normalization_bounds(cfg, FeatureSetSpec())

        self.assertTrue(np.all(lo == 0))
        self.assertEqual(hi[0], cfg.t_d_max)
        self.assertEqual(hi[2], INFEASIBLE_DELTA)
        self.assertEqual(hi[1], distance_cap(cfg, FeatureSetSpec()))

    def test_time_bounds_follow_the_drone_shift(self):
        cfg = toy_config(t_v_max=300, t_d_max=240)

        _, hi = normalization_bounds(cfg, FeatureSetSpec(variant=FeatureSet.POST_DECISION))

        self.assertTrue(np.all(hi == 240))

    def test_distance_cap_honours_max_distance(self):
        spec = FeatureSetSpec()

        capped = distance_cap(toy_config(max_distance_km=1.0), spec)

        self.assertAlmostEqual(capped, 60.0 / toy_config().travel.drone_speed_kmh)

    def test_random_days_stay_normalized(self):
        cfg = toy_config(fleet_m=2, fleet_n=2, expected_requests=50)
        spec = FeatureSetSpec(variant=FeatureSet.POST_DECISION)
        recorder = _Recorder()

        for path in gen_sample_paths(cfg, 3, 17):
            run_episode(recorder, path, cfg)

        self.assertTrue(recorder.seen)
        for state, feasibility in recorder.seen:
            vector = extract(state, feasibility, spec, cfg)
            self.assertTrue(np.all((vector.normalized >= 0) & (vector.normalized <= 1)))


class _Recorder(ScriptedPolicy):
    """Always denies, keeping every state it is shown."""

    def __init__(self):
        super().__init__([])

    def __call__(self, state, feasibility):
        self.seen.append((state, feasibility))
        return Action.deny()
