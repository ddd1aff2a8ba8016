import json
import unittest
from fractions import Fraction
from pathlib import Path

import numpy as np

from core.errors import IllegalMoveError, ModelError, UnsupportedModelError
from core.exppoly import ExpPoly
from core.model import State, Valuation, load_stg, parse_stg
from core.semantics import (
    OutcomeKind,
    PathStep,
    SimulationLimits,
    estimate_reach,
    exact_path_probability,
    sample_run,
    step,
    wilson_interval,
)
from core.strategies import Profile, profile_from_files

SAMPLES = Path(__file__).resolve().parent.parent / "samples"
Y = ExpPoly({1: 1})


def at(location, value=0):
    return State(location, Valuation({"x": Fraction(value)}))


class StepTests(unittest.TestCase):
    def setUp(self):
        self.worked = load_stg(SAMPLES / "worked.json")

    def test_delay_then_edge(self):
        successor = step(self.worked, at("A"), Fraction(2, 5), "e4")

        self.assertEqual(successor, at("B", Fraction(2, 5)))

    def test_reset_on_edge(self):
        successor = step(self.worked, at("A", Fraction(1, 2)), Fraction(1, 2), "e1")

        self.assertEqual(successor, at("C", 0))

    def test_disabled_move_is_illegal(self):
        with self.assertRaises(IllegalMoveError):
            step(self.worked, at("A"), Fraction(1, 2), "e1")

    def test_edge_from_another_location_is_rejected(self):
        with self.assertRaises(ModelError):
            step(self.worked, at("A"), Fraction(0), "e2")


class PathStepTests(unittest.TestCase):
    def test_parses_optional_delay(self):
        self.assertEqual(PathStep.parse("e3"), PathStep("e3"))
        self.assertEqual(PathStep.parse("b@1/2"), PathStep("b", Fraction(1, 2)))


class ExactPathTests(unittest.TestCase):
    def setUp(self):
        self.worked = load_stg(SAMPLES / "worked.json")
        self.uniform_pair = load_stg(SAMPLES / "uniform-pair.json")

    def test_uniform_worked_example_is_one_eighth(self):
        self.assertEqual(exact_path_probability(self.uniform_pair, ["e1", "e2"]), Fraction(1, 8))

    def test_uniform_single_step_share(self):
        self.assertEqual(exact_path_probability(self.uniform_pair, ["e3"]), Fraction(1, 2))

    def test_empty_path_has_probability_one(self):
        self.assertEqual(exact_path_probability(self.uniform_pair, []), 1)

    def test_single_exponential_step(self):
        self.assertEqual(exact_path_probability(self.worked, ["e1"]), Y)

    def test_two_exponential_steps_through_a_symbolic_entry(self):
        self.assertEqual(exact_path_probability(self.worked, ["e4", "e5"]), Y)
        self.assertEqual(exact_path_probability(self.worked, ["e4", "e7"]), 1 - 2 * Y)

    def test_out_probabilities_at_c_partition_one(self):
        start = at("C")
        values = {
            label: exact_path_probability(self.worked, label.split(), start)
            for label in ("e2", "e3 e1", "e3 e4 e5", "e3 e4 e7")
        }

        self.assertEqual(values["e2"], Y)
        self.assertEqual(values["e3 e1"], Y)
        self.assertEqual(values["e3 e4 e5"], Y / 2)
        self.assertEqual(values["e3 e4 e7"], 1 - Fraction(5, 2) * Y)
        self.assertEqual(sum(values.values(), ExpPoly()), 1)

    def test_reset_separated_path_factorizes(self):
        first = exact_path_probability(self.worked, ["e1"])
        second = exact_path_probability(self.worked, ["e2"], at("C"))

        self.assertEqual(exact_path_probability(self.worked, ["e1", "e2"]), first * second)

    def test_player_step_with_explicit_delay(self):
        race = load_stg(SAMPLES / "race.json")

        self.assertEqual(exact_path_probability(race, ["b@0", "q_win"]), 1 - Y)
        self.assertEqual(exact_path_probability(race, ["b@0", "q_lose"]), Y - Y**2)

    def test_two_clock_models_are_unsupported(self):
        stg = load_stg(SAMPLES / "two-clock-unfair.json")

        with self.assertRaises(UnsupportedModelError):
            exact_path_probability(stg, ["e4"])


class WilsonIntervalTests(unittest.TestCase):
    def test_known_interval(self):
        low, high = wilson_interval(5, 10, 0.95)

        self.assertAlmostEqual(low, 0.2366, places=4)
        self.assertAlmostEqual(high, 0.7634, places=4)

    def test_zero_hits_start_at_zero(self):
        low, high = wilson_interval(0, 100, 0.99)

        self.assertEqual(low, 0.0)
        self.assertGreater(high, 0.0)


class SamplingTests(unittest.TestCase):
    def setUp(self):
        self.uniform_pair = load_stg(SAMPLES / "uniform-pair.json")
        self.race = load_stg(SAMPLES / "race.json")
        self.retry = profile_from_files(SAMPLES / "race-diamond-b.json")

    def test_initial_target_hits_at_time_zero(self):
        stg = self.uniform_pair.with_initial("D", {"x": 0})

        sampled = sample_run(stg, Profile(), np.random.default_rng(0))

        self.assertEqual(sampled.outcome.kind, OutcomeKind.TARGET_HIT)
        self.assertEqual(sampled.outcome.elapsed, 0)

    def test_path_frequency_matches_exact_value(self):
        rng = np.random.default_rng(7)
        samples = 20_000
        hits = 0
        for _ in range(samples):
            sampled = sample_run(self.uniform_pair, Profile(), rng, SimulationLimits(max_steps=2))
            hits += sampled.run.edge_ids() == ["e1", "e2"]

        low, high = wilson_interval(hits, samples, 0.999)

        self.assertLessEqual(low, 0.125)
        self.assertGreaterEqual(high, 0.125)

    def test_strategy_files_drive_the_estimate(self):
        estimate = estimate_reach(self.race, self.retry, 5000, seed=3)
        value = 1 / (1 + float(Y))

        self.assertTrue(estimate.within_sigmas(value, 4.0), estimate.to_json())
        self.assertGreater(estimate.outcomes.get("trapped", 0), 0)

    def test_results_do_not_depend_on_worker_count(self):
        single = estimate_reach(self.race, self.retry, 5000, seed=11, workers=1)
        pooled = estimate_reach(self.race, self.retry, 5000, seed=11, workers=3)

        self.assertEqual(single.hits, pooled.hits)
        self.assertEqual(single.outcomes, pooled.outcomes)

    def test_time_bound_lowers_the_estimate(self):
        bounded = estimate_reach(
            self.race, self.retry, 4000, seed=5, limits=SimulationLimits(time_bound=Fraction(1, 2))
        )
        unbounded = estimate_reach(self.race, self.retry, 4000, seed=5)

        self.assertLessEqual(bounded.point, unbounded.point)
        self.assertTrue(bounded.within_sigmas(1 - float(ExpPoly({1: 1}, 2)), 4.0), bounded.to_json())

    def test_unreachable_target_estimates_zero(self):
        document = {
            "name": "unreachable",
            "clocks": ["x"],
            "locations": [{"name": "A", "owner": "stochastic"}, {"name": "T", "owner": "diamond"}],
            "edges": [{"id": "loop", "source": "A", "resets": ["x"], "target": "A"}],
            "distributions": {"A": {"kind": "exponential", "rate": "1"}},
            "initial": {"location": "A"},
            "targets": ["T"],
        }
        estimate = estimate_reach(parse_stg(json.dumps(document)), Profile(), 200, seed=1)

        self.assertEqual(estimate.point, 0.0)
        self.assertEqual(estimate.ci_low, 0.0)
        self.assertEqual(estimate.outcomes, {"trapped": 200})

    def test_at_least_one_sample(self):
        with self.assertRaises(ValueError):
            estimate_reach(self.race, self.retry, 0)


if __name__ == "__main__":
    unittest.main()
