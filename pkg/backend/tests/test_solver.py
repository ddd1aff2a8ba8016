import unittest
from fractions import Fraction
from pathlib import Path

import sympy

from core.errors import PreconditionError
from core.exppoly import ExpPoly
from core.mdp import build_mdp, load_mdp
from core.model import load_stg
from core.regions import build_region_stg
from core.solver import (
    GameGraph,
    Mode,
    RationalFunctionValue,
    StateKind,
    ThresholdQuery,
    decide_threshold,
    evaluate_profile,
    exhaustive_optimum,
    solve_optimal,
    value_iteration_preview,
)

SAMPLES = Path(__file__).resolve().parent.parent / "samples"
Y = ExpPoly({1: 1})
ONE = ExpPoly.constant(1)


def game(name: str, mode: Mode = Mode.MAX) -> GameGraph:
    return GameGraph.from_mdp(build_mdp(build_region_stg(load_stg(SAMPLES / name))), mode)


class RationalFunctionValueTests(unittest.TestCase):
    def test_common_factors_cancel(self):
        value = RationalFunctionValue(ONE - Y, ONE - Y * Y)

        self.assertEqual(value.num, ONE)
        self.assertEqual(value.den, ONE + Y)

    def test_arithmetic(self):
        half = RationalFunctionValue.of(Fraction(1, 2))

        self.assertEqual(half + half, 1)
        self.assertEqual(RationalFunctionValue(Y) / RationalFunctionValue(Y), 1)
        self.assertTrue((half - half).is_zero)

    def test_compare(self):
        value = RationalFunctionValue(ONE, ONE + Y)

        self.assertEqual(value.compare(RationalFunctionValue(Y)), 1)
        self.assertEqual(RationalFunctionValue(Y).compare(value), -1)
        self.assertEqual(value.compare(value), 0)

    def test_float_matches_high_precision_reference(self):
        value = RationalFunctionValue(ONE, ONE + Y)

        self.assertAlmostEqual(float(value), float(sympy.N(1 / (1 + sympy.exp(-1)), 30)), places=14)


class SolveOptimalTests(unittest.TestCase):
    def test_race_prefers_the_retryable_branch(self):
        gg = game("race.json")

        solution = solve_optimal(gg)

        self.assertEqual(solution.value, RationalFunctionValue(ONE, ONE + Y))
        self.assertEqual(solution.strategy(gg)["S@{0}"].label, "b")

    def test_duel_needs_maxmin_mode(self):
        with self.assertRaises(PreconditionError):
            game("duel.json")

    def test_duel_maxmin_value(self):
        gg = game("duel.json", Mode.MAXMIN)

        solution = solve_optimal(gg)
        strategy = solution.strategy(gg)

        self.assertEqual(gg.kinds["G@{0}"], StateKind.MIN)
        self.assertEqual(solution.value, RationalFunctionValue(Y))
        self.assertEqual(strategy["S@{0}"].label, "a")
        self.assertEqual(strategy["G@{0}"].label, "block")

    def test_exhaustive_optimum_agrees(self):
        for name, mode in (("race.json", Mode.MAX), ("duel.json", Mode.MAXMIN)):
            with self.subTest(name=name):
                gg = game(name, mode)

                value, _ = exhaustive_optimum(gg)

                self.assertEqual(value, solve_optimal(gg).value)

    def test_exhaustive_limit(self):
        with self.assertRaises(PreconditionError):
            exhaustive_optimum(game("race.json"), limit=1)

    def test_shipped_mdp_reaches_target_surely(self):
        gg = GameGraph.from_mdp(load_mdp(SAMPLES / "worked-mdp.json"))

        solution = solve_optimal(gg)

        self.assertEqual(solution.value, 1)

    def test_states_that_cannot_reach_the_target_are_zero(self):
        gg = game("race.json")

        values = evaluate_profile(gg, gg.first_profile())

        self.assertTrue(values["L@{0}"].is_zero)
        self.assertEqual(values["S@{0}"], RationalFunctionValue(Y))

    def test_solution_json(self):
        gg = game("race.json")

        document = solve_optimal(gg).to_json(gg, precision=10)

        self.assertEqual(document["mode"], "max")
        self.assertEqual(document["initial"], "S@{0}")
        self.assertTrue(document["value"]["enclosure"][0].startswith("0.731058578"))


class ThresholdTests(unittest.TestCase):
    def setUp(self):
        self.value = solve_optimal(game("race.json")).value

    def test_threshold_verdicts(self):
        reference = 1 / (1 + sympy.exp(-1))
        for text in (">= 1/3", ">= 1/2", ">= 2/3", "< 3/4", "<= 1/3", "> 3/4"):
            with self.subTest(query=text):
                query = ThresholdQuery.parse(text)

                verdict = decide_threshold(self.value, query)

                difference = sympy.N(reference - sympy.Rational(query.p.numerator, query.p.denominator), 50)
                sign = 1 if difference > 0 else -1
                self.assertEqual(verdict.holds, query.relation.holds(sign, 0))

    def test_equality_with_an_exact_value(self):
        verdict = decide_threshold(RationalFunctionValue.of(1), ThresholdQuery.parse("= 1"))

        self.assertTrue(verdict.holds)
        self.assertEqual(verdict.sign, 0)
        self.assertIsNone(verdict.certificate)

    def test_malformed_threshold(self):
        for text in ("1/2", ">= x", ">= 3/2"):
            with self.subTest(query=text):
                with self.assertRaises(ValueError):
                    ThresholdQuery.parse(text)


class ValueIterationTests(unittest.TestCase):
    def test_preview_is_close_to_the_exact_value(self):
        gg = game("race.json")

        preview = value_iteration_preview(gg)

        self.assertAlmostEqual(preview["S@{0}"], float(solve_optimal(gg).value), places=10)


if __name__ == "__main__":
    unittest.main()
