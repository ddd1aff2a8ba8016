import json
import unittest
from fractions import Fraction
from pathlib import Path

from core.errors import BlockedStateError, ModelError
from core.model import (
    INF,
    ClockConstraint,
    Interval,
    IntervalSet,
    Owner,
    State,
    Valuation,
    dump_stg,
    edge_choice_prob,
    enabled_interval,
    enabled_set,
    load_stg,
    parse_rational,
    parse_stg,
    satisfies,
)

SAMPLES = Path(__file__).resolve().parent.parent / "samples"


def one_clock_state(location, value):
    return State(location, Valuation({"x": Fraction(value)}))


class ClockConstraintTests(unittest.TestCase):
    def test_parses_conjunctions_and_true(self):
        constraint = ClockConstraint.parse("x>=1 && x<2")

        self.assertEqual(len(constraint.atoms), 2)
        self.assertTrue(constraint.holds({"x": Fraction(3, 2)}))
        self.assertFalse(constraint.holds({"x": Fraction(2)}))
        self.assertTrue(ClockConstraint.parse("true").is_true)
        self.assertTrue(ClockConstraint.parse("").is_true)

    def test_double_equals_reads_as_equality(self):
        constraint = ClockConstraint.parse("x==1")

        self.assertEqual(str(constraint), "x=1")

    def test_rejects_malformed_atoms(self):
        with self.assertRaises(ValueError):
            ClockConstraint.parse("x <= y")

    def test_delay_interval_shifts_by_clock_value(self):
        interval = ClockConstraint.parse("x>=1 && x<=2").delay_interval({"x": Fraction(1, 2)})

        self.assertEqual(interval, Interval(Fraction(1, 2), Fraction(3, 2), True, True))


class IntervalTests(unittest.TestCase):
    def test_point_and_empty(self):
        self.assertTrue(Interval(Fraction(1), Fraction(1)).is_point)
        self.assertTrue(Interval(Fraction(1), Fraction(1), True, False).is_empty)

    def test_union_merges_touching_parts(self):
        union = IntervalSet.union_of(
            [Interval(Fraction(0), Fraction(1), True, False), Interval(Fraction(1), Fraction(2), True, True)]
        )

        self.assertEqual(len(union.parts), 1)
        self.assertEqual(union.measure, 2)
        self.assertTrue(union.is_bounded)

    def test_unbounded_union(self):
        union = IntervalSet.union_of([Interval(Fraction(0), INF, True, False)])

        self.assertFalse(union.is_bounded)
        self.assertTrue(union.covers_non_negative())


class ParseRationalTests(unittest.TestCase):
    def test_accepts_literals(self):
        self.assertEqual(parse_rational("1/3"), Fraction(1, 3))
        self.assertEqual(parse_rational(2), Fraction(2))
        self.assertEqual(parse_rational(0.5), Fraction(1, 2))

    def test_rejects_booleans_and_garbage(self):
        with self.assertRaises(ValueError):
            parse_rational(True)
        with self.assertRaises(ValueError):
            parse_rational("one half")


class StgTests(unittest.TestCase):
    def setUp(self):
        self.worked = load_stg(SAMPLES / "worked.json")
        self.uniform_pair = load_stg(SAMPLES / "uniform-pair.json")

    def test_loads_owners_and_targets(self):
        self.assertEqual(self.worked.owner("A"), Owner.STOCHASTIC)
        self.assertEqual(self.worked.owner("D"), Owner.DIAMOND)
        self.assertTrue(self.worked.is_target("E"))
        self.assertEqual(self.worked.max_constant(), 1)
        self.assertEqual(self.worked.rate_denominator(), 1)

    def test_owner_strings_are_case_insensitive(self):
        document = json.loads((SAMPLES / "uniform-pair.json").read_text(encoding="utf-8"))
        document["locations"][0]["owner"] = "Stochastic"

        stg = parse_stg(json.dumps(document))

        self.assertEqual(stg.owner("A"), Owner.STOCHASTIC)

    def test_round_trip_keeps_the_model(self):
        again = parse_stg(dump_stg(self.worked))

        self.assertEqual(again.edges, self.worked.edges)
        self.assertEqual(again.locations, self.worked.locations)
        self.assertEqual(again.initial_state(), self.worked.initial_state())

    def test_invalid_json_is_a_model_error(self):
        with self.assertRaises(ModelError):
            parse_stg("{not json")

    def test_schema_errors_are_model_errors(self):
        with self.assertRaises(ModelError):
            parse_stg(json.dumps({"clocks": ["x"], "locations": [{"name": "1bad", "owner": "box"}]}))

    def test_unknown_location_lookup_fails(self):
        with self.assertRaises(ModelError):
            self.worked.location("Z")

    def test_enabled_interval_respects_invariant(self):
        edge = self.uniform_pair.edge("e2")

        interval = enabled_interval(self.uniform_pair, one_clock_state("B", 0), edge)

        self.assertEqual(interval, Interval(Fraction(1), Fraction(2), True, True))

    def test_enabled_interval_empty_when_invariant_already_violated(self):
        edge = self.uniform_pair.edge("e1")

        interval = enabled_interval(self.uniform_pair, one_clock_state("A", 2), edge)

        self.assertTrue(interval.is_empty)

    def test_edge_choice_shares_weights(self):
        shares = edge_choice_prob(self.uniform_pair, one_clock_state("B", Fraction(3, 2)))

        self.assertEqual(shares, {"e2": Fraction(1, 2), "e4": Fraction(1, 2)})

    def test_edge_choice_single_edge(self):
        shares = edge_choice_prob(self.uniform_pair, one_clock_state("B", Fraction(1, 2)))

        self.assertEqual(shares, {"e4": Fraction(1)})

    def test_enabled_set_splits_at_the_guard_constant(self):
        enabled = enabled_set(self.worked, one_clock_state("A", 0))

        self.assertEqual(set(enabled.per_edge), {"e1", "e4"})
        self.assertTrue(enabled.per_edge["e4"].contains(Fraction(0)))
        self.assertFalse(enabled.per_edge["e4"].contains(Fraction(1)))
        self.assertTrue(enabled.per_edge["e1"].contains(Fraction(1)))
        self.assertFalse(enabled.per_edge["e1"].contains(Fraction(1, 2)))
        self.assertTrue(enabled.union.contains(Fraction(7)))
        self.assertFalse(enabled.union.is_bounded)

    def test_satisfies_reads_the_valuation(self):
        guard = ClockConstraint.parse("x<1")

        self.assertTrue(satisfies({"x": Fraction(1, 2)}, guard))
        self.assertFalse(satisfies({"x": Fraction(1)}, guard))

    def test_edge_choice_blocked(self):
        with self.assertRaises(BlockedStateError):
            edge_choice_prob(self.uniform_pair, one_clock_state("D", 0))

    def test_negative_clock_values_are_rejected(self):
        with self.assertRaises(ModelError):
            Valuation({"x": Fraction(-1)})


if __name__ == "__main__":
    unittest.main()
