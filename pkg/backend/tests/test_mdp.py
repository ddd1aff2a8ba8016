import itertools
import json
import unittest
from fractions import Fraction
from pathlib import Path

from core.errors import IllegalOperationError, ModelError, PreconditionError
from core.exppoly import ExpPoly
from core.mdp import (
    build_mdp,
    deletable_nodes,
    load_expected_values,
    load_mdp,
    macro_edge_probability,
    parse_mdp,
    remove_node,
    verify_macro_edges,
)
from core.model import load_stg
from core.regions import Region, RegionNode, build_region_stg

SAMPLES = Path(__file__).resolve().parent.parent / "samples"
Y = ExpPoly({1: 1})
ONE = ExpPoly.constant(1)


def node(text: str) -> RegionNode:
    location, region = text.split("@")
    return RegionNode(location, Region.parse(region, 1))


class EliminationTests(unittest.TestCase):
    def setUp(self):
        self.rg = build_region_stg(load_stg(SAMPLES / "worked.json"))

    def test_deletable_nodes_in_topological_order(self):
        deletable = deletable_nodes(self.rg)

        self.assertEqual([str(item) for item in deletable.order], ["A@(0,1)", "B@(0,1)"])

    def test_remove_node_concatenates_edges(self):
        reduced = remove_node(self.rg, node("B@(0,1)"))

        labels = {edge.label_text for edge in reduced.outgoing(node("A@{0}"))}

        self.assertNotIn(node("B@(0,1)"), reduced.nodes)
        self.assertEqual(labels, {"e1", "e4e5", "e4e7"})

    def test_player_nodes_are_not_deletable(self):
        with self.assertRaises(IllegalOperationError):
            remove_node(self.rg, node("D@(0,1)"))

    def test_macro_edge_probability(self):
        self.assertEqual(macro_edge_probability(self.rg, node("A@{0}"), ["e4", "e5"]), Y)
        self.assertEqual(macro_edge_probability(self.rg, node("C@{0}"), ["e3", "e4", "e5"]), Y / 2)
        self.assertEqual(macro_edge_probability(self.rg, node("C@{0}"), ["e3", "e4", "e7"]), ONE - Y * Fraction(5, 2))

    def test_macro_edge_must_start_at_a_kept_region(self):
        with self.assertRaises(PreconditionError):
            macro_edge_probability(self.rg, node("A@(0,1)"), ["e4"])


class BuildMdpTests(unittest.TestCase):
    def setUp(self):
        self.rg = build_region_stg(load_stg(SAMPLES / "worked.json"))
        self.mdp = build_mdp(self.rg)

    def test_states(self):
        self.assertEqual(set(self.mdp.states), {"A@{0}", "B@{0}", "C@{0}", "D@(0,1)", "E@{0}", "E@(1,inf)"})
        self.assertEqual(self.mdp.initial, "A@{0}")
        self.assertEqual(self.mdp.q, 1)

    def test_branch_probabilities(self):
        self.assertEqual(self.mdp.branch("A@{0}", "e1").probability, Y)
        self.assertEqual(self.mdp.branch("A@{0}", "e4e5").probability, Y)
        self.assertEqual(self.mdp.branch("A@{0}", "e4e7").probability, ONE - 2 * Y)
        self.assertEqual(self.mdp.branch("B@{0}", "e7").probability, ONE - Y)
        self.assertEqual(self.mdp.branch("C@{0}", "e3e1").probability, Y)

    def test_chance_states_sum_to_one(self):
        for state in self.mdp.states.values():
            if state.is_chance:
                total = sum((branch.probability for branch in state.branches), ExpPoly())

                self.assertEqual(total, ONE, state.id)

    def test_agrees_with_the_shipped_document(self):
        shipped = load_mdp(SAMPLES / "worked-mdp.json")

        self.assertEqual(set(shipped.states), set(self.mdp.states))
        for state in self.mdp.states.values():
            for branch in state.branches:
                self.assertEqual(shipped.branch(state.id, branch.label).probability, branch.probability)

    def test_player_states_keep_their_actions(self):
        self.assertEqual([action.label for action in self.mdp.state("D@(0,1)").actions], ["e8"])
        self.assertEqual({action.successor for action in self.mdp.state("E@{0}").actions}, {"B@{0}"})
        self.assertTrue(self.mdp.state("E@(1,inf)").target)

    def test_json_round_trip_keeps_probabilities(self):
        parsed = parse_mdp(json.dumps(self.mdp.to_json()))

        self.assertEqual(parsed.branch("C@{0}", "e3e4e7").probability, self.mdp.branch("C@{0}", "e3e4e7").probability)

    def test_elimination_order_does_not_change_the_mdp(self):
        def summary(mdp):
            return {
                state.id: (
                    sorted((action.label, action.successor) for action in state.actions),
                    {branch.label: (branch.successor, branch.probability) for branch in state.branches},
                )
                for state in mdp.states.values()
            }

        expected = summary(self.mdp)
        orders = list(itertools.permutations(deletable_nodes(self.rg).order))

        self.assertEqual(len(orders), 2)
        for order in orders:
            with self.subTest(order=[str(item) for item in order]):
                self.assertEqual(summary(build_mdp(self.rg, order)), expected)

    def test_failed_restrictions_block_the_abstraction(self):
        stg = load_stg(SAMPLES / "worked.json")
        edges = tuple(edge.model_copy(update={"resets": frozenset()}) if edge.id == "e8" else edge for edge in stg.edges)

        with self.assertRaises(PreconditionError):
            build_mdp(build_region_stg(stg.replace(edges=edges)))


class ParseMdpTests(unittest.TestCase):
    def test_unknown_successor(self):
        text = '{"initial": "a", "states": [{"id": "a", "location": "A", "region": "{0}", "owner": "diamond", "actions": [{"label": "go", "successor": "b"}]}]}'

        with self.assertRaises(ModelError):
            parse_mdp(text)

    def test_invalid_json(self):
        with self.assertRaises(ModelError):
            parse_mdp("{")


class VerifyMacroEdgesTests(unittest.TestCase):
    def setUp(self):
        self.rg = build_region_stg(load_stg(SAMPLES / "worked.json"))
        self.mdp = build_mdp(self.rg)

    def test_sampled_frequencies_match(self):
        checks = verify_macro_edges(self.rg, self.mdp, samples=2000, seed=3, confidence=0.999999)

        self.assertTrue(all(check.passed for check in checks), [c.label for c in checks if not c.passed])
        per_state = {}
        for check in checks:
            per_state[check.state] = per_state.get(check.state, 0) + check.hits
        self.assertEqual(per_state, {"A@{0}": 2000, "B@{0}": 2000, "C@{0}": 2000})

    def test_listed_values_are_reported_as_divergent(self):
        expected = load_expected_values(SAMPLES / "worked-listed.json")

        checks = verify_macro_edges(self.rg, self.mdp, samples=10, expected=expected)
        diverging = {(check.state, check.label) for check in checks if check.diverges_from_expected}

        self.assertIn(("A@{0}", "e4e5"), diverging)
        self.assertIn(("C@{0}", "e3e1"), diverging)
        self.assertNotIn(("A@{0}", "e1"), diverging)


if __name__ == "__main__":
    unittest.main()
