import unittest
from fractions import Fraction
from pathlib import Path

from core.errors import UnsupportedModelError
from core.model import UNIFORM, load_stg
from core.regions import Region, RegionNode, build_region_stg, check_star

SAMPLES = Path(__file__).resolve().parent.parent / "samples"


class RegionTests(unittest.TestCase):
    def test_region_of_value(self):
        self.assertEqual(Region.of(Fraction(0), 1), Region.point(0))
        self.assertEqual(Region.of(Fraction(1, 2), 1), Region.open(0))
        self.assertEqual(Region.of(Fraction(1), 1), Region.point(1))
        self.assertEqual(Region.of(Fraction(5, 2), 1), Region.unbounded(1))

    def test_text_form(self):
        regions = Region.all(1)

        self.assertEqual([str(region) for region in regions], ["{0}", "(0,1)", "{1}", "(1,inf)"])
        self.assertEqual([Region.parse(str(region), 1) for region in regions], regions)

    def test_malformed_region(self):
        with self.assertRaises(ValueError):
            Region.parse("(0,2)", 2)

    def test_representatives_lie_inside(self):
        for region in Region.all(3):
            self.assertTrue(region.contains(region.representative()), str(region))


class RegionStgTests(unittest.TestCase):
    def setUp(self):
        self.worked = load_stg(SAMPLES / "worked.json")

    def test_reachable_nodes(self):
        rg = build_region_stg(self.worked)

        self.assertEqual(str(rg.initial), "A@{0}")
        self.assertEqual(
            {str(node) for node in rg.nodes},
            {"A@{0}", "A@(0,1)", "B@{0}", "B@(0,1)", "C@{0}", "D@(0,1)", "E@{0}", "E@(1,inf)"},
        )

    def test_reset_and_delay_targets(self):
        rg = build_region_stg(self.worked)
        start = RegionNode("A", Region.point(0))

        targets = {edge.label_text: str(edge.target) for edge in rg.outgoing(start)}

        self.assertEqual(targets, {"e1": "C@{0}", "e4": "B@(0,1)"})

    def test_stochastic_nodes_skip_point_regions(self):
        rg = build_region_stg(self.worked)

        guards = {step.guard_region for edge in rg.edges for step in edge.steps if edge.source.location == "A"}

        self.assertNotIn(Region.point(1), guards)

    def test_json_document(self):
        document = build_region_stg(self.worked).to_json()

        self.assertEqual(document["clock"], "x")
        self.assertEqual(document["c_max"], 1)
        self.assertTrue(any(node["id"] == "E@(1,inf)" and node["target"] for node in document["nodes"]))

    def test_two_clocks_are_unsupported(self):
        model = load_stg(SAMPLES / "two-clock-unfair.json")

        with self.assertRaises(UnsupportedModelError):
            build_region_stg(model)


class CheckStarTests(unittest.TestCase):
    def setUp(self):
        self.worked = load_stg(SAMPLES / "worked.json")

    def test_sample_passes(self):
        report = check_star(build_region_stg(self.worked))

        self.assertTrue(report.passed)
        self.assertEqual([verdict.name for verdict in report.verdicts], ["non_zeno", "exponential_unbounded", "initialized"])

    def test_missing_reset_breaks_initialization(self):
        edges = tuple(
            edge.model_copy(update={"resets": frozenset()}) if edge.id == "e8" else edge for edge in self.worked.edges
        )

        report = check_star(build_region_stg(self.worked.replace(edges=edges)))

        self.assertFalse(report.passed)
        self.assertFalse(report.initialized.passed)
        self.assertEqual(report.initialized.witness, "e8")
        self.assertFalse(report.non_zeno.passed)

    def test_uniform_delay_breaks_exponential_check(self):
        distributions = dict(self.worked.distributions, A=UNIFORM)

        report = check_star(build_region_stg(self.worked.replace(distributions=distributions)))

        self.assertFalse(report.exponential_unbounded.passed)
        self.assertTrue(report.exponential_unbounded.witness.startswith("A@"))
        self.assertTrue(report.initialized.passed)

    def test_json_report(self):
        document = check_star(build_region_stg(self.worked)).to_json()

        self.assertTrue(document["passed"])
        self.assertEqual(len(document["checks"]), 3)


if __name__ == "__main__":
    unittest.main()
