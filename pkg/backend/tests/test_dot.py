import unittest
from pathlib import Path

from core.dot import mdp_to_dot, norm, region_stg_to_dot
from core.mdp import load_mdp
from core.model import load_stg
from core.regions import build_region_stg

SAMPLES = Path(__file__).resolve().parent.parent / "samples"


class DotTests(unittest.TestCase):
    def test_norm_quotes_and_escapes(self):
        self.assertEqual(norm('a"b'), '"a\\"b"')

    def test_region_graph(self):
        text = region_stg_to_dot(build_region_stg(load_stg(SAMPLES / "worked.json")))

        self.assertTrue(text.startswith("digraph {"))
        self.assertIn('"A@{0}" [shape=circle, style=bold];', text)
        self.assertIn('"E@(1,inf)" [shape=diamond, peripheries=2];', text)
        self.assertIn('"A@{0}" -> "C@{0}" [label="e1 : (1,inf)"];', text)

    def test_mdp(self):
        text = mdp_to_dot(load_mdp(SAMPLES / "worked-mdp.json"))

        self.assertIn('"A@{0}" -> "D@(0,1)" [label="e4e7 : 1-2*y"];', text)
        self.assertIn('"D@(0,1)" -> "A@{0}" [label="e8"];', text)
        self.assertTrue(text.rstrip().endswith("}"))


if __name__ == "__main__":
    unittest.main()
