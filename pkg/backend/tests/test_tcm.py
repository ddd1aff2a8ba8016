import inspect
import unittest
from fractions import Fraction
from pathlib import Path

from core.errors import DomainError, PreconditionError, SemanticsError, TcmSyntaxError
from core.model import State, Valuation, edge_choice_prob
from core.tcm import (
    TIME_BOUND,
    check_module_entries,
    check_time_bound,
    compile_machine,
    gadget_law,
    gadget_laws,
    gadget_names,
    halting_sum,
    load_tcm,
    module_entry_valuation,
    parse_tcm,
    run_tcm,
    verify_gadget,
    verify_halting_sum,
)
from core.tcm.timebounded import module_name
from core.tcm.verify import TimeBoundCheck
from core.validation import check_wellformed

SAMPLES = Path(__file__).resolve().parent.parent / "samples"


class ParseTcmTests(unittest.TestCase):
    def test_comments_and_spacing(self):
        machine = parse_tcm("# demo\n  a :  inc   c1 goto b  # step\n\nb: halt\n")

        self.assertEqual(machine.labels, ["a", "b"])
        self.assertEqual(machine.initial, "a")
        self.assertEqual(machine.instruction("a").counter, "c1")

    def test_describe_parses_back(self):
        machine = load_tcm(SAMPLES / "countdown.tcm")

        self.assertEqual(parse_tcm(machine.describe()), machine)

    def test_syntax_errors(self):
        programs = {
            "duplicate": "a: halt\na: halt\n",
            "undefined": "a: inc c1 goto b\nc: halt\n",
            "counter": "a: inc c3 goto b\nb: halt\n",
            "two halts": "a: halt\nb: halt\n",
            "no halt": "a: inc c1 goto a\n",
            "reserved": "goal: halt\n",
            "empty": "# nothing\n",
            "garbage": "a: jump b\nb: halt\n",
        }
        for name, text in programs.items():
            with self.subTest(name=name):
                with self.assertRaises(TcmSyntaxError):
                    parse_tcm(text)


class RunTcmTests(unittest.TestCase):
    def test_countdown(self):
        run = run_tcm(load_tcm(SAMPLES / "countdown.tcm"))

        self.assertTrue(run.halted)
        self.assertEqual(run.steps, 5)
        self.assertEqual([config.label for config in run.configurations], ["start", "load", "test", "drain", "test", "done"])
        self.assertEqual((run.final.c1, run.final.c2), (0, 1))

    def test_non_halting_run_is_cut(self):
        run = run_tcm(load_tcm(SAMPLES / "loop.tcm"), max_steps=10)

        self.assertFalse(run.halted)
        self.assertEqual(run.steps, 10)
        self.assertEqual(run.final.c1, 10)

    def test_decrement_at_zero(self):
        with self.assertRaises(SemanticsError):
            run_tcm(parse_tcm("a: dec c1 goto b\nb: halt\n"))


class GadgetLawTests(unittest.TestCase):
    def test_values(self):
        self.assertEqual(gadget_law("getprob-inc").evaluate(eps=Fraction(1, 8), c=0), Fraction(15, 32))
        self.assertEqual(gadget_law("getprob-dec").evaluate(eps=Fraction(1, 4)), Fraction(7, 16))
        self.assertEqual(gadget_law("check-z").evaluate(t=Fraction(1, 2), k=1), Fraction(3, 8))
        self.assertEqual(gadget_law("wid-double").evaluate(t=Fraction(1, 2), m=Fraction(1, 2)), Fraction(1, 2))
        self.assertEqual(gadget_law("halt").evaluate(), Fraction(1, 2))

    def test_string_parameters(self):
        self.assertEqual(gadget_law("mul-x").evaluate(t2="1/2", n="1"), Fraction(1, 24))

    def test_domain_errors(self):
        with self.assertRaises(DomainError):
            gadget_law("getprob-inc").evaluate(eps=Fraction(1, 2), c=0)
        with self.assertRaises(DomainError):
            gadget_law("check-z").evaluate(t=2, k=0)
        with self.assertRaises(DomainError):
            gadget_law("halt").evaluate(t=0)
        with self.assertRaises(DomainError):
            gadget_law("no-such-law")

    def test_catalogue(self):
        names = [law.to_json()["name"] for law in gadget_laws()]

        self.assertIn("getprob-dec-compiled", names)
        self.assertEqual(len(names), len(set(names)))


class HaltingSumTests(unittest.TestCase):
    def test_one_and_a_half_player_game(self):
        self.assertEqual(halting_sum(load_tcm(SAMPLES / "inc-halt.tcm"), "onehalf"), Fraction(1, 4))
        self.assertEqual(halting_sum(load_tcm(SAMPLES / "inc-dec-halt.tcm"), "onehalf"), Fraction(3, 8))

    def test_time_bounded_game(self):
        self.assertEqual(halting_sum(load_tcm(SAMPLES / "inc-halt.tcm"), "timebounded"), Fraction(1, 2))
        self.assertEqual(halting_sum(load_tcm(SAMPLES / "loop.tcm"), "timebounded", max_steps=20), 0)

    def test_unknown_variant(self):
        with self.assertRaises(PreconditionError):
            halting_sum(load_tcm(SAMPLES / "inc-halt.tcm"), "twoplayer")


class CompileTests(unittest.TestCase):
    def test_compiled_games_are_wellformed(self):
        machine = load_tcm(SAMPLES / "inc-dec-halt.tcm")
        for variant in ("onehalf", "timebounded"):
            with self.subTest(variant=variant):
                game = compile_machine(machine, variant)

                report = check_wellformed(game.stg)

                self.assertTrue(report.ok, [str(finding) for finding in report.errors])
                self.assertEqual(game.stg.targets, frozenset({"goal"}))
                self.assertIn(game.stg.initial.location, game.entry_locations)

    def test_unknown_variant(self):
        with self.assertRaises(PreconditionError):
            compile_machine(load_tcm(SAMPLES / "inc-halt.tcm"), "twoplayer")

    def test_decrement_of_zero_is_rejected_before_compiling(self):
        machine = parse_tcm("a: dec c1 goto b\nb: halt\n")
        for variant in ("onehalf", "timebounded"):
            with self.subTest(variant=variant):
                with self.assertRaises(SemanticsError):
                    compile_machine(machine, variant)

    def test_onehalf_entry_encoding(self):
        state = module_entry_valuation(load_tcm(SAMPLES / "inc-dec-halt.tcm"), "onehalf", 2)

        self.assertEqual(state.location, "l2")
        self.assertEqual(state.valuation["x1"], Fraction(1, 2))
        self.assertEqual(state.valuation["x2"], 1)

    def test_timebounded_entry_encoding(self):
        state = module_entry_valuation(load_tcm(SAMPLES / "inc-dec-halt.tcm"), "timebounded", 2)

        self.assertEqual(state.valuation["z"], Fraction(1, 2))
        self.assertEqual(sorted(value for value in state.valuation.values() if value), [Fraction(1, 12), Fraction(1, 2)])

    def test_module_entries_follow_the_machine(self):
        machine = load_tcm(SAMPLES / "countdown.tcm")
        for variant in ("onehalf", "timebounded"):
            with self.subTest(variant=variant):
                checks = check_module_entries(compile_machine(machine, variant))

                self.assertEqual(len(checks), 6)
                self.assertTrue(all(check.ok for check in checks), [c.to_json() for c in checks if not c.ok])

    def test_gadget_catalogue(self):
        self.assertIn("getprob", gadget_names("onehalf"))
        self.assertIn("wid-zero", gadget_names("timebounded"))
        self.assertLess(Fraction(0), TIME_BOUND)


class SampledGadgetTests(unittest.TestCase):
    def assertNearLaw(self, verdict):
        self.assertTrue(verdict.estimate.within_sigmas(float(verdict.law_value), 4.0), verdict.to_json())

    def test_getprob_increment_matches_its_law(self):
        machine = load_tcm(SAMPLES / "inc-halt.tcm")
        for eps in (Fraction(0), Fraction(1, 10), Fraction(1, 5)):
            with self.subTest(eps=eps):
                verdict = verify_gadget(machine, "onehalf", "getprob", epsilon=eps, samples=4000, seed=5)

                self.assertEqual(verdict.step, 1)
                self.assertEqual(verdict.law, "getprob-inc")
                self.assertEqual(verdict.law_value, Fraction(1, 2) * (1 - 4 * eps * eps))
                self.assertNearLaw(verdict)

    def test_getprob_decrement_against_both_laws(self):
        machine = load_tcm(SAMPLES / "inc-dec-halt.tcm")
        for eps in (Fraction(0), Fraction(1, 10)):
            with self.subTest(eps=eps):
                verdict = verify_gadget(machine, "onehalf", "getprob-dec", epsilon=eps, samples=4000, seed=6)

                self.assertEqual(verdict.step, 2)
                self.assertEqual(verdict.law, "getprob-dec-compiled")
                self.assertEqual(verdict.law_value, Fraction(1, 2) * (1 - eps * eps))
                self.assertEqual(verdict.reference_law, "getprob-dec")
                self.assertEqual(verdict.reference_value, Fraction(1, 2) * (1 - 2 * eps * eps))
                self.assertIn("1/2 (1 - 2 eps^2)", verdict.deviation)
                self.assertNearLaw(verdict)

    def test_check_z_at_each_step(self):
        machine = load_tcm(SAMPLES / "countdown.tcm")
        for step in (1, 2, 3):
            with self.subTest(k=step - 1):
                verdict = verify_gadget(machine, "timebounded", "check-z", samples=3000, seed=7, step=step)

                self.assertEqual(verdict.parameters["k"], step - 1)
                self.assertEqual(verdict.parameters["t"], Fraction(1, 2**step))
                self.assertEqual(verdict.law_value, Fraction(1, 2))
                self.assertNearLaw(verdict)

    def test_check_x_for_increment(self):
        verdict = verify_gadget(load_tcm(SAMPLES / "inc-dec-halt.tcm"), "timebounded", "check-x", samples=3000, seed=8)

        self.assertEqual(verdict.step, 1)
        self.assertEqual(verdict.parameters["w"], 11)
        self.assertEqual(verdict.law_value, Fraction(1, 2))
        self.assertNearLaw(verdict)

    def test_perturbed_checks(self):
        machine = load_tcm(SAMPLES / "inc-dec-halt.tcm")
        for gadget in ("check-z", "check-x"):
            with self.subTest(gadget=gadget):
                verdict = verify_gadget(machine, "timebounded", gadget, epsilon=Fraction(1, 10), samples=3000, seed=4)

                self.assertNotEqual(verdict.law_value, Fraction(1, 2))
                self.assertNearLaw(verdict)

    def test_check_x_weight_shares(self):
        game = compile_machine(load_tcm(SAMPLES / "inc-dec-halt.tcm"), "timebounded")
        split = f"{module_name('l1', 0)}.cx.F1"

        shares = edge_choice_prob(game.stg, State(split, Valuation.zero(game.stg.clocks)))

        self.assertEqual(sorted(shares.values()), [Fraction(1, 12), Fraction(11, 12)])

    def test_zero_check_gadgets_on_countdown(self):
        machine = load_tcm(SAMPLES / "countdown.tcm")
        cases = {
            ("onehalf", "zero-test"): Fraction(1, 2),
            ("timebounded", "mul-a"): None,
            ("timebounded", "mul-x"): None,
            ("timebounded", "wid-zero"): Fraction(1, 4),
            ("timebounded", "wid-double"): None,
            ("timebounded", "halt"): Fraction(1, 2),
        }
        for seed, ((variant, gadget), law_value) in enumerate(cases.items(), start=20):
            with self.subTest(gadget=gadget):
                verdict = verify_gadget(machine, variant, gadget, samples=3000, seed=seed)

                if law_value is not None:
                    self.assertEqual(verdict.law_value, law_value)
                self.assertNearLaw(verdict)

    def test_missing_gadget(self):
        with self.assertRaises(PreconditionError):
            verify_gadget(load_tcm(SAMPLES / "inc-halt.tcm"), "onehalf", "zero-test", samples=10)

    def test_halting_sum_estimate(self):
        verdict = verify_halting_sum(load_tcm(SAMPLES / "inc-halt.tcm"), "onehalf", samples=4000, seed=9)

        self.assertEqual(verdict.expected, Fraction(1, 4))
        self.assertTrue(verdict.passed, verdict.to_json())


class TimeBoundTests(unittest.TestCase):
    def test_every_box_policy_stays_under_the_bound(self):
        for program in ("inc-dec-halt.tcm", "countdown.tcm"):
            with self.subTest(program=program):
                checks = check_time_bound(load_tcm(SAMPLES / program), samples=200, seed=2)

                self.assertEqual(checks[0].policy, "always-continue")
                self.assertTrue(any(check.policy.endswith(":wid-zero") for check in checks))
                for check in checks:
                    self.assertEqual(check.runs, 200)
                    self.assertLess(check.max_elapsed, float(TIME_BOUND), check.policy)
                    self.assertTrue(check.passed, check.to_json())

    def test_default_run_count_matches_the_other_checks(self):
        for check in (check_time_bound, verify_gadget, verify_halting_sum):
            with self.subTest(check=check.__name__):
                self.assertEqual(inspect.signature(check).parameters["samples"].default, 10_000)

    def test_unfinished_runs_fail_the_check(self):
        finished = TimeBoundCheck("always-continue", 10, 1.5, {"target_hit": 4, "trapped": 6})
        cut = TimeBoundCheck("always-continue", 10, 1.5, {"target_hit": 4, "limit_reached": 6})
        blocked = TimeBoundCheck("always-continue", 10, 1.5, {"target_hit": 4, "blocked": 6})

        self.assertTrue(finished.passed)
        self.assertFalse(cut.passed)
        self.assertFalse(blocked.passed)


if __name__ == "__main__":
    unittest.main()
