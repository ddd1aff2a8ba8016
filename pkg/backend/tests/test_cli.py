import io
import json
import tempfile
import unittest
from contextlib import redirect_stderr, redirect_stdout
from pathlib import Path

from main import main

SAMPLES = Path(__file__).resolve().parent.parent / "samples"


def sample(name: str) -> str:
    return str(SAMPLES / name)


def invoke(*argv: str) -> tuple[int, str, str]:
    stdout, stderr = io.StringIO(), io.StringIO()
    with redirect_stdout(stdout), redirect_stderr(stderr):
        code = main(list(argv))
    return code, stdout.getvalue(), stderr.getvalue()


def invoke_json(*argv: str) -> tuple[int, dict]:
    code, out, _ = invoke("--output", "json", *argv)
    return code, json.loads(out)


class ExitCodeTests(unittest.TestCase):
    def test_validate_sample(self):
        code, document = invoke_json("validate", "--model", sample("worked.json"))

        self.assertEqual(code, 0)
        self.assertTrue(document["ok"])

    def test_missing_subcommand_is_a_usage_error(self):
        code, _, err = invoke()

        self.assertEqual(code, 2)
        self.assertIn("error:", err)

    def test_missing_required_option(self):
        code, _, _ = invoke("validate")

        self.assertEqual(code, 2)

    def test_negative_seed(self):
        code, _, _ = invoke("--seed", "-1", "validate", "--model", sample("worked.json"))

        self.assertEqual(code, 2)

    def test_unreadable_model_is_a_model_error(self):
        code, document = invoke_json("validate", "--model", sample("does-not-exist.json"))

        self.assertEqual(code, 3)
        self.assertEqual(document["command"], "validate")
        self.assertEqual(document["error"], "ModelError")

    def test_errors_go_to_stderr_in_text_mode(self):
        code, out, err = invoke("validate", "--model", sample("does-not-exist.json"))

        self.assertEqual(code, 3)
        self.assertEqual(out, "")
        self.assertIn("cannot read model file", err)


class ModelCommandTests(unittest.TestCase):
    def test_check_star(self):
        code, document = invoke_json("check-star", "--model", sample("worked.json"))

        self.assertEqual(code, 0)
        self.assertTrue(document["passed"])

    def test_exact_path(self):
        code, document = invoke_json("exact-path", "--model", sample("uniform-pair.json"), "--path", "e1,e2")

        self.assertEqual(code, 0)
        self.assertEqual(document["probability"]["value"], "1/8")

    def test_clock_value_needs_start(self):
        code, _, _ = invoke("exact-path", "--model", sample("worked.json"), "--path", "e1", "--clock-value", "1/2")

        self.assertEqual(code, 2)

    def test_regions(self):
        code, document = invoke_json("regions", "--model", sample("worked.json"))

        self.assertEqual(code, 0)
        self.assertEqual(document["initial"], "A@{0}")

    def test_simulate_with_strategy_file(self):
        code, document = invoke_json(
            "--seed", "4", "--threads", "1",
            "simulate", "--model", sample("race.json"), "--diamond", sample("race-diamond-a.json"), "--samples", "2000",
        )

        self.assertEqual(code, 0)
        self.assertEqual(document["estimate"]["samples"], 2000)


class SolveCommandTests(unittest.TestCase):
    def test_threshold_verdicts(self):
        holds, _ = invoke_json("solve", "--mdp", sample("worked-mdp.json"), "--threshold", ">= 1/2")
        fails, document = invoke_json("solve", "--mdp", sample("worked-mdp.json"), "--threshold", "< 1/2")

        self.assertEqual(holds, 0)
        self.assertEqual(fails, 1)
        self.assertFalse(document["verdict"]["holds"])

    def test_preview_cannot_decide(self):
        code, _, _ = invoke("solve", "--mdp", sample("worked-mdp.json"), "--preview", "--threshold", ">= 1/2")

        self.assertEqual(code, 2)

    def test_malformed_threshold(self):
        code, _, _ = invoke("solve", "--mdp", sample("worked-mdp.json"), "--threshold", "about 1/2")

        self.assertEqual(code, 2)

    def test_abstract_then_solve_maxmin(self):
        with tempfile.TemporaryDirectory() as tmp:
            mdp_path = str(Path(tmp) / "duel-mdp.json")
            written, _, _ = invoke("abstract", "--model", sample("duel.json"), "--out", mdp_path)

            code, document = invoke_json(
                "solve", "--mdp", mdp_path, "--mode", "maxmin", "--threshold", ">= 1/3", "--exhaustive"
            )
            max_mode, _, _ = invoke("solve", "--mdp", mdp_path)

        self.assertEqual(written, 0)
        self.assertEqual(code, 0)
        self.assertTrue(document["exhaustive"]["agrees"])
        self.assertEqual(max_mode, 4)


class MachineCommandTests(unittest.TestCase):
    def test_run_2cm(self):
        halted, _, _ = invoke("run-2cm", "--program", sample("countdown.tcm"))
        cut, document = invoke_json("run-2cm", "--program", sample("loop.tcm"), "--max-steps", "5")

        self.assertEqual(halted, 0)
        self.assertEqual(cut, 1)
        self.assertEqual(document["steps"], 5)

    def test_compiled_model_validates(self):
        with tempfile.TemporaryDirectory() as tmp:
            model_path = str(Path(tmp) / "inc-halt.json")
            compiled, _, _ = invoke("compile-2cm", "--program", sample("inc-halt.tcm"), "--out", model_path)
            code, _, _ = invoke("validate", "--model", model_path)

        self.assertEqual(compiled, 0)
        self.assertEqual(code, 0)

    def test_time_bound_only_for_timebounded_games(self):
        code, _, _ = invoke(
            "gadget-verify", "--program", sample("inc-halt.tcm"), "--variant", "onehalf", "--gadget", "time-bound"
        )

        self.assertEqual(code, 2)

    def test_syntax_error_in_program(self):
        with tempfile.TemporaryDirectory() as tmp:
            program = Path(tmp) / "bad.tcm"
            program.write_text("a: jump b\n", encoding="utf-8")

            code, _, _ = invoke("run-2cm", "--program", str(program))

        self.assertEqual(code, 3)

    def test_decrement_gadget_reports_the_stated_law(self):
        code, out, _ = invoke(
            "gadget-verify", "--program", sample("inc-dec-halt.tcm"), "--gadget", "getprob-dec",
            "--epsilon", "1/10", "--samples", "500",
        )
        _, document = invoke_json(
            "gadget-verify", "--program", sample("inc-dec-halt.tcm"), "--gadget", "getprob-dec",
            "--epsilon", "1/10", "--samples", "500",
        )

        self.assertIn(code, (0, 1))
        self.assertIn("stated law getprob-dec = 49/100", out)
        self.assertIn("realises 1/2 (1 - eps^2)", out)
        self.assertEqual(document["reference"]["formula"], "1/2 (1 - 2 eps^2)")
        self.assertIn("instead of 99/200", document["reference"]["note"])

    def test_compile_rejects_decrement_of_zero(self):
        with tempfile.TemporaryDirectory() as tmp:
            program = Path(tmp) / "underflow.tcm"
            program.write_text("a: dec c1 goto b\nb: halt\n", encoding="utf-8")

            code, _, err = invoke("compile-2cm", "--program", str(program))

        self.assertEqual(code, 4)
        self.assertIn("error:", err)


if __name__ == "__main__":
    unittest.main()
