from fractions import Fraction
from typing import Literal

from pydantic import BaseModel, Field, model_validator

from commands.result import CommandResult
from core.config import DEFAULT_CONFIDENCE, Config
from core.model import Rational
from core.tcm import VARIANTS, check_time_bound, gadget_names, load_tcm, verify_gadget, verify_halting_sum

WHOLE_GAME_CHECKS = ("halting-sum", "time-bound")


class GadgetVerifyRequest(BaseModel):
    program: str
    variant: Literal["onehalf", "timebounded"] = "onehalf"
    gadget: str
    epsilon: Rational = Fraction(0)
    samples: int = Field(10_000, ge=1)
    step: int | None = Field(None, ge=1)
    confidence: float = Field(DEFAULT_CONFIDENCE, gt=0, lt=1)

    @model_validator(mode="after")
    def _known_gadget(self) -> "GadgetVerifyRequest":
        known = (*gadget_names(self.variant), *WHOLE_GAME_CHECKS)
        if self.gadget not in known:
            raise ValueError(f"unknown gadget {self.gadget!r} for {self.variant}; choose one of {', '.join(known)}")
        if self.gadget == "time-bound" and self.variant != "timebounded":
            raise ValueError("the time-bound check applies to the timebounded variant")
        return self


def register(subparsers) -> None:
    parser = subparsers.add_parser(
        "gadget-verify", help="compare a gadget's target probability with its closed-form law"
    )
    parser.add_argument("--program", required=True, help="two-counter machine program")
    parser.add_argument("--variant", choices=VARIANTS, default="onehalf")
    parser.add_argument(
        "--gadget", required=True, help="gadget name, or halting-sum / time-bound for whole-game checks"
    )
    parser.add_argument("--epsilon", default="0", help="rational perturbation of the faithful delay")
    parser.add_argument("--samples", type=int, default=10_000)
    parser.add_argument("--step", type=int, help="instruction step to check (default: first that enters)")
    parser.add_argument("--confidence", type=float, default=DEFAULT_CONFIDENCE)
    parser.set_defaults(handler=run, request=GadgetVerifyRequest)


def _halting_sum(request: GadgetVerifyRequest, config: Config) -> CommandResult:
    verdict = verify_halting_sum(
        load_tcm(request.program),
        request.variant,
        request.samples,
        config.seed,
        request.confidence,
        config.worker_count(),
    )
    estimate = verdict.estimate
    text = (
        f"halting sum {verdict.expected} ({float(verdict.expected):.6f}), estimate {estimate.point:.6f}"
        f" CI [{estimate.ci_low:.6f}, {estimate.ci_high:.6f}]: {'pass' if verdict.passed else 'FAIL'}"
    )
    return CommandResult.verdict(verdict.passed, verdict.to_json(), text)


def _time_bound(request: GadgetVerifyRequest, config: Config) -> CommandResult:
    checks = check_time_bound(load_tcm(request.program), request.samples, config.seed, config.worker_count())
    passed = all(check.passed for check in checks)
    document = {"check": "time-bound", "passed": passed, "policies": [check.to_json() for check in checks]}
    lines = [f"time bound over {len(checks)} Box policies: {'pass' if passed else 'FAIL'}"]
    lines.extend(
        f"  {check.policy}: longest run {check.max_elapsed:.6f}{'' if check.passed else ' FAIL'}" for check in checks
    )
    return CommandResult.verdict(passed, document, "\n".join(lines))


def run(request: GadgetVerifyRequest, config: Config) -> CommandResult:
    if request.gadget == "halting-sum":
        return _halting_sum(request, config)
    if request.gadget == "time-bound":
        return _time_bound(request, config)
    verdict = verify_gadget(
        load_tcm(request.program),
        request.variant,
        request.gadget,
        epsilon=request.epsilon,
        samples=request.samples,
        seed=config.seed,
        confidence=request.confidence,
        workers=config.worker_count(),
        step=request.step,
    )
    estimate = verdict.estimate
    lines = [
        f"{verdict.gadget} at step {verdict.step}: law {verdict.law} = {verdict.law_value} ({float(verdict.law_value):.6f})",
        f"estimate {estimate.point:.6f} from {estimate.samples} runs,"
        f" {estimate.confidence:.0%} CI [{estimate.ci_low:.6f}, {estimate.ci_high:.6f}]",
        f"{'pass' if verdict.passed else 'FAIL'} (3 sigma)",
    ]
    if verdict.deviation is not None:
        lines.insert(1, f"stated law {verdict.reference_law} = {verdict.reference_value}; {verdict.deviation}")
    return CommandResult.verdict(verdict.passed, verdict.to_json(), "\n".join(lines))
