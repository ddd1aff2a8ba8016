import numpy as np
from pydantic import BaseModel, Field, field_validator

from commands.result import CommandResult
from core.config import DEFAULT_CONFIDENCE, MAX_STEPS, Config
from core.errors import ModelError
from core.model import Rational, load_stg
from core.semantics import SimulationLimits, estimate_reach, sample_run
from core.strategies import profile_from_files
from core.validation import check_wellformed


class SimulateRequest(BaseModel):
    model: str
    diamond: str | None = None
    box: str | None = None
    samples: int = Field(10_000, ge=1)
    time_bound: Rational | None = None
    confidence: float = Field(DEFAULT_CONFIDENCE, gt=0, lt=1)
    max_steps: int = Field(MAX_STEPS, ge=1)
    trace: bool = False

    @field_validator("time_bound")
    @classmethod
    def _non_negative(cls, value):
        if value is not None and value < 0:
            raise ValueError("time bound must be non-negative")
        return value


def register(subparsers) -> None:
    parser = subparsers.add_parser("simulate", help="estimate the probability to reach a target")
    parser.add_argument("--model", required=True, help="STG model file (JSON)")
    parser.add_argument("--diamond", help="strategy file for Player Diamond")
    parser.add_argument("--box", help="strategy file for Player Box")
    parser.add_argument("--samples", type=int, default=10_000)
    parser.add_argument("--time-bound", help="rational time budget for hitting the target")
    parser.add_argument("--confidence", type=float, default=DEFAULT_CONFIDENCE)
    parser.add_argument("--max-steps", type=int, default=MAX_STEPS)
    parser.add_argument("--trace", action="store_true", help="include one sampled run in the output")
    parser.set_defaults(handler=run, request=SimulateRequest)


def run(request: SimulateRequest, config: Config) -> CommandResult:
    stg = load_stg(request.model)
    report = check_wellformed(stg)
    if not report.ok:
        raise ModelError(f"model is not well-formed: {report.errors[0]}")
    profile = profile_from_files(request.diamond, request.box)
    limits = SimulationLimits(max_steps=request.max_steps, time_bound=request.time_bound)
    estimate = estimate_reach(
        stg,
        profile,
        request.samples,
        seed=config.seed,
        confidence=request.confidence,
        limits=limits,
        workers=config.worker_count(),
    )
    document = {"model": stg.name, "time_bound": None, "estimate": estimate.to_json()}
    if request.time_bound is not None:
        document["time_bound"] = str(request.time_bound)
    lines = [
        f"{stg.name or request.model}: {estimate.hits}/{estimate.samples} runs hit the target",
        f"estimate {estimate.point:.6f}, {estimate.confidence:.0%} CI [{estimate.ci_low:.6f}, {estimate.ci_high:.6f}]",
        "outcomes: " + ", ".join(f"{kind}={count}" for kind, count in sorted(estimate.outcomes.items())),
    ]
    if request.trace:
        sampled = sample_run(stg, profile, np.random.default_rng([config.seed, 0]), limits)
        document["trace"] = {"outcome": sampled.outcome.kind.value, "run": sampled.run.to_json()}
        lines.append(f"trace ({sampled.outcome.kind.value}): " + " ".join(sampled.run.edge_ids()))
    return CommandResult(0, document, "\n".join(lines))
