import re
from fractions import Fraction

from pydantic import BaseModel, Field, field_validator

from commands.result import CommandResult, value_json, value_text
from core.config import Config
from core.errors import UsageError
from core.model import Rational, State, Valuation, load_stg
from core.semantics import PathStep, exact_path_probability


class ExactPathRequest(BaseModel):
    model: str
    path: list[str] = Field(default_factory=list)
    start: str | None = None
    clock_value: Rational | None = None

    @field_validator("path", mode="before")
    @classmethod
    def _split(cls, value):
        if isinstance(value, str):
            return [item for item in re.split(r"[\s,]+", value) if item]
        return value or []


def register(subparsers) -> None:
    parser = subparsers.add_parser("exact-path", help="exact probability of a symbolic path (one clock)")
    parser.add_argument("--model", required=True, help="STG model file (JSON)")
    parser.add_argument("--path", default="", help="edge ids separated by spaces or commas; player steps as e3@1/2")
    parser.add_argument("--start", help="start location (defaults to the initial state)")
    parser.add_argument("--clock-value", help="rational clock value at --start (default 0)")
    parser.set_defaults(handler=run, request=ExactPathRequest)


def run(request: ExactPathRequest, config: Config) -> CommandResult:
    stg = load_stg(request.model)
    try:
        steps = [PathStep.parse(item) for item in request.path]
    except (ValueError, ZeroDivisionError) as exc:
        raise UsageError(f"--path: {exc}") from exc
    start = None
    if request.start is not None:
        stg.location(request.start)
        value = request.clock_value if request.clock_value is not None else Fraction(0)
        start = State(request.start, Valuation({clock: value for clock in stg.clocks}))
    elif request.clock_value is not None:
        raise UsageError("--clock-value needs --start")
    value = exact_path_probability(stg, steps, start)
    path_text = " ".join(request.path) or "(empty path)"
    document = {
        "model": stg.name,
        "start": (start or stg.initial_state()).location,
        "path": request.path,
        "probability": value_json(value, config.precision),
    }
    return CommandResult(0, document, f"P({path_text}) = {value_text(value)}")
