from pydantic import BaseModel

from commands.result import CommandResult
from core.config import Config
from core.model import load_stg
from core.regions import build_region_stg, check_star


class CheckStarRequest(BaseModel):
    model: str


def register(subparsers) -> None:
    parser = subparsers.add_parser(
        "check-star", help="check the non-Zeno, exponential and initialization restrictions"
    )
    parser.add_argument("--model", required=True, help="STG model file (JSON)")
    parser.set_defaults(handler=run, request=CheckStarRequest)


def run(request: CheckStarRequest, config: Config) -> CommandResult:
    report = check_star(build_region_stg(load_stg(request.model)))
    lines = []
    for verdict in report.verdicts:
        line = f"{verdict.name}: {'pass' if verdict.passed else 'FAIL'}"
        if not verdict.passed:
            line += f" at {verdict.witness} ({verdict.detail})"
        lines.append(line)
    return CommandResult.verdict(report.passed, report.to_json(), "\n".join(lines))
