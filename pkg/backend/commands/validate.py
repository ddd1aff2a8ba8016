from pydantic import BaseModel

from commands.result import CommandResult
from core.config import Config
from core.model import load_stg
from core.validation import check_wellformed


class ValidateRequest(BaseModel):
    model: str


def register(subparsers) -> None:
    parser = subparsers.add_parser("validate", help="check a model file for well-formedness")
    parser.add_argument("--model", required=True, help="STG model file (JSON)")
    parser.set_defaults(handler=run, request=ValidateRequest)


def run(request: ValidateRequest, config: Config) -> CommandResult:
    stg = load_stg(request.model)
    report = check_wellformed(stg)
    lines = [f"{report.model or request.model}: {'ok' if report.ok else 'invalid'} ({len(report.errors)} errors)"]
    lines.extend(f"  {finding}" for finding in report.findings)
    return CommandResult.verdict(report.ok, report.to_json(), "\n".join(lines))
