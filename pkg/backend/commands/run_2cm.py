from pydantic import BaseModel, Field

from commands.result import CommandResult
from core.config import Config
from core.tcm import load_tcm, run_tcm


class Run2cmRequest(BaseModel):
    program: str
    max_steps: int = Field(1000, ge=1)


def register(subparsers) -> None:
    parser = subparsers.add_parser("run-2cm", help="interpret a two-counter machine")
    parser.add_argument("--program", required=True, help="two-counter machine program")
    parser.add_argument("--max-steps", type=int, default=1000)
    parser.set_defaults(handler=run, request=Run2cmRequest)


def run(request: Run2cmRequest, config: Config) -> CommandResult:
    machine_run = run_tcm(load_tcm(request.program), request.max_steps)
    final = machine_run.final
    status = "halted" if machine_run.halted else f"still running after {machine_run.steps} steps"
    lines = [f"{status}: {final.label} with c1={final.c1}, c2={final.c2}"]
    lines.extend(
        f"  {index}: {item.label} c1={item.c1} c2={item.c2}"
        for index, item in enumerate(machine_run.configurations, start=1)
    )
    return CommandResult.verdict(machine_run.halted, machine_run.to_json(), "\n".join(lines))
