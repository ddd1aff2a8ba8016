import json
from typing import Literal

from pydantic import BaseModel

from commands.result import CommandResult, write_text
from core.config import Config
from core.model import dump_stg
from core.tcm import VARIANTS, check_module_entries, compile_machine, load_tcm


class Compile2cmRequest(BaseModel):
    program: str
    variant: Literal["onehalf", "timebounded"] = "onehalf"
    out: str | None = None
    check_entries: bool = False


def register(subparsers) -> None:
    parser = subparsers.add_parser("compile-2cm", help="compile a two-counter machine into a game")
    parser.add_argument("--program", required=True, help="two-counter machine program")
    parser.add_argument("--variant", choices=VARIANTS, default="onehalf")
    parser.add_argument("--out", help="write the compiled model to this file")
    parser.add_argument(
        "--check-entries", action="store_true", help="replay the faithful simulation and compare module entries"
    )
    parser.set_defaults(handler=run, request=Compile2cmRequest)


def run(request: Compile2cmRequest, config: Config) -> CommandResult:
    machine = load_tcm(request.program)
    game = compile_machine(machine, request.variant)
    stg = game.stg
    model_text = dump_stg(stg)
    files = {}
    document = {
        "program": request.program,
        "variant": request.variant,
        "instructions": len(machine.instructions),
        "locations": len(stg.locations),
        "edges": len(stg.edges),
        "clocks": list(stg.clocks),
    }
    if request.out:
        files["model"] = write_text(request.out, model_text + "\n")
    else:
        document["model"] = json.loads(model_text)
    lines = [
        f"{request.variant} game for {request.program}: {len(stg.locations)} locations, {len(stg.edges)} edges"
        f" over clocks {', '.join(stg.clocks)}"
    ]
    holds = True
    if request.check_entries:
        checks = check_module_entries(game)
        holds = all(check.ok for check in checks)
        document["entries"] = [check.to_json() for check in checks]
        lines.extend(f"  step {check.step} at {check.location}: {'ok' if check.ok else 'MISMATCH'}" for check in checks)
    return CommandResult.verdict(holds, document, "\n".join(lines), files)
