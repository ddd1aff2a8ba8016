from pydantic import BaseModel

from commands.result import CommandResult, write_text
from core.config import Config
from core.dot import region_stg_to_dot
from core.model import load_stg
from core.regions import build_region_stg


class RegionsRequest(BaseModel):
    model: str
    dot: str | None = None


def register(subparsers) -> None:
    parser = subparsers.add_parser("regions", help="build the region STG of a one-clock model")
    parser.add_argument("--model", required=True, help="STG model file (JSON)")
    parser.add_argument("--dot", help="write the region graph to this DOT file")
    parser.set_defaults(handler=run, request=RegionsRequest)


def run(request: RegionsRequest, config: Config) -> CommandResult:
    rg = build_region_stg(load_stg(request.model))
    files = {}
    if request.dot:
        files["dot"] = write_text(request.dot, region_stg_to_dot(rg))
    document = rg.to_json()
    lines = [f"{len(rg.nodes)} region nodes, {len(rg.edges)} edges, initial {rg.initial}"]
    for edge in rg.edges:
        lines.append(f"  {edge.source} --{edge.label_text}--> {edge.target}")
    return CommandResult(0, document, "\n".join(lines), files)
