from typing import Literal

from pydantic import BaseModel

from commands.result import CommandResult
from core.config import Config
from core.errors import UsageError
from core.mdp import load_mdp
from core.solver import (
    GameGraph,
    ThresholdQuery,
    decide_threshold,
    exhaustive_optimum,
    solve_optimal,
    value_iteration_preview,
)


class SolveRequest(BaseModel):
    mdp: str
    threshold: str | None = None
    mode: Literal["max", "maxmin"] = "max"
    preview: bool = False
    exhaustive: bool = False


def register(subparsers) -> None:
    parser = subparsers.add_parser("solve", help="optimal reachability value of an abstracted MDP")
    parser.add_argument("--mdp", required=True, help="MDP document written by `abstract --out`")
    parser.add_argument("--threshold", help="query such as '>= 1/2'; the exit code carries the verdict")
    parser.add_argument("--mode", choices=("max", "maxmin"), default="max")
    method = parser.add_mutually_exclusive_group()
    method.add_argument("--exact", dest="preview", action="store_false", help="exact symbolic solution (default)")
    method.add_argument("--preview", dest="preview", action="store_true", help="floating point value iteration")
    parser.add_argument("--exhaustive", action="store_true", help="cross-check against all pure profiles")
    parser.set_defaults(handler=run, request=SolveRequest, preview=False)


def _preview(gg: GameGraph) -> CommandResult:
    values = value_iteration_preview(gg)
    document = {"mode": gg.mode.value, "initial": gg.initial, "preview": True, "values": dict(sorted(values.items()))}
    lines = [f"preview value at {gg.initial}: {values[gg.initial]:.15g} (floating point, not a verdict)"]
    return CommandResult(0, document, "\n".join(lines))


def run(request: SolveRequest, config: Config) -> CommandResult:
    gg = GameGraph.from_mdp(load_mdp(request.mdp), request.mode)
    if request.preview:
        if request.threshold is not None:
            raise UsageError("--preview values never decide a threshold; drop --threshold or use --exact")
        return _preview(gg)
    query = None
    if request.threshold is not None:
        try:
            query = ThresholdQuery.parse(request.threshold)
        except ValueError as exc:
            raise UsageError(f"--threshold: {exc}") from exc
    solution = solve_optimal(gg)
    document = solution.to_json(gg, config.precision)
    low, high = document["value"]["enclosure"]
    lines = [f"value at {gg.initial}: {solution.value.describe()}", f"enclosure [{low}, {high}]", "strategy:"]
    lines.extend(
        f"  {item['state']} ({item['player']}): {item['label']} -> {item['successor']}" for item in document["strategy"]
    )
    holds = True
    if request.exhaustive:
        best, _ = exhaustive_optimum(gg)
        agrees = best == solution.value
        document["exhaustive"] = {"value": str(best), "agrees": agrees}
        lines.append(f"exhaustive optimum {best}: {'agrees' if agrees else 'DISAGREES'}")
        holds = agrees
    if query is not None:
        verdict = decide_threshold(solution.value, query)
        document["verdict"] = verdict.to_json(config.precision)
        lines.append(f"value {query}: {'true' if verdict.holds else 'false'}")
        holds = holds and verdict.holds
    return CommandResult.verdict(holds, document, "\n".join(lines))
