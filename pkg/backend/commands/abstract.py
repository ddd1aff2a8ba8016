import json

from pydantic import BaseModel, Field

from commands.result import CommandResult, write_text
from core.config import DEFAULT_CONFIDENCE, Config
from core.dot import mdp_to_dot
from core.mdp import build_mdp, load_expected_values, verify_macro_edges
from core.model import load_stg
from core.regions import build_region_stg


class AbstractRequest(BaseModel):
    model: str
    out: str | None = None
    dot: str | None = None
    verify_samples: int = Field(0, ge=0)
    expected: str | None = None
    confidence: float = Field(DEFAULT_CONFIDENCE, gt=0, lt=1)


def register(subparsers) -> None:
    parser = subparsers.add_parser("abstract", help="build the finite MDP of a one-clock model")
    parser.add_argument("--model", required=True, help="STG model file (JSON)")
    parser.add_argument("--out", help="write the MDP document to this file")
    parser.add_argument("--dot", help="write the MDP to this DOT file")
    parser.add_argument("--verify-samples", type=int, default=0, help="Monte Carlo runs per chance state")
    parser.add_argument("--expected", help="reference probabilities to report divergences against")
    parser.add_argument("--confidence", type=float, default=DEFAULT_CONFIDENCE)
    parser.set_defaults(handler=run, request=AbstractRequest)


def run(request: AbstractRequest, config: Config) -> CommandResult:
    rg = build_region_stg(load_stg(request.model))
    mdp = build_mdp(rg)
    document = mdp.to_json(config.precision)
    files = {}
    if request.out:
        files["mdp"] = write_text(request.out, json.dumps(document, indent=2, ensure_ascii=False) + "\n")
    if request.dot:
        files["dot"] = write_text(request.dot, mdp_to_dot(mdp))
    lines = [f"MDP {mdp.name or request.model}: {len(mdp.states)} states, initial {mdp.initial}"]
    for state in mdp.states.values():
        for action in state.actions:
            lines.append(f"  {state.id} [{state.owner.value}] {action.label} -> {action.successor}")
        for branch in state.branches:
            lines.append(f"  {state.id} {branch.label} -> {branch.successor} : {branch.probability.describe(mdp.q)}")
    passed = True
    if request.verify_samples:
        expected = load_expected_values(request.expected) if request.expected else None
        checks = verify_macro_edges(rg, mdp, request.verify_samples, config.seed, request.confidence, expected)
        passed = all(check.passed for check in checks)
        document = {
            "mdp": document,
            "checks": [check.to_json(mdp.q, config.precision) for check in checks],
            "passed": passed,
        }
        for check in checks:
            line = (
                f"  check {check.state} {check.label}: {check.hits}/{check.samples},"
                f" CI [{check.ci_low:.6f}, {check.ci_high:.6f}] {'pass' if check.passed else 'FAIL'}"
            )
            if check.diverges_from_expected:
                line += f"; listed value {check.expected.describe()} diverges"
            lines.append(line)
    return CommandResult.verdict(passed, document, "\n".join(lines), files)
