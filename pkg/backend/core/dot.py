"""Graphviz DOT export for region graphs and abstracted MDPs."""

from core.mdp import Mdp
from core.model import Owner
from core.regions import RegionStg

HEADER = """    rankdir = LR;
    nodesep = 0.3;
"""

SHAPES = {Owner.DIAMOND: "diamond", Owner.BOX: "box", Owner.STOCHASTIC: "circle"}


def norm(text: str) -> str:
    return '"' + text.replace("\\", "\\\\").replace('"', '\\"') + '"'


def _node(name: str, owner: Owner, target: bool, initial: bool) -> str:
    attributes = [f"shape={SHAPES[owner]}"]
    if target:
        attributes.append("peripheries=2")
    if initial:
        attributes.append("style=bold")
    return f"    {norm(name)} [{', '.join(attributes)}];"


def _edge(source: str, label: str, target: str) -> str:
    return f"    {norm(source)} -> {norm(target)} [label={norm(label)}];"


def region_stg_to_dot(rg: RegionStg) -> str:
    lines = ["digraph {", HEADER]
    for node in rg.nodes:
        lines.append(_node(str(node), rg.owner(node), rg.is_target(node), node == rg.initial))
    for edge in rg.edges:
        guards = ", ".join(str(step.guard_region) for step in edge.steps)
        lines.append(_edge(str(edge.source), f"{edge.label_text} : {guards}", str(edge.target)))
    lines.append("}")
    return "\n".join(lines) + "\n"


def mdp_to_dot(mdp: Mdp) -> str:
    lines = ["digraph {", HEADER]
    for state in mdp.states.values():
        lines.append(_node(state.id, state.owner, state.target, state.id == mdp.initial))
    for state in mdp.states.values():
        for action in state.actions:
            lines.append(_edge(state.id, action.label, action.successor))
        for branch in state.branches:
            probability = str(branch.probability).replace(" ", "")
            lines.append(_edge(state.id, f"{branch.label} : {probability}", branch.successor))
    lines.append("}")
    return "\n".join(lines) + "\n"
