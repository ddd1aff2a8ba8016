"""Elimination of deletable region nodes and the resulting Max/Min/Chance graph.

Probabilities on chance branches are exact elements of Q[y], y = exp(-1/q),
with q the lcm of the denominators of the exponential rates.
"""

import json
import logging
from collections import Counter, defaultdict
from collections.abc import Iterable
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

import networkx as nx
import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError

from core.config import DEFAULT_CONFIDENCE, DEFAULT_PRECISION
from core.errors import (
    IllegalOperationError,
    InternalConsistencyError,
    ModelError,
    PreconditionError,
)
from core.exppoly import ENTRY, ExpPoly, TransientExpr, format_enclosure, integrate_exponential, tight_enclosure
from core.model import Owner, State, Valuation, edge_choice_prob
from core.regions import MacroEdge, Region, RegionEdge, RegionNode, RegionStg, check_star
from core.semantics import sample_stochastic_move, step, wilson_interval

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class DeletableSet:
    nodes: frozenset[RegionNode]
    order: tuple[RegionNode, ...]

    def __contains__(self, node: RegionNode) -> bool:
        return node in self.nodes

    def __len__(self) -> int:
        return len(self.nodes)


def is_deletable(rg: RegionStg, node: RegionNode) -> bool:
    if rg.owner(node) is not Owner.STOCHASTIC:
        return False
    return not node.region.is_zero and not node.region.is_unbounded


def deletable_nodes(rg: RegionStg) -> DeletableSet:
    nodes = [node for node in rg.nodes if is_deletable(rg, node)]
    induced = rg.graph().subgraph(nodes)
    try:
        cycle = nx.find_cycle(induced)
    except nx.NetworkXNoCycle:
        order = tuple(nx.topological_sort(nx.DiGraph(induced)))
        return DeletableSet(frozenset(nodes), order)
    witness = " -> ".join(str(u) for u, *_ in cycle)
    raise PreconditionError(f"deletable nodes form a cycle: {witness}")


def remove_node(rg: RegionStg, node: RegionNode) -> RegionStg:
    """Replace every in-edge/out-edge pair through `node` by one concatenated edge."""
    if node not in rg.nodes or not is_deletable(rg, node):
        raise IllegalOperationError(f"{node} is not a deletable node")
    incoming = [edge for edge in rg.edges if edge.target == node]
    outgoing = list(rg.outgoing(node))
    if any(edge.source == node for edge in incoming):
        raise IllegalOperationError(f"{node} has a self-loop and cannot be removed")
    edges = [edge for edge in rg.edges if edge.source != node and edge.target != node]
    edges.extend(first.then(second) for first in incoming for second in outgoing)
    logger.debug("Removed %s: %d x %d edges concatenated", node, len(incoming), len(outgoing))
    return rg.replace([other for other in rg.nodes if other != node], edges)


def _require_exponential(rg: RegionStg, step_: RegionEdge) -> Fraction:
    spec = rg.stg.distributions.get(step_.source.location)
    if spec is None or not spec.is_exponential:
        raise PreconditionError(f"{step_.source} is not an exponential stochastic node")
    return spec.rate


def region_path_probability(rg: RegionStg, steps: tuple[RegionEdge, ...]) -> ExpPoly:
    """Exact probability of following `steps` from a zero or unbounded source region."""
    expr = TransientExpr.constant(1)
    for step_ in reversed(steps):
        rate = _require_exponential(rg, step_)
        guard = step_.guard_region
        if guard.is_point:
            return ExpPoly()
        probe = rg.state(step_.source, guard)
        share = edge_choice_prob(rg.stg, probe).get(step_.edge_id, Fraction(0))
        if not share:
            return ExpPoly()
        successor = TransientExpr.constant(expr.evaluate(0)) if step_.reset else expr
        lower = ENTRY if guard == step_.source.region else guard.lower
        expr = integrate_exponential(successor, rate, lower, guard.upper).scale(share)
    source = steps[0].source.region
    if source.is_zero:
        return expr.evaluate(0)
    if source.is_unbounded:
        if not expr.is_constant:
            raise InternalConsistencyError(f"probability from {steps[0].source} depends on the clock value")
        return expr.constant_value()
    raise PreconditionError(f"macro-edges start at zero or unbounded regions, not {source}")


def _label_paths(rg: RegionStg, node: RegionNode, label: tuple[str, ...], deletable: DeletableSet):
    if not label:
        yield ()
        return
    for edge in rg.outgoing(node):
        (step_,) = edge.steps
        if step_.edge_id != label[0]:
            continue
        if len(label) > 1 and step_.target not in deletable:
            continue
        for rest in _label_paths(rg, step_.target, label[1:], deletable):
            yield (step_,) + rest


def macro_edge_probability(rg: RegionStg, source: RegionNode, label: Iterable[str]) -> ExpPoly:
    """Sum over the region paths from `source` spelling `label` through deletable nodes."""
    label = tuple(label)
    if not source.region.is_zero and not source.region.is_unbounded:
        raise PreconditionError(f"{source} is neither a zero nor an unbounded region node")
    deletable = deletable_nodes(rg)
    paths = list(_label_paths(rg, source, label, deletable))
    if not paths:
        raise IllegalOperationError(f"no path {''.join(label)} from {source} through deletable nodes")
    total = ExpPoly()
    for path in paths:
        total = total + region_path_probability(rg, path)
    q = rg.stg.rate_denominator()
    return total.lift(q) if q % total.q == 0 else total


@dataclass(frozen=True)
class MdpAction:
    label: str
    successor: str


@dataclass(frozen=True)
class MdpBranch:
    label: str
    probability: ExpPoly
    successor: str


@dataclass(frozen=True)
class MdpState:
    id: str
    location: str
    region: str
    owner: Owner
    target: bool
    actions: tuple[MdpAction, ...] = ()
    branches: tuple[MdpBranch, ...] = ()

    @property
    def is_chance(self) -> bool:
        return self.owner is Owner.STOCHASTIC


@dataclass(frozen=True)
class Mdp:
    name: str
    q: int
    states: dict[str, MdpState]
    initial: str

    def labels(self) -> set[str]:
        labels = set()
        for state in self.states.values():
            labels.update(action.label for action in state.actions)
            labels.update(branch.label for branch in state.branches)
        return labels

    def state(self, state_id: str) -> MdpState:
        try:
            return self.states[state_id]
        except KeyError as exc:
            raise ModelError(f"unknown MDP state {state_id!r}") from exc

    def branch(self, state_id: str, label: str) -> MdpBranch:
        for branch in self.state(state_id).branches:
            if branch.label == label:
                return branch
        raise ModelError(f"state {state_id} has no branch {label}")

    def to_json(self, precision: int = DEFAULT_PRECISION) -> dict:
        states = []
        for state in self.states.values():
            entry = {
                "id": state.id,
                "location": state.location,
                "region": state.region,
                "owner": state.owner.value,
                "target": state.target,
            }
            if state.actions:
                entry["actions"] = [{"label": a.label, "successor": a.successor} for a in state.actions]
            if state.branches:
                entry["branches"] = [
                    {
                        "label": branch.label,
                        "successor": branch.successor,
                        "probability": probability_json(branch.probability, self.q, precision),
                    }
                    for branch in state.branches
                ]
            states.append(entry)
        return {"name": self.name, "q": self.q, "initial": self.initial, "states": states}


def probability_json(value: ExpPoly, q: int, precision: int) -> dict:
    value = value.lift(q) if q % value.q == 0 else value
    lo, hi = tight_enclosure(value, precision)
    low_text, high_text = format_enclosure(lo, hi, precision)
    document = value.to_json()
    document["symbolic"] = value.describe()
    document["enclosure"] = [low_text, high_text]
    return document


class _ActionDoc(BaseModel):
    label: str
    successor: str


class _BranchDoc(BaseModel):
    label: str
    successor: str
    probability: dict


class _StateDoc(BaseModel):
    id: str
    location: str
    region: str
    owner: Owner
    target: bool = False
    actions: list[_ActionDoc] = Field(default_factory=list)
    branches: list[_BranchDoc] = Field(default_factory=list)


class _MdpDoc(BaseModel):
    model_config = ConfigDict(extra="ignore")

    name: str = ""
    q: int = Field(1, ge=1)
    initial: str
    states: list[_StateDoc]


def parse_mdp(text: str) -> Mdp:
    try:
        document = _MdpDoc.model_validate(json.loads(text))
        states = {}
        for item in document.states:
            states[item.id] = MdpState(
                id=item.id,
                location=item.location,
                region=item.region,
                owner=item.owner,
                target=item.target,
                actions=tuple(MdpAction(a.label, a.successor) for a in item.actions),
                branches=tuple(
                    MdpBranch(b.label, ExpPoly.from_json(b.probability), b.successor) for b in item.branches
                ),
            )
    except json.JSONDecodeError as exc:
        raise ModelError(f"MDP document is not valid JSON: {exc}") from exc
    except ValidationError as exc:
        first = exc.errors()[0]
        raise ModelError(f"invalid MDP document at {'.'.join(map(str, first['loc']))}: {first['msg']}") from exc
    except ValueError as exc:
        raise ModelError(f"invalid MDP document: {exc}") from exc
    mdp = Mdp(document.name, document.q, states, document.initial)
    for state in states.values():
        successors = [a.successor for a in state.actions] + [b.successor for b in state.branches]
        for successor in successors:
            if successor not in states:
                raise ModelError(f"state {state.id} points to unknown state {successor}")
    if mdp.initial not in states:
        raise ModelError(f"initial state {mdp.initial} is not listed")
    return mdp


def load_mdp(path: str | Path) -> Mdp:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ModelError(f"cannot read MDP file {path}: {exc}") from exc
    return parse_mdp(text)


def eliminate(rg: RegionStg, order: Iterable[RegionNode] | None = None) -> RegionStg:
    deletable = deletable_nodes(rg)
    current = rg
    for node in deletable.order if order is None else order:
        current = remove_node(current, node)
    return current


def build_mdp(rg: RegionStg, order: Iterable[RegionNode] | None = None) -> Mdp:
    report = check_star(rg)
    if not report.passed:
        failed = ", ".join(f"{v.name} ({v.witness})" for v in report.verdicts if not v.passed)
        raise PreconditionError(f"restrictions for the abstraction fail: {failed}")
    reduced = eliminate(rg, order).pruned()
    q = rg.stg.rate_denominator()
    states: dict[str, MdpState] = {}
    for node in reduced.nodes:
        owner = reduced.owner(node)
        actions: list[MdpAction] = []
        branches: list[MdpBranch] = []
        if owner.is_player:
            for edge in reduced.outgoing(node):
                action = MdpAction(edge.label_text, str(edge.target))
                if action not in actions:
                    actions.append(action)
        else:
            grouped: dict[tuple[str, RegionNode], ExpPoly] = defaultdict(ExpPoly)
            for edge in reduced.outgoing(node):
                key = (edge.label_text, edge.target)
                grouped[key] = grouped[key] + region_path_probability(rg, edge.steps)
            for (label, target), probability in grouped.items():
                if not probability.is_zero:
                    branches.append(MdpBranch(label, probability.lift(q), str(target)))
            total = sum((branch.probability for branch in branches), ExpPoly())
            if total != 1:
                dump = ", ".join(f"{b.label}: {b.probability}" for b in branches)
                raise InternalConsistencyError(f"probabilities at {node} sum to {total}, not 1 ({dump})")
        states[str(node)] = MdpState(
            id=str(node),
            location=node.location,
            region=str(node.region),
            owner=owner,
            target=reduced.is_target(node),
            actions=tuple(actions),
            branches=tuple(branches),
        )
    mdp = Mdp(rg.stg.name, q, states, str(reduced.initial))
    logger.info("MDP for %r: %d states, %d labels", mdp.name, len(states), len(mdp.labels()))
    return mdp


@dataclass(frozen=True)
class MacroCheck:
    state: str
    label: str
    successor: str
    exact: ExpPoly
    hits: int
    samples: int
    ci_low: float
    ci_high: float
    passed: bool
    expected: ExpPoly | None = None

    @property
    def diverges_from_expected(self) -> bool:
        return self.expected is not None and self.expected != self.exact

    def to_json(self, q: int, precision: int) -> dict:
        document = {
            "state": self.state,
            "label": self.label,
            "successor": self.successor,
            "exact": probability_json(self.exact, q, precision),
            "estimate": self.hits / self.samples if self.samples else 0.0,
            "ci": [self.ci_low, self.ci_high],
            "passed": self.passed,
        }
        if self.expected is not None:
            document["expected"] = self.expected.describe()
            document["diverges"] = self.diverges_from_expected
        return document


def verify_macro_edges(
    rg: RegionStg,
    mdp: Mdp,
    samples: int,
    seed: int = 0,
    confidence: float = DEFAULT_CONFIDENCE,
    expected: dict[str, dict[str, ExpPoly]] | None = None,
) -> list[MacroCheck]:
    """Cross-check every chance branch against runs of the concrete STG.

    Each run starts at the chance state and follows the STG until it enters a
    node kept in the MDP; the edge sequence and that node identify the branch.
    """
    stg = rg.stg
    kept = set(mdp.states)
    checks = []
    chance_states = [state for state in mdp.states.values() if state.is_chance]
    for index, mdp_state in enumerate(chance_states):
        rng = np.random.default_rng([seed, index])
        region = Region.parse(mdp_state.region, rg.c_max)
        origin = State(mdp_state.location, Valuation({rg.clock: region.representative()}))
        counts: Counter = Counter()
        for _ in range(samples):
            state = origin
            labels = []
            for _ in range(len(rg.nodes) + 1):
                move = sample_stochastic_move(stg, state, rng)
                state = step(stg, state, move.delay, move.edge)
                labels.append(move.edge)
                node = RegionNode(state.location, Region.of(state.valuation[rg.clock], rg.c_max))
                if str(node) in kept:
                    counts[("".join(labels), str(node))] += 1
                    break
                if stg.owner(state.location).is_player:
                    raise InternalConsistencyError(f"run from {mdp_state.id} reached player node {node} off the MDP")
        for branch in mdp_state.branches:
            hits = counts[(branch.label, branch.successor)]
            ci_low, ci_high = wilson_interval(hits, samples, confidence)
            lo, hi = branch.probability.enclosure()
            passed = ci_low <= float(hi) and float(lo) <= ci_high
            reference = (expected or {}).get(mdp_state.id, {}).get(branch.label)
            checks.append(
                MacroCheck(
                    mdp_state.id,
                    branch.label,
                    branch.successor,
                    branch.probability,
                    hits,
                    samples,
                    ci_low,
                    ci_high,
                    passed,
                    reference,
                )
            )
            logger.info("Macro-edge %s from %s: %d/%d hits, %s", branch.label, mdp_state.id, hits, samples, passed)
    return checks


def load_expected_values(path: str | Path) -> dict[str, dict[str, ExpPoly]]:
    """Reference probabilities keyed by state id and label, for divergence reports."""
    try:
        document = json.loads(Path(path).read_text(encoding="utf-8"))
        return {
            state: {label: ExpPoly.from_json(value) for label, value in labels.items()}
            for state, labels in document.get("values", {}).items()
        }
    except (OSError, json.JSONDecodeError, ValueError, AttributeError) as exc:
        raise ModelError(f"cannot read expected values from {path}: {exc}") from exc
