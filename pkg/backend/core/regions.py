"""One-clock regions, the region STG and the checks that license its abstraction."""

import logging
import math
import re
from collections.abc import Iterator
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction

import networkx as nx

from core.errors import BlockedStateError, ModelError, UnsupportedModelError
from core.model import (
    Atom,
    ClockConstraint,
    Owner,
    Relation,
    State,
    Stg,
    Time,
    Valuation,
    edge_choice_prob,
    enabled_set,
)

logger = logging.getLogger(__name__)

_REGION_RE = re.compile(r"^\s*(?:\{(\d+)\}|\((\d+)\s*,\s*(\d+|inf)\))\s*$")


class RegionKind(str, Enum):
    POINT = "point"
    OPEN = "open"
    UNBOUNDED = "unbounded"


@dataclass(frozen=True)
class Region:
    """{c}, (c, c+1) or (c_max, inf); for UNBOUNDED, `c` is c_max."""

    kind: RegionKind
    c: int

    @classmethod
    def point(cls, c: int) -> "Region":
        return cls(RegionKind.POINT, c)

    @classmethod
    def open(cls, c: int) -> "Region":
        return cls(RegionKind.OPEN, c)

    @classmethod
    def unbounded(cls, c_max: int) -> "Region":
        return cls(RegionKind.UNBOUNDED, c_max)

    @classmethod
    def of(cls, value: Time, c_max: int) -> "Region":
        if value < 0:
            raise ValueError(f"negative clock value {value}")
        if value > c_max:
            return cls.unbounded(c_max)
        whole = math.floor(value)
        if value == whole:
            return cls.point(int(whole))
        return cls.open(int(whole))

    @classmethod
    def parse(cls, text: str, c_max: int) -> "Region":
        match = _REGION_RE.match(text)
        if not match:
            raise ValueError(f"malformed region {text!r}")
        point, low, high = match.groups()
        if point is not None:
            return cls.point(int(point))
        if high == "inf":
            return cls.unbounded(int(low))
        if int(high) != int(low) + 1:
            raise ValueError(f"region {text!r} is not a unit interval")
        return cls.open(int(low))

    @classmethod
    def all(cls, c_max: int) -> list["Region"]:
        return list(cls.point(0).successors(c_max))

    @property
    def is_zero(self) -> bool:
        return self.kind is RegionKind.POINT and self.c == 0

    @property
    def is_point(self) -> bool:
        return self.kind is RegionKind.POINT

    @property
    def is_unbounded(self) -> bool:
        return self.kind is RegionKind.UNBOUNDED

    @property
    def position(self) -> int:
        return 2 * self.c if self.is_point else 2 * self.c + 1

    @property
    def lower(self) -> Fraction:
        return Fraction(self.c)

    @property
    def upper(self) -> Fraction | float:
        if self.is_unbounded:
            return math.inf
        return Fraction(self.c) if self.is_point else Fraction(self.c + 1)

    def representative(self) -> Fraction:
        if self.is_point:
            return Fraction(self.c)
        if self.is_unbounded:
            return Fraction(self.c + 1)
        return Fraction(2 * self.c + 1, 2)

    def contains(self, value: Time) -> bool:
        if self.is_point:
            return value == self.c
        if self.is_unbounded:
            return value > self.c
        return self.c < value < self.c + 1

    def next(self, c_max: int) -> "Region | None":
        if self.is_unbounded:
            return None
        if self.is_point:
            return Region.open(self.c) if self.c < c_max else Region.unbounded(c_max)
        return Region.point(self.c + 1)

    def successors(self, c_max: int) -> Iterator["Region"]:
        """This region and every region reachable from it by letting time pass."""
        region: Region | None = self
        while region is not None:
            yield region
            region = region.next(c_max)

    def guard(self, clock: str) -> ClockConstraint:
        if self.is_point:
            return ClockConstraint(atoms=(Atom(clock=clock, relation=Relation.EQ, bound=self.c),))
        if self.is_unbounded:
            return ClockConstraint(atoms=(Atom(clock=clock, relation=Relation.GT, bound=self.c),))
        return ClockConstraint(
            atoms=(
                Atom(clock=clock, relation=Relation.GT, bound=self.c),
                Atom(clock=clock, relation=Relation.LT, bound=self.c + 1),
            )
        )

    def __str__(self) -> str:
        if self.is_point:
            return f"{{{self.c}}}"
        if self.is_unbounded:
            return f"({self.c},inf)"
        return f"({self.c},{self.c + 1})"


@dataclass(frozen=True)
class RegionNode:
    location: str
    region: Region

    def __str__(self) -> str:
        return f"{self.location}@{self.region}"


@dataclass(frozen=True)
class RegionEdge:
    source: RegionNode
    guard_region: Region
    edge_id: str
    reset: bool
    target: RegionNode


@dataclass(frozen=True)
class MacroEdge:
    """Sequence of region edges; a single step before any node removal."""

    steps: tuple[RegionEdge, ...]

    @property
    def source(self) -> RegionNode:
        return self.steps[0].source

    @property
    def target(self) -> RegionNode:
        return self.steps[-1].target

    @property
    def label(self) -> tuple[str, ...]:
        return tuple(step.edge_id for step in self.steps)

    @property
    def label_text(self) -> str:
        return "".join(self.label)

    def then(self, other: "MacroEdge") -> "MacroEdge":
        if self.target != other.source:
            raise ValueError(f"cannot chain {self.label_text} into {other.label_text}")
        return MacroEdge(self.steps + other.steps)


@dataclass(frozen=True)
class RegionStg:
    stg: Stg
    clock: str
    c_max: int
    nodes: tuple[RegionNode, ...]
    edges: tuple[MacroEdge, ...]
    initial: RegionNode
    _out: dict = field(default_factory=dict, init=False, repr=False, compare=False)

    def __post_init__(self):
        out: dict[RegionNode, list[MacroEdge]] = {node: [] for node in self.nodes}
        for edge in self.edges:
            out.setdefault(edge.source, []).append(edge)
        self._out.update({node: tuple(edges) for node, edges in out.items()})

    def owner(self, node: RegionNode) -> Owner:
        return self.stg.owner(node.location)

    def is_target(self, node: RegionNode) -> bool:
        return self.stg.is_target(node.location)

    def outgoing(self, node: RegionNode) -> tuple[MacroEdge, ...]:
        return self._out.get(node, ())

    def incoming(self, node: RegionNode) -> list[MacroEdge]:
        return [edge for edge in self.edges if edge.target == node]

    def state(self, node: RegionNode, region: Region | None = None) -> State:
        value = (region or node.region).representative()
        return State(node.location, Valuation({self.clock: value}))

    def graph(self) -> nx.MultiDiGraph:
        graph = nx.MultiDiGraph()
        graph.add_nodes_from(self.nodes)
        for edge in self.edges:
            graph.add_edge(edge.source, edge.target, label=edge.label_text, macro=edge)
        return graph

    def replace(self, nodes=None, edges=None) -> "RegionStg":
        return RegionStg(
            self.stg,
            self.clock,
            self.c_max,
            self.nodes if nodes is None else tuple(nodes),
            self.edges if edges is None else tuple(edges),
            self.initial,
        )

    def pruned(self) -> "RegionStg":
        graph = self.graph()
        keep = nx.descendants(graph, self.initial) | {self.initial}
        nodes = [node for node in self.nodes if node in keep]
        edges = [edge for edge in self.edges if edge.source in keep]
        return self.replace(nodes, edges)

    def to_json(self) -> dict:
        return {
            "model": self.stg.name,
            "clock": self.clock,
            "c_max": self.c_max,
            "initial": str(self.initial),
            "nodes": [
                {
                    "id": str(node),
                    "location": node.location,
                    "region": str(node.region),
                    "owner": self.owner(node).value,
                    "target": self.is_target(node),
                }
                for node in self.nodes
            ],
            "edges": [
                {
                    "source": str(edge.source),
                    "label": edge.label_text,
                    "steps": [
                        {
                            "edge": step.edge_id,
                            "guard": str(step.guard_region.guard(self.clock)),
                            "reset": step.reset,
                        }
                        for step in edge.steps
                    ],
                    "target": str(edge.target),
                }
                for edge in self.edges
            ],
        }


def require_single_clock(stg: Stg) -> str:
    if len(stg.clocks) != 1:
        raise UnsupportedModelError(f"model {stg.name or '<unnamed>'} has {len(stg.clocks)} clocks; one is required")
    return stg.clocks[0]


def _positive_measure(stg: Stg, state: State) -> bool:
    return enabled_set(stg, state).union.measure > 0


def intermediate_regions(stg: Stg, clock: str, c_max: int, node: RegionNode) -> list[Region]:
    """Regions reachable by delay from the node while its invariant holds."""
    location = stg.location(node.location)
    entry_state = State(node.location, Valuation({clock: node.region.representative()}))
    skip_points = location.owner is Owner.STOCHASTIC and _positive_measure(stg, entry_state)
    regions = []
    for region in node.region.successors(c_max):
        if not location.invariant.holds({clock: region.representative()}):
            break
        if skip_points and region.is_point:
            continue
        regions.append(region)
    return regions


def build_region_stg(stg: Stg) -> RegionStg:
    clock = require_single_clock(stg)
    c_max = stg.max_constant()
    initial_state = stg.initial_state()
    initial = RegionNode(initial_state.location, Region.of(initial_state.valuation[clock], c_max))
    nodes = []
    edges = []
    for location in stg.locations:
        for region in Region.all(c_max):
            if not location.invariant.holds({clock: region.representative()}):
                continue
            node = RegionNode(location.name, region)
            nodes.append(node)
            for inner in intermediate_regions(stg, clock, c_max, node):
                value = inner.representative()
                for edge in stg.outgoing(location.name):
                    if not edge.guard.holds({clock: value}):
                        continue
                    reset = clock in edge.resets
                    reached = Region.point(0) if reset else inner
                    if not stg.location(edge.target).invariant.holds({clock: reached.representative()}):
                        logger.debug("Edge %s from %s enters %s outside its invariant", edge.id, node, edge.target)
                        continue
                    step = RegionEdge(node, inner, edge.id, reset, RegionNode(edge.target, reached))
                    edges.append(MacroEdge((step,)))
    if initial not in nodes:
        raise ModelError(f"initial state {initial} violates the invariant of {initial.location}")
    full = RegionStg(stg, clock, c_max, tuple(nodes), tuple(edges), initial)
    result = full.pruned()
    logger.info(
        "Region STG for %r: %d of %d nodes reachable, %d edges",
        stg.name,
        len(result.nodes),
        len(full.nodes),
        len(result.edges),
    )
    return result


@dataclass(frozen=True)
class StarVerdict:
    name: str
    passed: bool
    witness: str | None = None
    detail: str = ""

    def to_json(self) -> dict:
        return {"check": self.name, "passed": self.passed, "witness": self.witness, "detail": self.detail}


@dataclass(frozen=True)
class StarReport:
    non_zeno: StarVerdict
    exponential_unbounded: StarVerdict
    initialized: StarVerdict

    @property
    def verdicts(self) -> tuple[StarVerdict, ...]:
        return (self.non_zeno, self.exponential_unbounded, self.initialized)

    @property
    def passed(self) -> bool:
        return all(verdict.passed for verdict in self.verdicts)

    def to_json(self) -> dict:
        return {"passed": self.passed, "checks": [verdict.to_json() for verdict in self.verdicts]}


def _check_non_zeno(rg: RegionStg) -> StarVerdict:
    bounded = nx.MultiDiGraph()
    for edge in rg.edges:
        if all(not step.guard_region.is_unbounded for step in edge.steps):
            if not edge.source.region.is_zero and not edge.target.region.is_zero:
                bounded.add_edge(edge.source, edge.target, label=edge.label_text)
    try:
        cycle = nx.find_cycle(bounded)
    except nx.NetworkXNoCycle:
        return StarVerdict("non_zeno", True)
    witness = " -> ".join(f"{u} [{bounded.edges[u, v, key]['label']}]" for u, v, key in cycle)
    return StarVerdict("non_zeno", False, witness, "bounded cycle avoiding the zero region")


def _check_exponential(rg: RegionStg) -> StarVerdict:
    stg = rg.stg
    for node in rg.nodes:
        if rg.owner(node) is not Owner.STOCHASTIC:
            continue
        spec = stg.distributions.get(node.location)
        if spec is None or not spec.is_exponential:
            return StarVerdict("exponential_unbounded", False, str(node), f"distribution is {spec or 'missing'}")
        invariant = stg.location(node.location).invariant
        for region in node.region.successors(rg.c_max):
            state = rg.state(node, region)
            if not invariant.holds(state.valuation):
                return StarVerdict("exponential_unbounded", False, str(node), f"invariant fails in {region}")
            try:
                edge_choice_prob(stg, state)
            except BlockedStateError:
                return StarVerdict("exponential_unbounded", False, str(node), f"no edge enabled in {region}")
    return StarVerdict("exponential_unbounded", True)


def _check_initialized(rg: RegionStg) -> StarVerdict:
    for edge in rg.edges:
        for step in edge.steps:
            source_player = rg.owner(step.source).is_player
            target_stochastic = rg.owner(step.target) is Owner.STOCHASTIC
            if source_player and target_stochastic and not step.reset:
                return StarVerdict(
                    "initialized",
                    False,
                    step.edge_id,
                    f"{step.source} -> {step.target} does not reset {rg.clock}",
                )
    return StarVerdict("initialized", True)


def check_star(rg: RegionStg) -> StarReport:
    report = StarReport(_check_non_zeno(rg), _check_exponential(rg), _check_initialized(rg))
    for verdict in report.verdicts:
        logger.info("Restriction %s: %s", verdict.name, "pass" if verdict.passed else f"fail ({verdict.witness})")
    return report
