"""Incremental construction of compiled games."""

import logging
from collections import Counter
from collections.abc import Iterable, Mapping
from dataclasses import dataclass, field
from fractions import Fraction

from core.errors import InternalConsistencyError
from core.model import UNIFORM, Edge, InitialState, Location, Owner, Stg
from core.tcm.machine import TwoCounterMachine

logger = logging.getLogger(__name__)

GOAL = "goal"
SINK = "sink"


def conj(*atoms: str) -> str:
    return " && ".join(atom for atom in atoms if atom)


@dataclass(frozen=True)
class NodeRole:
    """What a compiled location does; strategies dispatch on `kind`."""

    kind: str
    label: str = ""
    step_kind: str = ""
    counter: str = ""
    parity: int = 0
    clocks: Mapping[str, str] = field(default_factory=dict)
    factor: int = 0


@dataclass
class CompiledGame:
    stg: Stg
    machine: TwoCounterMachine
    variant: str
    roles: dict[str, NodeRole]
    edge_roles: dict[str, str]
    entries: dict[tuple[str, int], str]

    def role(self, location: str) -> NodeRole | None:
        return self.roles.get(location)

    def entry(self, label: str, parity: int = 0) -> str:
        return self.entries[(label, parity)]

    @property
    def entry_locations(self) -> frozenset[str]:
        return frozenset(self.entries.values())

    def edges_with_role(self, location: str, role: str) -> list[Edge]:
        return [edge for edge in self.stg.outgoing(location) if self.edge_roles.get(edge.id) == role]

    def locations_of(self, kind: str) -> list[str]:
        return [name for name, role in self.roles.items() if role.kind == kind]


class GameBuilder:
    def __init__(self, name: str, clocks: Iterable[str], description: str | None = None):
        self.name = name
        self.clocks = tuple(clocks)
        self.description = description
        self.locations: dict[str, Location] = {}
        self.edges: list[Edge] = []
        self.targets: set[str] = set()
        self.roles: dict[str, NodeRole] = {}
        self.edge_roles: dict[str, str] = {}
        self.entries: dict[tuple[str, int], str] = {}
        self._pairs: Counter = Counter()

    def location(
        self,
        name: str,
        owner: Owner,
        invariant: str = "",
        role: NodeRole | None = None,
        comment: str | None = None,
    ) -> str:
        if name in self.locations:
            raise InternalConsistencyError(f"location {name} built twice")
        self.locations[name] = Location(name=name, owner=owner, invariant=invariant, comment=comment)
        if role is not None:
            self.roles[name] = role
        return name

    def edge(
        self,
        source: str,
        target: str,
        guard: str = "",
        resets: Iterable[str] = (),
        weight: int = 1,
        role: str | None = None,
    ) -> str:
        self._pairs[(source, target)] += 1
        count = self._pairs[(source, target)]
        edge_id = f"{source}->{target}" + (f"#{count}" if count > 1 else "")
        self.edges.append(Edge(id=edge_id, source=source, target=target, guard=guard, resets=frozenset(resets), weight=weight))
        if role is not None:
            self.edge_roles[edge_id] = role
        return edge_id

    def goal(self) -> str:
        if GOAL not in self.locations:
            self.location(GOAL, Owner.DIAMOND, comment="target of every gadget")
            self.targets.add(GOAL)
        return GOAL

    def sink(self) -> str:
        if SINK not in self.locations:
            self.location(SINK, Owner.DIAMOND, comment="absorbing non-target")
            self.edge(SINK, SINK)
        return SINK

    def stochastic_split(self, name: str, invariant: str, branches: Iterable[tuple[str, str, int]], role: NodeRole):
        """A stochastic node with one (target, guard, weight) edge per branch."""
        self.location(name, Owner.STOCHASTIC, invariant, role)
        for target, guard, weight in branches:
            self.edge(name, target, guard, weight=weight)
        return name

    def build(self, machine: TwoCounterMachine, variant: str, initial: str, valuation: Mapping[str, Fraction]) -> CompiledGame:
        for edge in self.edges:
            for end in (edge.source, edge.target):
                if end not in self.locations:
                    raise InternalConsistencyError(f"edge {edge.id} references unbuilt location {end}")
        distributions = {
            name: UNIFORM for name, location in self.locations.items() if location.owner is Owner.STOCHASTIC
        }
        stg = Stg(
            name=self.name,
            description=self.description,
            clocks=self.clocks,
            locations=tuple(self.locations.values()),
            edges=tuple(self.edges),
            distributions=distributions,
            initial=InitialState(location=initial, valuation=dict(valuation)),
            targets=frozenset(self.targets),
        )
        logger.info("Compiled %s game with %d locations and %d edges", variant, len(stg.locations), len(stg.edges))
        return CompiledGame(stg, machine, variant, dict(self.roles), dict(self.edge_roles), dict(self.entries))
