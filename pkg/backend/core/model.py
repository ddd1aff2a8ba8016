"""Stochastic timed game data model.

An STG is a timed automaton whose locations are split between Player Box,
Player Diamond and a stochastic player. Stochastic locations carry a delay
distribution, and their edges carry weights used to pick among the edges
enabled after the delay.
"""

import json
import logging
import math
import re
from collections.abc import Iterable, Iterator, Mapping
from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from pathlib import Path
from typing import Annotated, Any, Literal, NamedTuple, Union

from pydantic import (
    BaseModel,
    BeforeValidator,
    ConfigDict,
    Field,
    PlainSerializer,
    PrivateAttr,
    ValidationError,
    field_validator,
    model_validator,
)

from core.errors import BlockedStateError, ModelError

logger = logging.getLogger(__name__)

Time = Union[Fraction, float]
INF = math.inf

_IDENTIFIER_RE = re.compile(r"^[A-Za-z_][A-Za-z0-9_.:@-]*$")
_ATOM_RE = re.compile(r"^\s*([A-Za-z_][A-Za-z0-9_]*)\s*(<=|>=|==|<|>|=)\s*(\d+)\s*$")


def parse_rational(value: Any) -> Fraction:
    if isinstance(value, Fraction):
        return value
    if isinstance(value, bool):
        raise ValueError("booleans are not rationals")
    if isinstance(value, int):
        return Fraction(value)
    if isinstance(value, float):
        if not math.isfinite(value):
            raise ValueError(f"not a finite number: {value}")
        return Fraction(value)
    if isinstance(value, str):
        try:
            return Fraction(value.strip())
        except (ValueError, ZeroDivisionError) as exc:
            raise ValueError(f"not a rational literal: {value!r}") from exc
    raise ValueError(f"not a rational: {value!r}")


def format_rational(value: Fraction) -> str:
    return str(value)


Rational = Annotated[Fraction, BeforeValidator(parse_rational), PlainSerializer(format_rational, return_type=str)]


class Owner(str, Enum):
    BOX = "box"
    DIAMOND = "diamond"
    STOCHASTIC = "stochastic"

    @property
    def is_player(self) -> bool:
        return self is not Owner.STOCHASTIC


class Relation(str, Enum):
    LT = "<"
    LE = "<="
    EQ = "="
    GE = ">="
    GT = ">"

    def holds(self, value: Time, bound: int) -> bool:
        if self is Relation.LT:
            return value < bound
        if self is Relation.LE:
            return value <= bound
        if self is Relation.EQ:
            return value == bound
        if self is Relation.GE:
            return value >= bound
        return value > bound


@dataclass(frozen=True)
class Interval:
    """Convex subset of the reals with explicit endpoint flags; `hi` may be +inf."""

    lo: Time
    hi: Time
    lo_closed: bool = True
    hi_closed: bool = True

    @property
    def is_empty(self) -> bool:
        if self.lo > self.hi:
            return True
        return self.lo == self.hi and not (self.lo_closed and self.hi_closed)

    @property
    def is_point(self) -> bool:
        return not self.is_empty and self.lo == self.hi

    @property
    def is_bounded(self) -> bool:
        return self.is_empty or self.hi != INF

    @property
    def length(self) -> Time:
        if self.is_empty:
            return Fraction(0)
        return self.hi - self.lo

    def contains(self, t: Time) -> bool:
        if self.is_empty:
            return False
        above = t > self.lo or (self.lo_closed and t == self.lo)
        below = t < self.hi or (self.hi_closed and t == self.hi)
        return above and below

    def intersect(self, other: "Interval") -> "Interval":
        if self.is_empty or other.is_empty:
            return EMPTY
        if self.lo > other.lo:
            lo, lo_closed = self.lo, self.lo_closed
        elif self.lo < other.lo:
            lo, lo_closed = other.lo, other.lo_closed
        else:
            lo, lo_closed = self.lo, self.lo_closed and other.lo_closed
        if self.hi < other.hi:
            hi, hi_closed = self.hi, self.hi_closed
        elif self.hi > other.hi:
            hi, hi_closed = other.hi, other.hi_closed
        else:
            hi, hi_closed = self.hi, self.hi_closed and other.hi_closed
        result = Interval(lo, hi, lo_closed, hi_closed and hi != INF)
        return EMPTY if result.is_empty else result

    def shifted(self, offset: Time) -> "Interval":
        if self.is_empty:
            return EMPTY
        return Interval(self.lo + offset, self.hi + offset, self.lo_closed, self.hi_closed)

    def __str__(self) -> str:
        if self.is_empty:
            return "empty"
        left = "[" if self.lo_closed else "("
        right = "]" if self.hi_closed else ")"
        hi = "inf" if self.hi == INF else str(self.hi)
        return f"{left}{self.lo}, {hi}{right}"


EMPTY = Interval(Fraction(0), Fraction(0), False, False)
NON_NEGATIVE = Interval(Fraction(0), INF, True, False)


def _sort_key(interval: Interval):
    return (interval.lo, not interval.lo_closed)


@dataclass(frozen=True)
class IntervalSet:
    """Normalized finite union of disjoint intervals, sorted by lower end."""

    parts: tuple[Interval, ...] = ()

    @classmethod
    def union_of(cls, intervals: Iterable[Interval]) -> "IntervalSet":
        pending = sorted((item for item in intervals if not item.is_empty), key=_sort_key)
        merged: list[Interval] = []
        for item in pending:
            if merged:
                last = merged[-1]
                touches = item.lo < last.hi or (item.lo == last.hi and (last.hi_closed or item.lo_closed))
                if touches:
                    if item.hi > last.hi:
                        hi, hi_closed = item.hi, item.hi_closed
                    elif item.hi < last.hi:
                        hi, hi_closed = last.hi, last.hi_closed
                    else:
                        hi, hi_closed = last.hi, last.hi_closed or item.hi_closed
                    merged[-1] = Interval(last.lo, hi, last.lo_closed, hi_closed)
                    continue
            merged.append(item)
        return cls(tuple(merged))

    @property
    def is_empty(self) -> bool:
        return not self.parts

    @property
    def is_bounded(self) -> bool:
        return all(part.is_bounded for part in self.parts)

    @property
    def measure(self) -> Time:
        return sum((part.length for part in self.parts), Fraction(0))

    @property
    def is_discrete(self) -> bool:
        return bool(self.parts) and all(part.is_point for part in self.parts)

    def points(self) -> tuple[Time, ...]:
        return tuple(part.lo for part in self.parts if part.is_point)

    def contains(self, t: Time) -> bool:
        return any(part.contains(t) for part in self.parts)

    def covers_non_negative(self) -> bool:
        return len(self.parts) == 1 and self.parts[0] == NON_NEGATIVE

    def __str__(self) -> str:
        if not self.parts:
            return "empty"
        return " u ".join(str(part) for part in self.parts)


class Atom(BaseModel):
    model_config = ConfigDict(frozen=True)

    clock: str
    relation: Relation
    bound: int = Field(ge=0)

    def holds(self, value: Time) -> bool:
        return self.relation.holds(value, self.bound)

    def value_interval(self) -> Interval:
        k = Fraction(self.bound)
        if self.relation is Relation.LT:
            return Interval(Fraction(0), k, True, False)
        if self.relation is Relation.LE:
            return Interval(Fraction(0), k, True, True)
        if self.relation is Relation.EQ:
            return Interval(k, k, True, True)
        if self.relation is Relation.GE:
            return Interval(k, INF, True, False)
        return Interval(k, INF, False, False)

    def delay_interval(self, value: Time) -> Interval:
        """Delays t >= 0 with value + t satisfying the atom."""
        return self.value_interval().shifted(-value).intersect(NON_NEGATIVE)

    def __str__(self) -> str:
        return f"{self.clock}{self.relation.value}{self.bound}"


class ClockConstraint(BaseModel):
    """Conjunction of atoms `x ~ k`; no atoms means true."""

    model_config = ConfigDict(frozen=True)

    atoms: tuple[Atom, ...] = ()

    @classmethod
    def parse(cls, text: str) -> "ClockConstraint":
        text = (text or "").strip()
        if not text or text.lower() == "true":
            return cls()
        atoms = []
        for chunk in text.split("&&"):
            match = _ATOM_RE.match(chunk)
            if not match:
                raise ValueError(f"malformed clock constraint atom {chunk.strip()!r}")
            clock, relation, bound = match.groups()
            atoms.append(Atom(clock=clock, relation="=" if relation == "==" else relation, bound=int(bound)))
        return cls(atoms=tuple(atoms))

    @property
    def is_true(self) -> bool:
        return not self.atoms

    def clocks(self) -> set[str]:
        return {atom.clock for atom in self.atoms}

    def max_constant(self) -> int:
        return max((atom.bound for atom in self.atoms), default=0)

    def _value(self, valuation: Mapping[str, Time], clock: str) -> Time:
        try:
            return valuation[clock]
        except KeyError as exc:
            raise ModelError(f"unknown clock {clock!r} in constraint {self}") from exc

    def holds(self, valuation: Mapping[str, Time]) -> bool:
        return all(atom.holds(self._value(valuation, atom.clock)) for atom in self.atoms)

    def delay_interval(self, valuation: Mapping[str, Time]) -> Interval:
        result = NON_NEGATIVE
        for atom in self.atoms:
            result = result.intersect(atom.delay_interval(self._value(valuation, atom.clock)))
            if result.is_empty:
                return EMPTY
        return result

    def is_satisfiable(self) -> bool:
        per_clock: dict[str, Interval] = {}
        for atom in self.atoms:
            current = per_clock.get(atom.clock, NON_NEGATIVE)
            per_clock[atom.clock] = current.intersect(atom.value_interval())
        return all(not interval.is_empty for interval in per_clock.values())

    def conjoin(self, other: "ClockConstraint") -> "ClockConstraint":
        return ClockConstraint(atoms=self.atoms + other.atoms)

    def __str__(self) -> str:
        if not self.atoms:
            return "true"
        return " && ".join(str(atom) for atom in self.atoms)


TRUE = ClockConstraint()


def _coerce_constraint(value: Any) -> Any:
    if isinstance(value, str):
        return ClockConstraint.parse(value)
    if value is None:
        return TRUE
    return value


def _coerce_owner(value: Any) -> Any:
    return value.strip().lower() if isinstance(value, str) else value


Constraint = Annotated[ClockConstraint, BeforeValidator(_coerce_constraint), PlainSerializer(str, return_type=str)]
NameSet = Annotated[frozenset[str], PlainSerializer(lambda value: sorted(value), return_type=list[str])]


class Valuation(Mapping[str, Time]):
    """Immutable clock valuation; Fractions on exact paths, floats when sampling."""

    __slots__ = ("_values",)

    def __init__(self, values: Mapping[str, Time]):
        for clock, value in values.items():
            if value < 0:
                raise ModelError(f"clock {clock} has negative value {value}")
        self._values = dict(values)

    @classmethod
    def zero(cls, clocks: Iterable[str]) -> "Valuation":
        return cls({clock: Fraction(0) for clock in clocks})

    def __getitem__(self, clock: str) -> Time:
        return self._values[clock]

    def __iter__(self) -> Iterator[str]:
        return iter(self._values)

    def __len__(self) -> int:
        return len(self._values)

    def __hash__(self) -> int:
        return hash(frozenset(self._values.items()))

    def __repr__(self) -> str:
        inner = ", ".join(f"{clock}={value}" for clock, value in self._values.items())
        return f"Valuation({inner})"

    def delayed(self, delay: Time) -> "Valuation":
        if delay < 0:
            raise ModelError(f"negative delay {delay}")
        return Valuation({clock: value + delay for clock, value in self._values.items()})

    def reset(self, clocks: Iterable[str]) -> "Valuation":
        values = dict(self._values)
        for clock in clocks:
            if clock not in values:
                raise ModelError(f"reset of unknown clock {clock!r}")
            values[clock] = Fraction(0) if isinstance(values[clock], Fraction) else 0.0
        return Valuation(values)

    @property
    def is_exact(self) -> bool:
        return all(isinstance(value, (Fraction, int)) for value in self._values.values())

    def as_float(self) -> "Valuation":
        return Valuation({clock: float(value) for clock, value in self._values.items()})

    def to_json(self) -> dict[str, str | float]:
        return {
            clock: str(value) if isinstance(value, (Fraction, int)) else float(value)
            for clock, value in self._values.items()
        }


class State(NamedTuple):
    location: str
    valuation: Valuation

    def __str__(self) -> str:
        values = ", ".join(f"{clock}={value}" for clock, value in self.valuation.items())
        return f"({self.location}, {values})"


class Location(BaseModel):
    model_config = ConfigDict(frozen=True)

    name: str
    owner: Annotated[Owner, BeforeValidator(_coerce_owner)]
    invariant: Constraint = TRUE
    comment: str | None = None

    @field_validator("name")
    @classmethod
    def _name(cls, value: str) -> str:
        if not _IDENTIFIER_RE.match(value):
            raise ValueError(f"invalid location name {value!r}")
        return value


class Edge(BaseModel):
    model_config = ConfigDict(frozen=True)

    id: str
    source: str
    guard: Constraint = TRUE
    resets: NameSet = frozenset()
    target: str
    weight: int = Field(1, ge=1)
    comment: str | None = None

    @field_validator("resets", mode="before")
    @classmethod
    def _resets(cls, value: Any) -> Any:
        if value is None:
            return frozenset()
        if isinstance(value, str):
            return frozenset(part.strip() for part in value.split(",") if part.strip())
        return frozenset(value)

    @property
    def is_self_loop(self) -> bool:
        return self.source == self.target


class DistributionSpec(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    kind: Literal["uniform", "exponential"]
    rate: Rational | None = None

    @model_validator(mode="after")
    def _rate_matches_kind(self) -> "DistributionSpec":
        if self.kind == "exponential":
            if self.rate is None or self.rate <= 0:
                raise ValueError("exponential distributions need a positive rate")
        elif self.rate is not None:
            raise ValueError("uniform distributions take no rate")
        return self

    @property
    def is_exponential(self) -> bool:
        return self.kind == "exponential"

    def __str__(self) -> str:
        return f"exponential({self.rate})" if self.is_exponential else "uniform"


UNIFORM = DistributionSpec(kind="uniform")


def exponential(rate: Fraction | int | str) -> DistributionSpec:
    return DistributionSpec(kind="exponential", rate=rate)


class InitialState(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    location: str
    valuation: dict[str, Rational] = Field(default_factory=dict)


class Stg(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    name: str = ""
    description: str | None = None
    clocks: tuple[str, ...]
    locations: tuple[Location, ...]
    edges: tuple[Edge, ...] = ()
    distributions: dict[str, DistributionSpec] = Field(default_factory=dict)
    initial: InitialState
    targets: NameSet = frozenset()

    _by_name: dict[str, Location] = PrivateAttr(default_factory=dict)
    _by_id: dict[str, Edge] = PrivateAttr(default_factory=dict)
    _outgoing: dict[str, tuple[Edge, ...]] = PrivateAttr(default_factory=dict)

    @field_validator("clocks")
    @classmethod
    def _clocks(cls, value: tuple[str, ...]) -> tuple[str, ...]:
        if not value:
            raise ValueError("at least one clock is required")
        if len(set(value)) != len(value):
            raise ValueError("clock names must be unique")
        return value

    @field_validator("targets", mode="before")
    @classmethod
    def _targets(cls, value: Any) -> Any:
        return frozenset(value or ())

    def model_post_init(self, __context: Any) -> None:
        for location in self.locations:
            self._by_name.setdefault(location.name, location)
        outgoing: dict[str, list[Edge]] = {location.name: [] for location in self.locations}
        for edge in self.edges:
            self._by_id.setdefault(edge.id, edge)
            outgoing.setdefault(edge.source, []).append(edge)
        self._outgoing = {name: tuple(edges) for name, edges in outgoing.items()}

    def replace(self, **changes: Any) -> "Stg":
        values = {name: getattr(self, name) for name in type(self).model_fields}
        values.update(changes)
        return type(self)(**values)

    def has_location(self, name: str) -> bool:
        return name in self._by_name

    def location(self, name: str) -> Location:
        try:
            return self._by_name[name]
        except KeyError as exc:
            raise ModelError(f"unknown location {name!r}") from exc

    def edge(self, edge_id: str) -> Edge:
        try:
            return self._by_id[edge_id]
        except KeyError as exc:
            raise ModelError(f"unknown edge {edge_id!r}") from exc

    def outgoing(self, name: str) -> tuple[Edge, ...]:
        return self._outgoing.get(name, ())

    def owner(self, name: str) -> Owner:
        return self.location(name).owner

    def distribution(self, name: str) -> DistributionSpec:
        try:
            return self.distributions[name]
        except KeyError as exc:
            raise ModelError(f"stochastic location {name!r} has no distribution") from exc

    def is_target(self, name: str) -> bool:
        return name in self.targets

    def max_constant(self) -> int:
        bounds = [location.invariant.max_constant() for location in self.locations]
        bounds.extend(edge.guard.max_constant() for edge in self.edges)
        return max(bounds, default=0)

    def rate_denominator(self) -> int:
        """lcm of the denominators of all exponential rates (1 when none)."""
        q = 1
        for spec in self.distributions.values():
            if spec.is_exponential:
                q = math.lcm(q, spec.rate.denominator)
        return q

    def initial_state(self) -> State:
        unknown = set(self.initial.valuation) - set(self.clocks)
        if unknown:
            raise ModelError(f"initial valuation names unknown clocks {sorted(unknown)}")
        values = {clock: self.initial.valuation.get(clock, Fraction(0)) for clock in self.clocks}
        return State(self.initial.location, Valuation(values))

    def with_initial(self, location: str, valuation: Mapping[str, Time]) -> "Stg":
        exact = {clock: parse_rational(value) for clock, value in valuation.items()}
        return self.replace(initial=InitialState(location=location, valuation=exact))


def parse_stg(text: str) -> Stg:
    try:
        document = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModelError(f"model is not valid JSON: {exc}") from exc
    try:
        stg = Stg.model_validate(document)
    except ValidationError as exc:
        first = exc.errors()[0]
        where = ".".join(str(part) for part in first["loc"])
        raise ModelError(f"invalid model at {where or 'top level'}: {first['msg']}") from exc
    logger.info("Loaded STG %r with %d locations and %d edges", stg.name, len(stg.locations), len(stg.edges))
    return stg


def load_stg(path: str | Path) -> Stg:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ModelError(f"cannot read model file {path}: {exc}") from exc
    return parse_stg(text)


def dump_stg(stg: Stg) -> str:
    document = stg.model_dump(mode="json", exclude_none=True)
    return json.dumps(document, indent=2)


def satisfies(valuation: Mapping[str, Time], constraint: ClockConstraint) -> bool:
    return constraint.holds(valuation)


def invariant_interval(stg: Stg, state: State) -> Interval:
    """Delays during which the current location's invariant keeps holding."""
    interval = stg.location(state.location).invariant.delay_interval(state.valuation)
    return interval if interval.contains(0) else EMPTY


def enabled_interval(stg: Stg, state: State, edge: Edge) -> Interval:
    if edge.source != state.location:
        raise ModelError(f"edge {edge.id} does not leave location {state.location}")
    invariant = invariant_interval(stg, state)
    if invariant.is_empty:
        return EMPTY
    return invariant.intersect(edge.guard.delay_interval(state.valuation))


@dataclass(frozen=True)
class EnabledSet:
    union: IntervalSet
    per_edge: dict[str, Interval]


def enabled_set(stg: Stg, state: State) -> EnabledSet:
    per_edge = {edge.id: enabled_interval(stg, state, edge) for edge in stg.outgoing(state.location)}
    return EnabledSet(IntervalSet.union_of(per_edge.values()), per_edge)


def enabled_edges(stg: Stg, state: State) -> list[Edge]:
    """Edges that can be taken right now, with no further delay."""
    if not stg.location(state.location).invariant.holds(state.valuation):
        return []
    return [edge for edge in stg.outgoing(state.location) if edge.guard.holds(state.valuation)]


def edge_choice_prob(stg: Stg, state: State) -> dict[str, Fraction]:
    enabled = enabled_edges(stg, state)
    if not enabled:
        raise BlockedStateError(f"no edge is enabled at {state}")
    total = sum(edge.weight for edge in enabled)
    return {edge.id: Fraction(edge.weight, total) for edge in enabled}
