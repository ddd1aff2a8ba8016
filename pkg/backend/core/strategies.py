"""Deterministic player strategies and strategy files."""

import json
import logging
from abc import ABC, abstractmethod
from collections.abc import Callable
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Literal

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from core.errors import IllegalMoveError, ModelError, SemanticsError
from core.model import Interval, Owner, Rational, Stg, Time, enabled_interval
from core.semantics import Move, Run

logger = logging.getLogger(__name__)


class Strategy(ABC):
    """Maps a run prefix ending in a state of `owner` to a (delay, edge) move."""

    owner: Owner

    @abstractmethod
    def decide(self, stg: Stg, run: Run) -> Move:
        raise NotImplementedError

    def reset(self) -> None:
        pass


def inner_delay(interval: Interval) -> Time:
    """A delay inside the interval: its lower end if closed, else just above it."""
    if interval.lo_closed:
        return interval.lo
    if interval.hi == float("inf"):
        return interval.lo + Fraction(1, 2)
    return (interval.lo + interval.hi) / 2


def _first_enabled(stg: Stg, run: Run) -> Move:
    state = run.state
    for edge in stg.outgoing(state.location):
        interval = enabled_interval(stg, state, edge)
        if not interval.is_empty:
            return Move(inner_delay(interval), edge.id)
    raise SemanticsError(f"no move is enabled at {state}")


@dataclass(frozen=True)
class Rule:
    edge: str
    delay: Fraction | None = None
    until: tuple[str, Fraction] | None = None
    earliest: bool = False

    def resolve(self, stg: Stg, run: Run) -> Move:
        state = run.state
        interval = enabled_interval(stg, state, stg.edge(self.edge))
        if self.until is not None:
            clock, value = self.until
            delay = value - state.valuation[clock]
        elif self.earliest:
            if interval.is_empty or not interval.lo_closed:
                raise IllegalMoveError(f"edge {self.edge} has no earliest delay at {state} ({interval})")
            delay = interval.lo
        else:
            delay = self.delay if self.delay is not None else Fraction(0)
        if delay < 0 or not interval.contains(delay):
            raise IllegalMoveError(f"rule for {state.location} plays delay {delay} outside {interval}")
        return Move(delay, self.edge)


class Positional(Strategy):
    """One rule per location; locations without a rule take the first enabled edge."""

    def __init__(self, owner: Owner, rules: dict[str, Rule] | None = None):
        self.owner = owner
        self.rules = dict(rules or {})

    def decide(self, stg: Stg, run: Run) -> Move:
        rule = self.rules.get(run.state.location)
        if rule is None:
            return _first_enabled(stg, run)
        return rule.resolve(stg, run)


class FixedSchedule(Strategy):
    """Moves per location keyed by visit count; the last move repeats."""

    def __init__(self, owner: Owner, moves: dict[str, list[Move]]):
        self.owner = owner
        self.moves = {location: list(items) for location, items in moves.items() if items}

    def decide(self, stg: Stg, run: Run) -> Move:
        location = run.state.location
        items = self.moves.get(location)
        if not items:
            return _first_enabled(stg, run)
        visit = run.visits(location)
        return items[min(visit, len(items)) - 1]


class Scripted(Strategy):
    def __init__(self, owner: Owner, callback: Callable[[Stg, Run], Move], on_reset: Callable[[], None] | None = None):
        self.owner = owner
        self.callback = callback
        self.on_reset = on_reset

    def decide(self, stg: Stg, run: Run) -> Move:
        return self.callback(stg, run)

    def reset(self) -> None:
        if self.on_reset is not None:
            self.on_reset()


@dataclass
class Profile:
    diamond: Strategy = field(default_factory=lambda: Positional(Owner.DIAMOND))
    box: Strategy = field(default_factory=lambda: Positional(Owner.BOX))

    def for_owner(self, owner: Owner) -> Strategy:
        if owner is Owner.DIAMOND:
            return self.diamond
        if owner is Owner.BOX:
            return self.box
        raise ValueError("the stochastic player has no strategy")

    def reset(self) -> None:
        self.diamond.reset()
        self.box.reset()


class RuleSpec(BaseModel):
    model_config = ConfigDict(frozen=True)

    edge: str
    delay: Rational | None = None
    until: str | None = None
    earliest: bool = False

    @model_validator(mode="after")
    def _one_delay_rule(self) -> "RuleSpec":
        chosen = sum(1 for item in (self.delay is not None, self.until is not None, self.earliest) if item)
        if chosen > 1:
            raise ValueError("use only one of delay, until and earliest")
        return self

    def to_rule(self) -> Rule:
        until = None
        if self.until is not None:
            clock, _, value = self.until.partition("=")
            if not value:
                raise ValueError(f"until rule {self.until!r} must read clock=value")
            until = (clock.strip(), Fraction(value.strip()))
        return Rule(self.edge, self.delay, until, self.earliest)


class StrategySpec(BaseModel):
    model_config = ConfigDict(frozen=True)

    owner: Literal["diamond", "box"]
    kind: Literal["positional", "schedule"] = "positional"
    rules: dict[str, RuleSpec] = Field(default_factory=dict)
    moves: dict[str, list[tuple[Rational, str]]] = Field(default_factory=dict)

    def build(self) -> Strategy:
        owner = Owner(self.owner)
        if self.kind == "schedule":
            return FixedSchedule(
                owner,
                {location: [Move(delay, edge) for delay, edge in items] for location, items in self.moves.items()},
            )
        return Positional(owner, {location: spec.to_rule() for location, spec in self.rules.items()})


def parse_strategy(text: str) -> Strategy:
    try:
        spec = StrategySpec.model_validate(json.loads(text))
        return spec.build()
    except json.JSONDecodeError as exc:
        raise ModelError(f"strategy is not valid JSON: {exc}") from exc
    except ValidationError as exc:
        raise ModelError(f"invalid strategy: {exc.errors()[0]['msg']}") from exc
    except ValueError as exc:
        raise ModelError(f"invalid strategy: {exc}") from exc


def load_strategy(path: str | Path) -> Strategy:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ModelError(f"cannot read strategy file {path}: {exc}") from exc
    strategy = parse_strategy(text)
    logger.info("Loaded %s strategy for %s from %s", type(strategy).__name__, strategy.owner.value, path)
    return strategy


def profile_from_files(diamond: str | Path | None = None, box: str | Path | None = None) -> Profile:
    profile = Profile()
    if diamond is not None:
        strategy = load_strategy(diamond)
        if strategy.owner is not Owner.DIAMOND:
            raise ModelError(f"{diamond} is a {strategy.owner.value} strategy")
        profile.diamond = strategy
    if box is not None:
        strategy = load_strategy(box)
        if strategy.owner is not Owner.BOX:
            raise ModelError(f"{box} is a {strategy.owner.value} strategy")
        profile.box = strategy
    return profile
