"""Run semantics: single steps, sampled runs, Monte Carlo estimates and exact path integrals."""

import copy
import logging
import math
from collections import Counter
from collections.abc import Callable, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from typing import TYPE_CHECKING, Union

import networkx as nx
import numpy as np
from scipy.stats import norm

from core.config import CHUNK_SIZE, DEFAULT_CONFIDENCE, MAX_STEPS
from core.errors import (
    BlockedStateError,
    IllegalMoveError,
    ModelError,
    SemanticsError,
    UnsupportedModelError,
)
from core.exppoly import (
    ENTRY,
    ExpPoly,
    TransientExpr,
    integrate_definite,
    integrate_exponential,
)
from core.model import (
    IntervalSet,
    Owner,
    State,
    Stg,
    Time,
    Valuation,
    edge_choice_prob,
    enabled_interval,
    enabled_set,
)
from core.regions import Region, require_single_clock

if TYPE_CHECKING:
    from core.strategies import Profile

logger = logging.getLogger(__name__)

MAX_RESAMPLES = 1000


class OutcomeKind(str, Enum):
    TARGET_HIT = "target_hit"
    LIMIT_REACHED = "limit_reached"
    BLOCKED = "blocked"
    TRAPPED = "trapped"
    STOPPED = "stopped"


@dataclass(frozen=True)
class Outcome:
    kind: OutcomeKind
    elapsed: Time
    location: str

    @property
    def hit(self) -> bool:
        return self.kind is OutcomeKind.TARGET_HIT


@dataclass(frozen=True)
class Move:
    delay: Time
    edge: str


@dataclass(frozen=True)
class RunStep:
    delay: Time
    edge: str
    state: State


@dataclass
class Run:
    origin: State
    steps: list[RunStep] = field(default_factory=list)
    total_elapsed: Time = Fraction(0)

    @property
    def state(self) -> State:
        return self.steps[-1].state if self.steps else self.origin

    def visits(self, location: str) -> int:
        """How often `location` has been entered, the origin included."""
        count = 1 if self.origin.location == location else 0
        return count + sum(1 for step in self.steps if step.state.location == location)

    def append(self, step: RunStep) -> None:
        self.steps.append(step)
        self.total_elapsed = self.total_elapsed + step.delay

    def edge_ids(self) -> list[str]:
        return [step.edge for step in self.steps]

    def to_json(self) -> dict:
        return {
            "origin": {"location": self.origin.location, "valuation": self.origin.valuation.to_json()},
            "steps": [
                {
                    "delay": str(step.delay) if isinstance(step.delay, Fraction) else float(step.delay),
                    "edge": step.edge,
                    "location": step.state.location,
                    "valuation": step.state.valuation.to_json(),
                }
                for step in self.steps
            ],
            "total_elapsed": float(self.total_elapsed),
        }


@dataclass(frozen=True)
class SimulationLimits:
    max_steps: int = MAX_STEPS
    time_bound: Time | None = None
    stop_locations: frozenset[str] = frozenset()


@dataclass
class SampledRun:
    run: Run
    outcome: Outcome
    resamples: int = 0


def step(stg: Stg, state: State, delay: Time, edge_id: str) -> State:
    edge = stg.edge(edge_id)
    interval = enabled_interval(stg, state, edge)
    if not interval.contains(delay):
        raise IllegalMoveError(f"delay {delay} with edge {edge_id} is not enabled at {state} (allowed {interval})")
    valuation = state.valuation.delayed(delay).reset(edge.resets)
    if not stg.location(edge.target).invariant.holds(valuation):
        raise ModelError(f"edge {edge_id} enters {edge.target} with {valuation}, violating its invariant")
    return State(edge.target, valuation)


def live_locations(stg: Stg) -> frozenset[str]:
    """Locations from which some target is reachable in the location graph."""
    graph = nx.DiGraph()
    graph.add_nodes_from(location.name for location in stg.locations)
    graph.add_edges_from((edge.source, edge.target) for edge in stg.edges)
    live = set()
    for target in stg.targets:
        if target in graph:
            live |= nx.ancestors(graph, target) | {target}
    return frozenset(live)


def _sample_uniform(enabled: IntervalSet, rng: np.random.Generator) -> float:
    remaining = rng.random() * float(enabled.measure)
    for part in enabled.parts:
        length = float(part.length)
        if remaining < length:
            return float(part.lo) + remaining
        remaining -= length
    return float(enabled.parts[-1].hi)


def _sample_exponential(enabled: IntervalSet, rate: float, rng: np.random.Generator) -> float:
    masses = []
    for part in enabled.parts:
        upper = 0.0 if part.hi == math.inf else np.exp(-rate * float(part.hi))
        masses.append(np.exp(-rate * float(part.lo)) - upper)
    total = float(np.sum(masses))
    if total <= 0.0:
        raise SemanticsError(f"exponential mass of {enabled} underflows")
    remaining = rng.random() * total
    for part, mass in zip(enabled.parts, masses):
        if remaining < mass:
            return float(-np.log(np.exp(-rate * float(part.lo)) - remaining) / rate)
        remaining -= mass
    return float(enabled.parts[-1].lo)


def sample_delay(stg: Stg, state: State, rng: np.random.Generator) -> Time:
    """Delay drawn from the location's distribution restricted to I(s)."""
    enabled = enabled_set(stg, state).union
    if enabled.is_empty:
        raise BlockedStateError(f"no delay is enabled at {state}")
    if enabled.measure == 0:
        points = enabled.points()
        return points[int(rng.integers(len(points)))]
    spec = stg.distribution(state.location)
    if spec.is_exponential:
        return _sample_exponential(enabled, float(spec.rate), rng)
    if not enabled.is_bounded:
        raise SemanticsError(f"uniform delay requested over unbounded {enabled} at {state}")
    return _sample_uniform(enabled, rng)


def _choose_edge(probabilities: dict[str, Fraction], rng: np.random.Generator) -> str:
    ids = list(probabilities)
    cumulative = np.cumsum([float(probabilities[edge_id]) for edge_id in ids])
    index = int(np.searchsorted(cumulative, rng.random() * cumulative[-1], side="right"))
    return ids[min(index, len(ids) - 1)]


def _stochastic_move(stg: Stg, state: State, rng: np.random.Generator, exact: bool) -> tuple[Move, int]:
    for attempt in range(MAX_RESAMPLES):
        delay = sample_delay(stg, state, rng)
        if exact and isinstance(delay, float):
            delay = Fraction(delay)
        later = State(state.location, state.valuation.delayed(delay))
        try:
            probabilities = edge_choice_prob(stg, later)
        except BlockedStateError:
            logger.debug("Resampling delay %s at %s: no edge enabled", delay, state)
            continue
        return Move(delay, _choose_edge(probabilities, rng)), attempt
    raise SemanticsError(f"no enabled edge after {MAX_RESAMPLES} delay samples at {state}")


def sample_stochastic_move(stg: Stg, state: State, rng: np.random.Generator, exact: bool = True) -> Move:
    """One delay and edge drawn at a stochastic state."""
    move, _ = _stochastic_move(stg, state, rng, exact)
    return move


def sample_run(
    stg: Stg,
    profile: "Profile",
    rng: np.random.Generator,
    limits: SimulationLimits = SimulationLimits(),
    origin: State | None = None,
    exact_clocks: bool = True,
    live: frozenset[str] | None = None,
) -> SampledRun:
    origin = origin or stg.initial_state()
    if not exact_clocks:
        origin = State(origin.location, origin.valuation.as_float())
    live = live_locations(stg) if live is None else live
    run = Run(origin, [], Fraction(0) if exact_clocks else 0.0)
    profile.reset()
    resamples = 0

    def finish(kind: OutcomeKind) -> SampledRun:
        return SampledRun(run, Outcome(kind, run.total_elapsed, run.state.location), resamples)

    if stg.is_target(origin.location):
        return finish(OutcomeKind.TARGET_HIT)
    for _ in range(limits.max_steps):
        state = run.state
        owner = stg.owner(state.location)
        try:
            if owner is Owner.STOCHASTIC:
                move, retries = _stochastic_move(stg, state, rng, exact_clocks)
                resamples += retries
            else:
                if enabled_set(stg, state).union.is_empty:
                    raise BlockedStateError(f"player state {state} has no enabled move")
                move = profile.for_owner(owner).decide(stg, run)
        except BlockedStateError:
            return finish(OutcomeKind.BLOCKED)
        delay = move.delay if exact_clocks else float(move.delay)
        successor = step(stg, state, delay, move.edge)
        if limits.time_bound is not None and run.total_elapsed + delay > limits.time_bound:
            return finish(OutcomeKind.LIMIT_REACHED)
        run.append(RunStep(delay, move.edge, successor))
        location = successor.location
        if stg.is_target(location):
            return finish(OutcomeKind.TARGET_HIT)
        if location in limits.stop_locations:
            return finish(OutcomeKind.STOPPED)
        if location not in live:
            return finish(OutcomeKind.TRAPPED)
    return finish(OutcomeKind.LIMIT_REACHED)


def wilson_interval(hits: int, samples: int, confidence: float = DEFAULT_CONFIDENCE) -> tuple[float, float]:
    """Two-sided Wilson score interval for a binomial proportion."""
    if samples <= 0:
        return (0.0, 1.0)
    z = float(norm.ppf(1.0 - (1.0 - confidence) / 2.0))
    p = hits / samples
    z2 = z * z
    denom = 1.0 + z2 / samples
    center = (p + z2 / (2.0 * samples)) / denom
    margin = (z * ((p * (1.0 - p) / samples + z2 / (4.0 * samples * samples)) ** 0.5)) / denom
    return (max(0.0, min(p, center - margin)), min(1.0, max(p, center + margin)))


@dataclass(frozen=True)
class ReachEstimate:
    hits: int
    samples: int
    point: float
    ci_low: float
    ci_high: float
    confidence: float
    seed: int
    outcomes: dict[str, int]
    resamples: int = 0
    max_elapsed: float = 0.0

    def contains(self, value: float) -> bool:
        return self.ci_low <= value <= self.ci_high

    @property
    def sigma(self) -> float:
        if self.samples == 0:
            return 0.0
        return math.sqrt(max(self.point * (1.0 - self.point), 1e-12) / self.samples)

    def within_sigmas(self, value: float, sigmas: float = 3.0) -> bool:
        reference = math.sqrt(max(value * (1.0 - value), 1e-12) / max(self.samples, 1))
        return abs(self.point - value) <= sigmas * reference

    def to_json(self) -> dict:
        return {
            "hits": self.hits,
            "samples": self.samples,
            "point": self.point,
            "ci": [self.ci_low, self.ci_high],
            "confidence": self.confidence,
            "seed": self.seed,
            "outcomes": dict(sorted(self.outcomes.items())),
            "resamples": self.resamples,
            "max_elapsed": self.max_elapsed,
        }


ProfileSource = Union["Profile", Callable[[], "Profile"]]


def _fresh_profile(source: ProfileSource) -> "Profile":
    if callable(source) and not hasattr(source, "for_owner"):
        return source()
    return copy.deepcopy(source)


def _run_chunk(
    stg: Stg,
    source: ProfileSource,
    seed: int,
    chunk: int,
    count: int,
    limits: SimulationLimits,
    origin: State | None,
    exact_clocks: bool,
    live: frozenset[str],
) -> tuple[Counter, int, float]:
    rng = np.random.default_rng([seed, chunk])
    profile = _fresh_profile(source)
    outcomes: Counter = Counter()
    resamples = 0
    elapsed = np.zeros(count)
    for index in range(count):
        sampled = sample_run(stg, profile, rng, limits, origin, exact_clocks, live)
        outcomes[sampled.outcome.kind.value] += 1
        resamples += sampled.resamples
        elapsed[index] = float(sampled.outcome.elapsed)
    return outcomes, resamples, float(elapsed.max()) if count else 0.0


def estimate_reach(
    stg: Stg,
    profile: ProfileSource,
    samples: int,
    seed: int = 0,
    confidence: float = DEFAULT_CONFIDENCE,
    limits: SimulationLimits = SimulationLimits(),
    origin: State | None = None,
    workers: int = 1,
    conditional: bool = False,
    exact_clocks: bool = True,
) -> ReachEstimate:
    """Monte Carlo estimate of the probability to hit a target.

    Chunk i draws from default_rng([seed, i]), so the result does not depend
    on `workers`. With `conditional`, runs that stop at a stop location are
    left out of the sample count.
    """
    if samples < 1:
        raise ValueError("at least one sample is required")
    live = live_locations(stg)
    sizes = [min(CHUNK_SIZE, samples - start) for start in range(0, samples, CHUNK_SIZE)]
    jobs = [(stg, profile, seed, chunk, size, limits, origin, exact_clocks, live) for chunk, size in enumerate(sizes)]
    if workers > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(max_workers=workers) as executor:
            results = list(executor.map(lambda job: _run_chunk(*job), jobs))
    else:
        results = [_run_chunk(*job) for job in jobs]
    outcomes: Counter = Counter()
    resamples = 0
    max_elapsed = 0.0
    for chunk_outcomes, chunk_resamples, chunk_elapsed in results:
        outcomes.update(chunk_outcomes)
        resamples += chunk_resamples
        max_elapsed = max(max_elapsed, chunk_elapsed)
    if resamples:
        logger.warning("Resampled %d measure-zero delays over %d runs", resamples, samples)
    hits = outcomes[OutcomeKind.TARGET_HIT.value]
    counted = samples - outcomes[OutcomeKind.STOPPED.value] if conditional else samples
    point = hits / counted if counted else 0.0
    ci_low, ci_high = wilson_interval(hits, counted, confidence)
    return ReachEstimate(
        hits=hits,
        samples=counted,
        point=point,
        ci_low=ci_low,
        ci_high=ci_high,
        confidence=confidence,
        seed=seed,
        outcomes=dict(outcomes),
        resamples=resamples,
        max_elapsed=max_elapsed,
    )


@dataclass(frozen=True)
class PathStep:
    edge: str
    delay: Fraction | None = None

    @classmethod
    def parse(cls, text: str) -> "PathStep":
        edge, _, delay = text.partition("@")
        return cls(edge.strip(), Fraction(delay.strip()) if delay.strip() else None)


Entry = Union[Fraction, Region]


class _PathIntegrator:
    """Backward evaluation of a symbolic path probability.

    `value(i, entry)` is the probability of the suffix from step i, as a
    function of the clock value on entry. A concrete entry gives a constant;
    a region entry gives the function over that region.
    """

    def __init__(self, stg: Stg, path: Sequence[PathStep]):
        self.stg = stg
        self.path = list(path)
        self.clock = require_single_clock(stg)
        self.c_max = stg.max_constant()
        self.cache: dict[tuple[int, Entry], TransientExpr] = {}
        self.exponential = False

    def _state(self, location: str, value: Fraction) -> State:
        return State(location, Valuation({self.clock: value}))

    def value(self, index: int, entry: Entry) -> TransientExpr:
        key = (index, entry)
        if key not in self.cache:
            self.cache[key] = self._compute(index, entry)
        return self.cache[key]

    def _compute(self, index: int, entry: Entry) -> TransientExpr:
        if index == len(self.path):
            return TransientExpr.constant(1)
        step_ = self.path[index]
        edge = self.stg.edge(step_.edge)
        owner = self.stg.owner(edge.source)
        if owner.is_player:
            return self._player(index, entry, edge, step_.delay)
        if self.stg.distribution(edge.source).is_exponential:
            self.exponential = True
            return self._exponential(index, entry, edge)
        return self._uniform(index, entry, edge)

    def _reached(self, index: int, edge, value: Fraction) -> ExpPoly:
        reached = Fraction(0) if self.clock in edge.resets else value
        if not self.stg.location(edge.target).invariant.holds({self.clock: reached}):
            raise ModelError(f"edge {edge.id} enters {edge.target} at {self.clock}={reached}, violating its invariant")
        return self.value(index + 1, reached).constant_value()

    def _successor(self, index: int, edge, piece: Region) -> TransientExpr:
        if self.clock in edge.resets:
            return TransientExpr.constant(self._reached(index, edge, Fraction(0)))
        if not self.stg.location(edge.target).invariant.holds({self.clock: piece.representative()}):
            raise ModelError(f"edge {edge.id} enters {edge.target} in {piece}, violating its invariant")
        return self.value(index + 1, piece)

    def _player(self, index: int, entry: Entry, edge, delay: Fraction | None) -> TransientExpr:
        if delay is None:
            raise SemanticsError(f"player step {edge.id} needs an explicit delay")
        if isinstance(entry, Region):
            raise UnsupportedModelError(f"player step {edge.id} follows a stochastic delay without reset")
        state = self._state(edge.source, entry)
        if not enabled_interval(self.stg, state, edge).contains(delay):
            raise IllegalMoveError(f"delay {delay} with edge {edge.id} is not enabled at {state}")
        return TransientExpr.constant(self._reached(index, edge, entry + delay))

    def _share(self, location: str, value: Fraction, edge_id: str) -> Fraction:
        try:
            return edge_choice_prob(self.stg, self._state(location, value)).get(edge_id, Fraction(0))
        except BlockedStateError:
            return Fraction(0)

    def _pieces(self, region: Region) -> list[tuple[Region, object, object]]:
        pieces = []
        for inner in region.successors(self.c_max):
            if inner.is_point:
                continue
            lower = ENTRY if inner == region else inner.lower
            pieces.append((inner, lower, inner.upper))
        return pieces

    def _exponential(self, index: int, entry: Entry, edge) -> TransientExpr:
        rate = self.stg.distribution(edge.source).rate
        region = entry if isinstance(entry, Region) else Region.of(entry, self.c_max)
        probe = region.representative() if isinstance(entry, Region) else entry
        enabled = enabled_set(self.stg, self._state(edge.source, probe)).union
        if enabled.is_empty:
            raise BlockedStateError(f"no delay is enabled at {edge.source} with {self.clock}={probe}")
        full = enabled.covers_non_negative()
        if not full and isinstance(entry, Region):
            raise UnsupportedModelError(f"exponential step {edge.id} from a symbolic entry needs I(s) = [0, inf)")
        total = TransientExpr()
        for piece, lower, upper in self._pieces(region):
            share = self._share(edge.source, piece.representative(), edge.id)
            if not share:
                continue
            successor = self._successor(index, edge, piece)
            total = total + integrate_exponential(successor, rate, lower, upper).scale(share)
        if isinstance(entry, Region):
            return total
        result = total.evaluate(entry)
        if not full:
            result = _renormalise(result, enabled, rate, edge.id)
        return TransientExpr.constant(result)

    def _uniform(self, index: int, entry: Entry, edge) -> TransientExpr:
        if isinstance(entry, Region):
            raise UnsupportedModelError(f"uniform step {edge.id} follows a stochastic delay without reset")
        state = self._state(edge.source, entry)
        enabled = enabled_set(self.stg, state).union
        if enabled.is_empty:
            raise BlockedStateError(f"no delay is enabled at {state}")
        if enabled.measure == 0:
            points = enabled.points()
            total = ExpPoly()
            for delay in points:
                share = self._share(edge.source, entry + delay, edge.id)
                if share:
                    total = total + self._reached(index, edge, entry + delay) * share
            return TransientExpr.constant(total / len(points))
        if not enabled.is_bounded:
            raise SemanticsError(f"uniform delay over unbounded {enabled} at {state}")
        interval = enabled_interval(self.stg, state, edge)
        if interval.is_empty:
            return TransientExpr.constant(0)
        low, high = entry + interval.lo, entry + interval.hi
        total = ExpPoly()
        for piece in Region.of(entry, self.c_max).successors(self.c_max):
            if piece.is_point:
                continue
            a, b = max(low, piece.lower), min(high, piece.upper)
            if b <= a:
                continue
            share = self._share(edge.source, (a + b) / 2, edge.id)
            if not share:
                continue
            if self.clock in edge.resets:
                mass = self._reached(index, edge, Fraction(0)) * (b - a)
            else:
                mass = integrate_definite(self._successor(index, edge, piece), a, b)
            total = total + mass * share
        return TransientExpr.constant(total / enabled.measure)


def _renormalise(value: ExpPoly, enabled: IntervalSet, rate: Fraction, edge_id: str) -> ExpPoly:
    """Divide by the exponential mass of I(s); only monomial masses stay exact."""
    mass = ExpPoly()
    for part in enabled.parts:
        mass = mass + ExpPoly.exp_neg(rate * part.lo)
        if part.hi != math.inf:
            mass = mass - ExpPoly.exp_neg(rate * part.hi)
    if len(mass.terms) != 1:
        raise UnsupportedModelError(f"exponential step {edge_id}: mass {mass} of I(s) is not a monomial")
    ((exponent, coefficient),) = mass.terms.items()
    return value * ExpPoly({-exponent: 1 / coefficient}, mass.q)


def exact_path_probability(
    stg: Stg,
    path: Sequence[PathStep | str],
    start: State | None = None,
) -> Fraction | ExpPoly:
    """Probability of the symbolic path from `start`, computed by nested exact integration."""
    require_single_clock(stg)
    steps = [PathStep.parse(item) if isinstance(item, str) else item for item in path]
    start = start or stg.initial_state()
    location = start.location
    for item in steps:
        edge = stg.edge(item.edge)
        if edge.source != location:
            raise ModelError(f"edge {edge.id} leaves {edge.source}, but the path is at {location}")
        location = edge.target
    value = start.valuation[stg.clocks[0]]
    if not isinstance(value, Fraction):
        value = Fraction(value)
    integrator = _PathIntegrator(stg, steps)
    result = integrator.value(0, value).constant_value()
    if not integrator.exponential and result.is_constant:
        return result.constant_value()
    return result
