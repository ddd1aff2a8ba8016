"""Exact reachability values on the abstracted graph and threshold decisions.

Values are rational functions N(y)/D(y) with y = exp(-1/q). Comparisons
reduce to the sign of an ExpPoly, which `certified_sign` settles by
refining a Taylor enclosure of y.
"""

import itertools
import logging
import math
import re
from dataclasses import dataclass
from enum import Enum
from fractions import Fraction

import networkx as nx
import numpy as np
from sympy import Poly, Rational, Symbol
from sympy import gcd as poly_gcd

from core.config import DEFAULT_PRECISION
from core.errors import InternalConsistencyError, PreconditionError
from core.exppoly import INITIAL_TERMS, MAX_TERMS, ExpPoly, SignCertificate, certified_sign, format_enclosure
from core.mdp import Mdp, MdpAction
from core.model import Owner, Relation

logger = logging.getLogger(__name__)

EXHAUSTIVE_LIMIT = 12

_Y = Symbol("y")


def _to_poly(value: ExpPoly, shift: int) -> Poly:
    terms = {(k + shift,): Rational(c.numerator, c.denominator) for k, c in value.terms.items()}
    return Poly.from_dict(terms or {(0,): 0}, _Y, domain="QQ")


def _from_poly(poly: Poly, q: int) -> ExpPoly:
    return ExpPoly({k: Fraction(int(c.p), int(c.q)) for (k,), c in poly.as_dict().items()}, q)


class RationalFunctionValue:
    """Element of Q(y), kept gcd-reduced with a monic denominator."""

    __slots__ = ("num", "den")

    def __init__(self, num: ExpPoly, den: ExpPoly | None = None):
        den = ExpPoly.constant(1) if den is None else den
        if den.is_zero:
            raise ZeroDivisionError("rational function with zero denominator")
        self.num, self.den = self._canonical(num, den)

    @staticmethod
    def _canonical(num: ExpPoly, den: ExpPoly) -> tuple[ExpPoly, ExpPoly]:
        if num.is_zero:
            return ExpPoly(), ExpPoly.constant(1)
        q = math.lcm(num.q, den.q)
        num, den = num.lift(q), den.lift(q)
        g = q
        for exponent in itertools.chain(num.terms, den.terms):
            g = math.gcd(g, exponent)
        if g > 1:
            num = ExpPoly({k // g: c for k, c in num.terms.items()}, q // g)
            den = ExpPoly({k // g: c for k, c in den.terms.items()}, q // g)
            q //= g
        shift = -min(num.min_exponent, den.min_exponent)
        p_num, p_den = _to_poly(num, shift), _to_poly(den, shift)
        common = poly_gcd(p_num, p_den)
        p_num, p_den = p_num.exquo(common), p_den.exquo(common)
        lead = p_den.LC()
        p_num, p_den = p_num.exquo_ground(lead), p_den.exquo_ground(lead)
        return _from_poly(p_num, q), _from_poly(p_den, q)

    @classmethod
    def of(cls, value: "RationalFunctionValue | ExpPoly | int | Fraction") -> "RationalFunctionValue":
        if isinstance(value, RationalFunctionValue):
            return value
        return cls(ExpPoly.coerce(value))

    @property
    def is_zero(self) -> bool:
        return self.num.is_zero

    @property
    def is_polynomial(self) -> bool:
        return self.den == 1

    def __add__(self, other):
        other = RationalFunctionValue.of(other)
        return RationalFunctionValue(self.num * other.den + other.num * self.den, self.den * other.den)

    __radd__ = __add__

    def __neg__(self) -> "RationalFunctionValue":
        return RationalFunctionValue(-self.num, self.den)

    def __sub__(self, other):
        return self + (-RationalFunctionValue.of(other))

    def __rsub__(self, other):
        return RationalFunctionValue.of(other) - self

    def __mul__(self, other):
        other = RationalFunctionValue.of(other)
        return RationalFunctionValue(self.num * other.num, self.den * other.den)

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = RationalFunctionValue.of(other)
        if other.is_zero:
            raise ZeroDivisionError("division by the zero rational function")
        return RationalFunctionValue(self.num * other.den, self.den * other.num)

    def __eq__(self, other) -> bool:
        try:
            other = RationalFunctionValue.of(other)
        except TypeError:
            return NotImplemented
        return self.num * other.den == other.num * self.den

    def __hash__(self) -> int:
        return hash((self.num, self.den))

    def sign(self) -> int:
        return certified_sign(self.num).sign * certified_sign(self.den).sign

    def compare(self, other) -> int:
        """-1, 0 or 1 as self is below, equal to or above `other` at y = exp(-1/q)."""
        return (self - RationalFunctionValue.of(other)).sign()

    def enclosure(self, terms: int = INITIAL_TERMS) -> tuple[Fraction, Fraction]:
        while True:
            n_lo, n_hi = self.num.enclosure(terms)
            d_lo, d_hi = self.den.enclosure(terms)
            if d_lo > 0 or d_hi < 0:
                break
            if terms >= MAX_TERMS:
                raise InternalConsistencyError(f"denominator {self.den} cannot be separated from 0")
            terms *= 2
        quotients = [a / b for a in (n_lo, n_hi) for b in (d_lo, d_hi)]
        return min(quotients), max(quotients)

    def tight_enclosure(self, digits: int) -> tuple[Fraction, Fraction]:
        width = Fraction(1, 10 ** (digits + 2))
        terms = INITIAL_TERMS
        lo, hi = self.enclosure(terms)
        while hi - lo > width and terms < MAX_TERMS:
            terms *= 2
            lo, hi = self.enclosure(terms)
        return lo, hi

    def __float__(self) -> float:
        return float(self.num.evaluate_float() / self.den.evaluate_float())

    def __str__(self) -> str:
        if self.is_polynomial:
            return str(self.num)
        return f"({self.num}) / ({self.den})"

    def __repr__(self) -> str:
        return f"RationalFunctionValue({self.num!r}, {self.den!r})"

    def describe(self) -> str:
        q = max(self.num.q, self.den.q)
        return f"{self}; y=exp(-1/{q})"

    def to_json(self, precision: int = DEFAULT_PRECISION) -> dict:
        lo, hi = self.tight_enclosure(precision)
        low_text, high_text = format_enclosure(lo, hi, precision)
        return {
            "symbolic": self.describe(),
            "numerator": self.num.to_json(),
            "denominator": self.den.to_json(),
            "enclosure": [low_text, high_text],
        }


class Mode(str, Enum):
    MAX = "max"
    MAXMIN = "maxmin"


class StateKind(str, Enum):
    MAX = "max"
    MIN = "min"
    CHANCE = "chance"
    TARGET = "target"
    SINK = "sink"


Profile = dict[str, int]


@dataclass(frozen=True)
class GameGraph:
    mdp: Mdp
    mode: Mode
    kinds: dict[str, StateKind]

    @classmethod
    def from_mdp(cls, mdp: Mdp, mode: Mode = Mode.MAX) -> "GameGraph":
        mode = Mode(mode)
        kinds = {}
        for state in mdp.states.values():
            if state.target:
                kinds[state.id] = StateKind.TARGET
            elif not state.actions and not state.branches:
                logger.warning("State %s has no moves and is treated as a sink", state.id)
                kinds[state.id] = StateKind.SINK
            elif state.owner is Owner.STOCHASTIC:
                kinds[state.id] = StateKind.CHANCE
            elif state.owner is Owner.DIAMOND:
                kinds[state.id] = StateKind.MAX
            elif mode is Mode.MAXMIN or len(state.actions) == 1:
                kinds[state.id] = StateKind.MIN
            else:
                raise PreconditionError(f"box state {state.id} has a choice; solve it in maxmin mode")
        return cls(mdp, mode, kinds)

    @property
    def initial(self) -> str:
        return self.mdp.initial

    def states_of(self, kind: StateKind) -> list[str]:
        return [state_id for state_id, other in self.kinds.items() if other is kind]

    def actions(self, state_id: str) -> tuple[MdpAction, ...]:
        return self.mdp.states[state_id].actions

    def profile_count(self, kinds: tuple[StateKind, ...] = (StateKind.MAX, StateKind.MIN)) -> int:
        count = 1
        for state_id, kind in self.kinds.items():
            if kind in kinds:
                count *= len(self.actions(state_id))
        return count

    def first_profile(self) -> Profile:
        return {state_id: 0 for state_id, kind in self.kinds.items() if kind in (StateKind.MAX, StateKind.MIN)}

    def successors(self, state_id: str, profile: Profile) -> dict[str, ExpPoly]:
        kind = self.kinds[state_id]
        if kind in (StateKind.TARGET, StateKind.SINK):
            return {}
        if kind is StateKind.CHANCE:
            merged: dict[str, ExpPoly] = {}
            for branch in self.mdp.states[state_id].branches:
                merged[branch.successor] = merged.get(branch.successor, ExpPoly()) + branch.probability
            return {successor: p for successor, p in merged.items() if not p.is_zero}
        try:
            action = self.actions(state_id)[profile[state_id]]
        except (KeyError, IndexError) as exc:
            raise PreconditionError(f"profile fixes no valid action at {state_id}") from exc
        return {action.successor: ExpPoly.constant(1)}


def _eliminate(matrix: list[list[RationalFunctionValue]], rhs: list[RationalFunctionValue]) -> None:
    rows = len(matrix)
    for pivot in range(rows):
        for row in range(pivot, rows):
            if not matrix[row][pivot].is_zero:
                break
        else:
            raise InternalConsistencyError(f"singular system: no pivot in column {pivot}")
        if row != pivot:
            matrix[pivot], matrix[row] = matrix[row], matrix[pivot]
            rhs[pivot], rhs[row] = rhs[row], rhs[pivot]
        head = matrix[pivot][pivot]
        for row in range(pivot + 1, rows):
            factor_top = matrix[row][pivot]
            if factor_top.is_zero:
                continue
            factor = factor_top / head
            for column in range(pivot, rows):
                if not matrix[pivot][column].is_zero:
                    matrix[row][column] = matrix[row][column] - matrix[pivot][column] * factor
            rhs[row] = rhs[row] - rhs[pivot] * factor


def _back_substitute(
    matrix: list[list[RationalFunctionValue]], rhs: list[RationalFunctionValue]
) -> list[RationalFunctionValue]:
    rows = len(matrix)
    solution = [RationalFunctionValue.of(0)] * rows
    for row in range(rows - 1, -1, -1):
        total = rhs[row]
        for column in range(row + 1, rows):
            if not matrix[row][column].is_zero:
                total = total - matrix[row][column] * solution[column]
        solution[row] = total / matrix[row][row]
    return solution


def evaluate_profile(gg: GameGraph, profile: Profile) -> dict[str, RationalFunctionValue]:
    """Exact reachability value of every state in the chain induced by `profile`."""
    chain = {state_id: gg.successors(state_id, profile) for state_id in gg.kinds}
    graph = nx.DiGraph()
    graph.add_nodes_from(chain)
    graph.add_edges_from((source, target) for source, targets in chain.items() for target in targets)
    targets = set(gg.states_of(StateKind.TARGET))
    reaching = set(targets)
    for target in targets:
        reaching |= nx.ancestors(graph, target)
    unknowns = [state_id for state_id in chain if state_id in reaching and state_id not in targets]
    index = {state_id: position for position, state_id in enumerate(unknowns)}
    zero = RationalFunctionValue.of(0)
    matrix = [[zero] * len(unknowns) for _ in unknowns]
    rhs = [zero] * len(unknowns)
    for row, state_id in enumerate(unknowns):
        matrix[row][row] = RationalFunctionValue.of(1)
        for successor, probability in chain[state_id].items():
            if successor in targets:
                rhs[row] = rhs[row] + probability
            elif successor in index:
                column = index[successor]
                matrix[row][column] = matrix[row][column] - probability
    values = {state_id: (RationalFunctionValue.of(1) if state_id in targets else zero) for state_id in chain}
    if unknowns:
        _eliminate(matrix, rhs)
        values.update(zip(unknowns, _back_substitute(matrix, rhs)))
    return values


@dataclass
class Solution:
    value: RationalFunctionValue
    values: dict[str, RationalFunctionValue]
    profile: Profile
    iterations: int = 0
    mode: Mode = Mode.MAX

    def strategy(self, gg: GameGraph) -> dict[str, MdpAction]:
        return {state_id: gg.actions(state_id)[choice] for state_id, choice in self.profile.items()}

    def to_json(self, gg: GameGraph, precision: int = DEFAULT_PRECISION) -> dict:
        return {
            "mode": self.mode.value,
            "initial": gg.initial,
            "value": self.value.to_json(precision),
            "iterations": self.iterations,
            "strategy": [
                {
                    "state": state_id,
                    "player": gg.kinds[state_id].value,
                    "label": action.label,
                    "successor": action.successor,
                }
                for state_id, action in self.strategy(gg).items()
            ],
        }


def _best_choice(
    gg: GameGraph,
    state_id: str,
    current: int,
    values: dict[str, RationalFunctionValue],
    direction: int,
) -> int:
    """Index of an action whose successor strictly improves on the current one, else `current`."""
    actions = gg.actions(state_id)
    best, best_value = current, values[actions[current].successor]
    for choice, action in enumerate(actions):
        if choice == current:
            continue
        candidate = values[action.successor]
        if candidate.compare(best_value) == direction:
            best, best_value = choice, candidate
    return best


def _improve(
    gg: GameGraph,
    profile: Profile,
    kind: StateKind,
    direction: int,
    evaluate,
    bound: int,
) -> tuple[Profile, dict[str, RationalFunctionValue], int]:
    profile = dict(profile)
    values = evaluate(profile)
    for iteration in range(1, bound + 2):
        switched = False
        for state_id in gg.states_of(kind):
            choice = _best_choice(gg, state_id, profile[state_id], values, direction)
            if choice != profile[state_id]:
                logger.debug("Switching %s to action %s", state_id, gg.actions(state_id)[choice].label)
                profile[state_id] = choice
                switched = True
        if not switched:
            return profile, values, iteration
        previous = values
        values = evaluate(profile)
        for state_id in values:
            if values[state_id].compare(previous[state_id]) == -direction:
                raise InternalConsistencyError(
                    f"improvement step made {state_id} worse: {previous[state_id]} -> {values[state_id]}"
                )
    raise InternalConsistencyError(f"policy iteration exceeded {bound} profiles")


def _sure_avoidance(gg: GameGraph, profile: Profile) -> set[str]:
    """States from which Min keeps the play away from the target with probability 1."""
    avoid = {state_id for state_id, kind in gg.kinds.items() if kind is not StateKind.TARGET}
    changed = True
    while changed:
        changed = False
        for state_id in list(avoid):
            kind = gg.kinds[state_id]
            if kind is StateKind.MIN:
                keeps = any(action.successor in avoid for action in gg.actions(state_id))
            else:
                keeps = all(successor in avoid for successor in gg.successors(state_id, profile))
            if not keeps:
                avoid.discard(state_id)
                changed = True
    return avoid


def min_best_response(gg: GameGraph, profile: Profile) -> tuple[Profile, dict[str, RationalFunctionValue]]:
    """Exact Min response to the Max choices in `profile`."""
    profile = dict(profile)
    avoid = _sure_avoidance(gg, profile)
    for state_id in gg.states_of(StateKind.MIN):
        if state_id in avoid:
            actions = gg.actions(state_id)
            profile[state_id] = next(i for i, action in enumerate(actions) if action.successor in avoid)
    bound = gg.profile_count((StateKind.MIN,))
    profile, values, _ = _improve(
        gg, profile, StateKind.MIN, -1, lambda candidate: evaluate_profile(gg, candidate), bound
    )
    return profile, values


def solve_optimal(gg: GameGraph) -> Solution:
    profile = gg.first_profile()
    target_initial = gg.kinds[gg.initial] is StateKind.TARGET
    if gg.mode is Mode.MAX:
        profile, values, iterations = _improve(
            gg,
            profile,
            StateKind.MAX,
            1,
            lambda candidate: evaluate_profile(gg, candidate),
            gg.profile_count((StateKind.MAX,)),
        )
    else:
        responses: dict[tuple, Profile] = {}

        def evaluate(candidate: Profile) -> dict[str, RationalFunctionValue]:
            response, response_values = min_best_response(gg, candidate)
            responses[tuple(sorted(candidate.items()))] = response
            return response_values

        profile, values, iterations = _improve(
            gg, profile, StateKind.MAX, 1, evaluate, gg.profile_count((StateKind.MAX,))
        )
        profile = responses[tuple(sorted(profile.items()))]
    value = RationalFunctionValue.of(1) if target_initial else values[gg.initial]
    logger.info("Optimal %s value at %s: %s after %d rounds", gg.mode.value, gg.initial, value, iterations)
    return Solution(value, values, profile, iterations, gg.mode)


def _profiles(gg: GameGraph, kind: StateKind):
    states = gg.states_of(kind)
    for choices in itertools.product(*(range(len(gg.actions(state_id))) for state_id in states)):
        yield dict(zip(states, choices))


def exhaustive_optimum(gg: GameGraph, limit: int = EXHAUSTIVE_LIMIT) -> tuple[RationalFunctionValue, Profile]:
    """Optimum over all pure memoryless profiles, for cross-checking `solve_optimal`."""
    count = gg.profile_count()
    if count > limit:
        raise PreconditionError(f"{count} pure profiles exceed the enumeration limit {limit}")
    best: tuple[RationalFunctionValue, Profile] | None = None
    for max_part in _profiles(gg, StateKind.MAX):
        worst: tuple[RationalFunctionValue, Profile] | None = None
        for min_part in _profiles(gg, StateKind.MIN):
            profile = {**max_part, **min_part}
            value = evaluate_profile(gg, profile)[gg.initial]
            if worst is None or value.compare(worst[0]) < 0:
                worst = (value, profile)
        if best is None or worst[0].compare(best[0]) > 0:
            best = worst
    return best


_THRESHOLD_RE = re.compile(r"^\s*(<=|>=|<|>|=|==)\s*(\S+)\s*$")


@dataclass(frozen=True)
class ThresholdQuery:
    relation: Relation
    p: Fraction

    def __post_init__(self):
        if not 0 <= self.p <= 1:
            raise ValueError(f"threshold {self.p} is outside [0, 1]")

    @classmethod
    def parse(cls, text: str) -> "ThresholdQuery":
        match = _THRESHOLD_RE.match(text)
        if match is None:
            raise ValueError(f"threshold {text!r} must read '<relation> <rational>', e.g. '>= 1/2'")
        symbol, literal = match.groups()
        try:
            p = Fraction(literal)
        except (ValueError, ZeroDivisionError) as exc:
            raise ValueError(f"threshold bound {literal!r} is not a rational") from exc
        return cls(Relation("=" if symbol == "==" else symbol), p)

    def __str__(self) -> str:
        return f"{self.relation.value} {self.p}"


@dataclass(frozen=True)
class ThresholdVerdict:
    holds: bool
    query: ThresholdQuery
    sign: int
    polynomial: ExpPoly
    certificate: SignCertificate | None = None

    def to_json(self, precision: int = DEFAULT_PRECISION) -> dict:
        document = {
            "query": str(self.query),
            "holds": self.holds,
            "sign": self.sign,
            "polynomial": self.polynomial.describe(),
            "identically_zero": self.polynomial.is_zero,
        }
        if self.certificate is not None:
            document["certificate"] = self.certificate.to_json(precision)
        return document


def decide_threshold(value: RationalFunctionValue, query: ThresholdQuery) -> ThresholdVerdict:
    """Compare value ⋈ p through the sign of N - p*D, times the sign of D."""
    difference = value.num - value.den * query.p
    if difference.is_zero:
        return ThresholdVerdict(query.relation.holds(0, 0), query, 0, difference)
    certificate = certified_sign(difference)
    sign = certificate.sign * certified_sign(value.den).sign
    logger.debug("Sign of %s is %d after %d Taylor terms", difference, sign, certificate.terms)
    return ThresholdVerdict(query.relation.holds(sign, 0), query, sign, difference, certificate)


def value_iteration_preview(
    gg: GameGraph, tolerance: float = 1e-15, max_iterations: int = 100_000
) -> dict[str, float]:
    """Floating point values in longdouble; for previews only, never for verdicts."""
    probabilities = {
        state_id: [(branch.successor, branch.probability.evaluate_float()) for branch in state.branches]
        for state_id, state in gg.mdp.states.items()
    }
    values = {
        state_id: np.longdouble(1 if kind is StateKind.TARGET else 0) for state_id, kind in gg.kinds.items()
    }
    for iteration in range(max_iterations):
        change = np.longdouble(0)
        for state_id, kind in gg.kinds.items():
            if kind in (StateKind.TARGET, StateKind.SINK):
                continue
            if kind is StateKind.CHANCE:
                new = sum((p * values[successor] for successor, p in probabilities[state_id]), np.longdouble(0))
            else:
                options = [values[action.successor] for action in gg.actions(state_id)]
                new = max(options) if kind is StateKind.MAX else min(options)
            change = max(change, abs(new - values[state_id]))
            values[state_id] = new
        if change < tolerance:
            logger.debug("Value iteration converged after %d sweeps", iteration + 1)
            break
    else:
        logger.warning("Value iteration stopped after %d sweeps without reaching %g", max_iterations, tolerance)
    return {state_id: float(value) for state_id, value in values.items()}
