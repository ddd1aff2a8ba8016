"""Strategies that simulate the machine faithfully, and Box check policies."""

import logging
from fractions import Fraction

from core.errors import DomainError, IllegalMoveError, SemanticsError
from core.model import Edge, Owner, State, Stg, Time, enabled_interval
from core.semantics import Move, Run
from core.strategies import Profile, Strategy, inner_delay
from core.tcm.builder import CompiledGame, NodeRole
from core.tcm.machine import Configuration, MachineRun, run_tcm
from core.tcm.timebounded import CHECK_WEIGHTS, REM_FACTOR, wid_factors

logger = logging.getLogger(__name__)

Perturbation = tuple[int, Fraction]
WIDGETS = ("check-z", "check-x", "mul-a", "mul-x", "wid", "wid-zero", "wid-double")
ZERO_CHECK_WIDGETS = ("mul-a", "mul-x", "wid", "wid-zero", "wid-double")
CONTINUE = ("continue", "loop", "next-rem", "wid")


def check_law(factor: int) -> str:
    """Name of the law of the check attached to a multiply-by-`factor` loop."""
    return "wid-zero" if factor == 3 else "wid-double"


def current_step(game: CompiledGame, run: Run, first_step: int = 1) -> int:
    """Instruction being simulated: `first_step` plus the module entries since the origin."""
    entries = game.entry_locations
    step = first_step
    for item in run.steps:
        if item.state.location in entries and not game.stg.edge(item.edge).is_self_loop:
            step += 1
    return step


def visit_entry(stg: Stg, run: Run) -> tuple[State, Time]:
    """State on entering the current location, and the time spent there since, self-loops included."""
    elapsed: Time = Fraction(0)
    index = len(run.steps) - 1
    while index >= 0 and stg.edge(run.steps[index].edge).is_self_loop:
        elapsed += run.steps[index].delay
        index -= 1
    entry = run.steps[index].state if index >= 0 else run.origin
    return entry, elapsed


def _earliest(interval) -> Time | None:
    if interval.is_empty:
        return None
    return inner_delay(interval)


def earliest_move(stg: Stg, state: State) -> Move:
    """The edge enabled soonest; on ties an exit fires before a clock wraps, so x = 1 survives a module boundary."""
    best: tuple[Time, bool, Edge] | None = None
    for edge in stg.outgoing(state.location):
        delay = _earliest(enabled_interval(stg, state, edge))
        if delay is None:
            continue
        if best is None or (delay, edge.is_self_loop) < (best[0], best[1]):
            best = (delay, edge.is_self_loop, edge)
    if best is None:
        raise SemanticsError(f"no move is enabled at {state}")
    return Move(best[0], best[2].id)


def _move_at(stg: Stg, state: State, edge: Edge, delay: Time) -> Move:
    if delay < 0 or not enabled_interval(stg, state, edge).contains(delay):
        raise IllegalMoveError(f"faithful delay {delay} for {edge.id} is not enabled at {state}")
    return Move(delay, edge.id)


class _MachineTrace:
    def __init__(self, game: CompiledGame, run: MachineRun | None, first_step: int):
        self.game = game
        self.run = run or run_tcm(game.machine)
        self.first_step = first_step

    def step(self, run: Run) -> int:
        return current_step(self.game, run, self.first_step)

    def configuration(self, step: int) -> Configuration:
        if step > len(self.run.configurations):
            raise SemanticsError(f"machine run has no configuration for step {step}")
        return self.run.configurations[step - 1]


class FaithfulDiamond(Strategy):
    """Plays the delays that keep the clock encoding of the machine exact.

    With a perturbation (j, eps) the one nondeterministic delay of step j is
    shifted by eps; every other delay stays faithful.
    """

    owner = Owner.DIAMOND

    def __init__(
        self,
        game: CompiledGame,
        perturbation: Perturbation | None = None,
        machine_run: MachineRun | None = None,
        first_step: int = 1,
    ):
        self.game = game
        self.perturbation = perturbation
        self.trace = _MachineTrace(game, machine_run, first_step)

    def _epsilon(self, step: int) -> Fraction:
        if self.perturbation is not None and self.perturbation[0] == step:
            return self.perturbation[1]
        return Fraction(0)

    def decide(self, stg: Stg, run: Run) -> Move:
        state = run.state
        role = self.game.role(state.location)
        kind = role.kind if role is not None else ""
        if kind in ("inc.B", "dec.entry"):
            return self._timed_exit(stg, run, role)
        if kind in ("tb.entry", "tb.B"):
            return self._simulate(stg, run, role)
        if kind == "tb.guess":
            config = self.trace.configuration(self.trace.step(run))
            wanted = "zero" if config.counter(role.counter) == 0 else "pos"
            return _move_at(stg, state, self._edge(state.location, wanted), Fraction(0))
        if kind in ("rem.A", "rem.B"):
            return self._rem(stg, state, role)
        if kind in ("wid.strip", "wid.finish"):
            return self._wid(stg, run, role)
        return earliest_move(stg, state)

    def _edge(self, location: str, role: str) -> Edge:
        edges = self.game.edges_with_role(location, role)
        if not edges:
            raise SemanticsError(f"{location} has no {role} edge")
        return edges[0]

    def _timed_exit(self, stg: Stg, run: Run, role: NodeRole) -> Move:
        step = self.trace.step(run)
        entry, elapsed = visit_entry(stg, run)
        if role.kind == "inc.B":
            planned = (1 - entry.valuation["x3"]) / 2
        else:
            planned = 1 - 2 * entry.valuation[role.clocks["own"]]
        remaining = planned + self._epsilon(step) - elapsed
        state = run.state
        for edge in stg.outgoing(state.location):
            if edge.is_self_loop:
                delay = _earliest(enabled_interval(stg, state, edge))
                if delay is not None and delay < remaining:
                    return Move(delay, edge.id)
        return _move_at(stg, state, self._edge(state.location, "exit"), remaining)

    def _simulate(self, stg: Stg, run: Run, role: NodeRole) -> Move:
        state = run.state
        values = state.valuation
        divisor = 1 + CHECK_WEIGHTS[(role.step_kind, role.counter)]
        source = values[role.clocks["s"]]
        if role.kind == "tb.entry":
            delay = (1 - values["z"]) / 2 - source / divisor
        else:
            delay = (source - values["a"]) / divisor + self._epsilon(self.trace.step(run))
        return _move_at(stg, state, self._edge(state.location, "exit"), delay)

    def _rem(self, stg: Stg, state: State, role: NodeRole) -> Move:
        values = state.valuation
        stored = values[role.clocks["v"]] - values["z"]
        if role.kind == "rem.A":
            delay = max(Fraction(0), values["a"] - values["z"] - REM_FACTOR * stored)
        else:
            delay = REM_FACTOR * stored
        return _move_at(stg, state, self._edge(state.location, "exit"), delay)

    def _wid(self, stg: Stg, run: Run, role: NodeRole) -> Move:
        state = run.state
        value = state.valuation[role.clocks["v"]]
        if role.kind == "wid.strip":
            config = self.trace.configuration(self.trace.step(run))
            strip, _ = wid_factors(role.counter)
            done = value == (Fraction(1, 2**config.c1) if strip == 3 else Fraction(1, 3**config.c2))
        else:
            done = value == 1
        if done:
            return _move_at(stg, state, self._edge(state.location, "stop"), Fraction(0))
        return _move_at(stg, state, self._edge(state.location, "exit"), (role.factor - 1) * value)


class _BoxPolicy(Strategy):
    owner = Owner.BOX

    def __init__(self, game: CompiledGame, first_step: int = 1):
        self.game = game
        self.first_step = first_step

    def preferred(self, role: NodeRole, run: Run) -> tuple[str, ...]:
        raise NotImplementedError

    def decide(self, stg: Stg, run: Run) -> Move:
        state = run.state
        role = self.game.role(state.location)
        preferences = self.preferred(role, run) if role is not None else ()
        for wanted in (*preferences, None):
            for edge in stg.outgoing(state.location):
                if wanted is not None and self.game.edge_roles.get(edge.id) != wanted:
                    continue
                if enabled_interval(stg, state, edge).contains(Fraction(0)):
                    return Move(Fraction(0), edge.id)
        raise SemanticsError(f"Box has no zero-delay move at {state}")


class AlwaysContinue(_BoxPolicy):
    """Never checks: the simulation runs on and loops repeat."""

    def preferred(self, role: NodeRole, run: Run) -> tuple[str, ...]:
        return CONTINUE


class CheckAt(_BoxPolicy):
    """Continues everywhere except at `step`, where it drives the run into `widget`."""

    def __init__(self, game: CompiledGame, step: int, widget: str, first_step: int = 1):
        if widget not in WIDGETS:
            raise DomainError(f"unknown widget {widget!r}; choose one of {', '.join(WIDGETS)}")
        super().__init__(game, first_step)
        self.step = step
        self.widget = widget

    def preferred(self, role: NodeRole, run: Run) -> tuple[str, ...]:
        if current_step(self.game, run, self.first_step) != self.step:
            return CONTINUE
        kind = role.kind
        if kind == "tb.check":
            return (self.widget,) if self.widget in ("check-z", "check-x") else ("continue",)
        if kind == "tb.guessbox":
            return ("rem",) if self.widget in ZERO_CHECK_WIDGETS else ("continue",)
        if kind == "rem.check":
            if self.widget in ("mul-a", "mul-x"):
                return (self.widget,)
            return ("next-rem", "wid")
        if kind in ("wid.loopbox", "wid.finishbox"):
            return ("check",) if self.widget == check_law(role.factor) else ("loop",)
        return ("continue",)


def _require(condition: bool, message: str) -> None:
    if not condition:
        raise DomainError(message)


def check_perturbation(game: CompiledGame, perturbation: Perturbation, machine_run: MachineRun | None = None) -> None:
    """Raises DomainError unless eps keeps step j's delay inside its legal open interval."""
    step, eps = perturbation
    machine_run = machine_run or run_tcm(game.machine)
    _require(1 <= step <= machine_run.steps, f"step {step} is not an executed instruction (1..{machine_run.steps})")
    config = machine_run.configurations[step - 1]
    instruction = game.machine.instruction(config.label)
    if eps == 0:
        return
    if instruction.kind == "jz" and game.variant == "onehalf":
        raise DomainError("a zero test has no delay to perturb")
    if game.variant == "onehalf":
        value = Fraction(1, 2 ** config.counter(instruction.counter))
        if instruction.kind == "inc":
            _require(abs(eps) < value / 2, f"eps={eps} outside (-{value / 2}, {value / 2})")
        else:
            low = max(-value, 2 * value - 1)
            _require(low < eps < value, f"eps={eps} outside ({low}, {value})")
        return
    k = step - 1
    divisor = 1 + CHECK_WEIGHTS[(instruction.kind, instruction.counter)]
    stored = Fraction(1, 2 ** (k + config.c1) * 3 ** (k + config.c2))
    low, high = -stored / divisor, 1 - Fraction(1, 2 ** (k + 1))
    _require(low < eps < high, f"eps={eps} outside ({low}, {high})")


def faithful_strategies(
    game: CompiledGame,
    perturbation: Perturbation | None = None,
    box: Strategy | None = None,
    first_step: int = 1,
    machine_run: MachineRun | None = None,
) -> Profile:
    machine_run = machine_run or run_tcm(game.machine)
    if perturbation is not None:
        check_perturbation(game, perturbation, machine_run)
    diamond = FaithfulDiamond(game, perturbation, machine_run, first_step)
    if box is None:
        box = AlwaysContinue(game, first_step)
    return Profile(diamond=diamond, box=box)
