"""Compilation of a two-counter machine into a 4-clock 1½-player game.

On entry to the module of every instruction the valuation is
x1 = 1/2^c1, x2 = 1/2^c2, x3 = x4 = 0. Player Diamond simulates an
instruction by choosing one delay; a fair coin then either continues with
the next instruction or enters a GetProb gadget, which reaches the target
with probability 1/2 exactly when that delay was the faithful one.
"""

import logging
from dataclasses import replace
from fractions import Fraction

from core.model import Owner
from core.tcm.builder import CompiledGame, GameBuilder, NodeRole, conj
from core.tcm.machine import Dec, Halt, Inc, Jz, TwoCounterMachine

logger = logging.getLogger(__name__)

CLOCKS = ("x1", "x2", "x3", "x4")


def counter_clocks(counter: str) -> tuple[str, str]:
    """The clock encoding `counter` and the clock of the other counter."""
    return ("x1", "x2") if counter == "c1" else ("x2", "x1")


def _getprob(
    builder: GameBuilder,
    prefix: str,
    role: NodeRole,
    low: list[str],
    high: list[str],
    tracked: tuple[str, ...],
    zeroed: tuple[str, ...],
) -> str:
    """E0 splits uniformly over [0,2]; each side restores the entry clocks and replays the split.

    `low` guards lead to the E3/E4 side, whose replay P1 wins on the `high`
    guards; `high` guards lead to E1/E2, whose replay P2 wins on `low`.
    """
    goal, sink = builder.goal(), builder.sink()
    entry = builder.location(f"{prefix}.E0", Owner.STOCHASTIC, "x4<=2", replace(role, kind="getprob.E0"))
    for side, guards, replay, wins, loses in (
        ("A", low, "P1", high, low),
        ("B", high, "P2", low, high),
    ):
        restore = f"{prefix}.W{side}"
        replay_name = f"{prefix}.{replay}"
        names = ("E3", "E4") if side == "A" else ("E1", "E2")
        for name, guard in zip(names, guards):
            node = builder.location(f"{prefix}.{name}", Owner.DIAMOND, role=replace(role, kind="getprob.E"))
            builder.edge(entry, node, guard)
            builder.edge(node, restore, "x4=2", ("x4",))
        builder.location(
            restore,
            Owner.DIAMOND,
            "x4<=1",
            replace(role, kind="getprob.W"),
            comment=f"winds {', '.join(tracked)} back to their entry fractions",
        )
        for clock in tracked:
            builder.edge(restore, restore, f"{clock}=3", (clock,), role="loop")
        builder.edge(restore, replay_name, "x4=1", ("x4", *zeroed))
        builder.location(replay_name, Owner.STOCHASTIC, "x4<=2", replace(role, kind="getprob.P"))
        for guard in wins:
            builder.edge(replay_name, goal, guard)
        for guard in loses:
            builder.edge(replay_name, sink, guard)
    return entry


def _increment(builder: GameBuilder, instruction: Inc) -> None:
    own, other = counter_clocks(instruction.counter)
    label = instruction.label
    base = NodeRole("", label, "inc", instruction.counter, clocks={"own": own, "other": other})
    builder.location(label, Owner.DIAMOND, role=replace(base, kind="inc.entry"), comment=f"inc {instruction.counter}")
    builder.edge(label, label, f"{other}=1", (other,), role="loop")
    builder.edge(label, f"{label}.B", f"{own}=1", (own, "x4"), role="exit")
    builder.location(f"{label}.B", Owner.DIAMOND, role=replace(base, kind="inc.B"), comment="delay 1/2^(c+1) sets the new value")
    builder.edge(f"{label}.B", f"{label}.B", f"{other}=1", (other,), role="loop")
    builder.edge(f"{label}.B", f"{label}.C", conj(f"{own}>0", "x3<1"), ("x4",), role="exit")
    builder.location(f"{label}.C", Owner.STOCHASTIC, "x4<=0", replace(base, kind="inc.C"))
    builder.edge(f"{label}.C", f"{label}.D", resets=(own,), role="continue")
    getprob = f"{label}.gp"
    builder.edge(f"{label}.C", f"{getprob}.E0", resets=(other,), role="gadget")
    builder.location(f"{label}.D", Owner.DIAMOND, role=replace(base, kind="inc.D"))
    builder.edge(f"{label}.D", f"{label}.D", f"{other}=1", (other,), role="loop")
    builder.edge(f"{label}.D", instruction.next, "x3=1", ("x3", "x4"), role="exit")
    _getprob(
        builder,
        getprob,
        base,
        low=[f"{own}<=1", conj("x4>=1", "x3<=2")],
        high=[conj(f"{own}>=1", "x4<=1"), conj("x3>=2", "x4<=2")],
        tracked=(own, "x3"),
        zeroed=(other,),
    )


def _decrement(builder: GameBuilder, instruction: Dec) -> None:
    own, other = counter_clocks(instruction.counter)
    label = instruction.label
    base = NodeRole("", label, "dec", instruction.counter, clocks={"own": own, "other": other})
    builder.location(
        label, Owner.DIAMOND, role=replace(base, kind="dec.entry"), comment=f"dec {instruction.counter}; delay 1 - 2/2^c"
    )
    builder.edge(label, label, f"{other}=1", (other,), role="loop")
    builder.edge(label, f"{label}.B", "x3<1", ("x4",), role="exit")
    builder.location(f"{label}.B", Owner.STOCHASTIC, "x4<=0", replace(base, kind="dec.B"))
    builder.edge(f"{label}.B", f"{label}.D", resets=(own,), role="continue")
    builder.edge(f"{label}.B", f"{label}.C", resets=(other,), role="gadget")
    builder.location(f"{label}.D", Owner.DIAMOND, role=replace(base, kind="dec.D"))
    builder.edge(f"{label}.D", f"{label}.D", f"{other}=1", (other,), role="loop")
    builder.edge(f"{label}.D", instruction.next, "x3=1", ("x3", "x4"), role="exit")
    getprob = f"{label}.gp"
    builder.location(f"{label}.C", Owner.DIAMOND, role=replace(base, kind="dec.C"))
    builder.edge(f"{label}.C", f"{getprob}.E0", f"{own}=1", (own, "x4"))
    _getprob(
        builder,
        getprob,
        base,
        low=["x3<=1", conj("x4>=1", f"{other}<=2")],
        high=[conj("x3>=1", "x4<=1"), conj(f"{other}>=2", "x4<=2")],
        tracked=(other, "x3"),
        zeroed=(own,),
    )


def _zero_test(builder: GameBuilder, instruction: Jz) -> None:
    own, other = counter_clocks(instruction.counter)
    label = instruction.label
    base = NodeRole("", label, "jz", instruction.counter, clocks={"own": own, "other": other})
    goal = builder.goal()
    builder.location(label, Owner.DIAMOND, "x4<=0", replace(base, kind="zero.entry"), comment=f"jz {instruction.counter}")
    builder.edge(label, f"{label}.B1", f"{own}=1", role="zero")
    builder.edge(label, f"{label}.B2", f"{own}<1", role="positive")
    for node, successor in (("B1", instruction.then), ("B2", instruction.otherwise)):
        name = builder.location(f"{label}.{node}", Owner.STOCHASTIC, "x4<=0", replace(base, kind=f"zero.{node}"))
        builder.edge(name, goal, role="gadget")
        builder.edge(name, successor, role="continue")


def compile_onehalf(machine: TwoCounterMachine) -> CompiledGame:
    builder = GameBuilder("tcm-onehalf", CLOCKS, "two-counter machine reduction, Diamond against a random player")
    for instruction in machine.instructions:
        builder.entries[(instruction.label, 0)] = instruction.label
        if isinstance(instruction, Inc):
            _increment(builder, instruction)
        elif isinstance(instruction, Dec):
            _decrement(builder, instruction)
        elif isinstance(instruction, Jz):
            _zero_test(builder, instruction)
        elif isinstance(instruction, Halt):
            builder.location(instruction.label, Owner.DIAMOND, role=NodeRole("halt", instruction.label, "halt"))
            builder.edge(instruction.label, instruction.label)
    builder.goal()
    builder.sink()
    valuation = {"x1": Fraction(1), "x2": Fraction(1), "x3": Fraction(0), "x4": Fraction(0)}
    return builder.build(machine, "onehalf", machine.initial, valuation)
