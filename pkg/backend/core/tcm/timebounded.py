"""Compilation of a two-counter machine into a 5-clock game with a time bound.

After k simulated instructions the counters are held in one clock as
1/(2^(k+c1) 3^(k+c2)): x1 when k is even, x2 when k is odd. The clock z holds
1 - 1/2^k, a measures the time spent in the current instruction and b forces
zero delays. Player Box may stop the simulation at every check node and enter
a widget that reaches the target with probability 1/2 exactly when Diamond's
last delays were faithful. Faithful runs last less than 5 time units.
"""

import logging
from fractions import Fraction

from core.model import Owner
from core.tcm.builder import CompiledGame, GameBuilder, NodeRole, conj
from core.tcm.machine import Dec, Halt, Inc, Instruction, Jz, TwoCounterMachine

logger = logging.getLogger(__name__)

CLOCKS = ("x1", "x2", "z", "a", "b")
TIME_BOUND = Fraction(5)
PARITIES = ("even", "odd")
REM_FACTOR = 6

# F1 sink weights of the Check x widget, one less than the divisor of the stored value.
CHECK_WEIGHTS = {("inc", "c1"): 11, ("inc", "c2"): 17, ("dec", "c1"): 2, ("dec", "c2"): 1, ("jz", "c1"): 5, ("jz", "c2"): 5}


def parity_clocks(parity: int) -> tuple[str, str]:
    """(source, destination): the clock holding the counters and the one receiving them."""
    return ("x1", "x2") if parity == 0 else ("x2", "x1")


def module_name(label: str, parity: int) -> str:
    return f"{label}.{PARITIES[parity]}"


def wid_factors(counter: str) -> tuple[int, int]:
    """(strip, finish): the factor removed before testing `counter`, then the one that fills up to 1."""
    return (3, 2) if counter == "c1" else (2, 3)


class _Module:
    def __init__(self, builder: GameBuilder, instruction: Instruction, parity: int):
        self.builder = builder
        self.instruction = instruction
        self.parity = parity
        self.name = module_name(instruction.label, parity)
        self.source, self.dest = parity_clocks(parity)
        self.base = NodeRole(
            "",
            instruction.label,
            instruction.kind,
            getattr(instruction, "counter", ""),
            parity,
            {"s": self.source, "d": self.dest},
        )

    def role(self, kind: str, clocks: dict[str, str] | None = None, factor: int = 0) -> NodeRole:
        return NodeRole(
            kind,
            self.base.label,
            self.base.step_kind,
            self.base.counter,
            self.parity,
            clocks if clocks is not None else self.base.clocks,
            factor,
        )

    def successor(self, label: str) -> str:
        return module_name(label, 1 - self.parity)

    def node(self, suffix: str) -> str:
        return f"{self.name}.{suffix}"

    def split(self, suffix: str, invariant: str, branches, kind: str, clocks=None, factor: int = 0) -> str:
        return self.builder.stochastic_split(self.node(suffix), invariant, branches, self.role(kind, clocks, factor))

    def diamond(self, suffix: str, target: str, guard: str, resets=(), kind: str = "widget", clocks=None) -> str:
        name = self.builder.location(self.node(suffix), Owner.DIAMOND, role=self.role(kind, clocks))
        self.builder.edge(name, target, guard, resets)
        return name


def _simulate(module: _Module) -> str:
    """Entry, B and the Check box shared by every instruction kind; returns the Check box."""
    builder = module.builder
    builder.location(
        module.name,
        Owner.DIAMOND,
        role=module.role("tb.entry"),
        comment=f"{module.instruction.kind} {module.base.counter}; counters in {module.source}",
    )
    builder.edge(module.name, module.node("B"), "a<1", (module.dest,), role="exit")
    builder.location(module.node("B"), Owner.DIAMOND, role=module.role("tb.B"))
    builder.edge(module.node("B"), module.node("Check"), "a<1", ("b",), role="exit")
    check = builder.location(module.node("Check"), Owner.BOX, "b<=0", module.role("tb.check"))
    builder.edge(check, _check_z(module), role="check-z")
    weight = CHECK_WEIGHTS[(module.instruction.kind, module.base.counter)]
    builder.edge(check, _check_x(module, weight), role="check-x")
    return check


def _check_z(module: _Module) -> str:
    goal, sink = module.builder.goal(), module.builder.sink()
    module.split("cz.B0", "b<=1", [(goal, "a<=1", 1), (sink, "a>1", 1)], "widget")
    module.split("cz.F0", "b<=1", [(goal, "z<=2", 1), (sink, "z>2", 1)], "widget")
    module.diamond("cz.E0", module.node("cz.F0"), "a=1", ("b",))
    module.split("cz.D0", "b<=0", [(sink, "", 1), (module.node("cz.E0"), "", 1)], "widget")
    return module.split("cz.A0", "b<=0", [(module.node("cz.B0"), "", 1), (module.node("cz.D0"), "", 1)], "check-z")


def _check_x(module: _Module, weight: int) -> str:
    goal, sink = module.builder.goal(), module.builder.sink()
    s, d = module.source, module.dest
    module.split("cx.B1", "b<=1", [(goal, f"{d}<=1", 1), (sink, f"{d}>1", 1)], "widget")
    module.split("cx.E1", "b<=1", [(goal, "a<=1", 1), (sink, "a>1", 1)], "widget")
    module.diamond("cx.D1", module.node("cx.E1"), f"{s}=2", ("b",))
    module.diamond("cx.C1", module.node("cx.D1"), "a=1", ("a",))
    module.split("cx.F1", "b<=0", [(module.node("cx.C1"), "", 1), (sink, "", weight)], "widget")
    return module.split(
        "cx.A1", "b<=0", [(module.node("cx.B1"), "", 1), (module.node("cx.F1"), "", 1)], "check-x"
    )


def _step(module: _Module, next_label: str) -> None:
    check = _simulate(module)
    module.builder.edge(check, module.successor(next_label), resets=(module.source, "a"), role="continue")


def _zero_check(module: _Module) -> None:
    builder = module.builder
    instruction = module.instruction
    check = _simulate(module)
    guess = module.node("D")
    builder.edge(check, guess, resets=(module.source,), role="continue")
    builder.location(guess, Owner.DIAMOND, "b<=0", module.role("tb.guess"), comment="Diamond claims the counter value")
    for guess_kind, successor in (("zero", instruction.then), ("pos", instruction.otherwise)):
        box = module.node(f"is-{guess_kind}")
        builder.edge(guess, box, role=guess_kind)
        builder.location(box, Owner.BOX, "b<=0", module.role("tb.guessbox"))
        builder.edge(box, module.successor(successor), resets=("a",), role="continue")
        builder.edge(box, module.node(f"rem-{guess_kind}1.A"), resets=("z",), role="rem")
        for copy in (1, 2):
            _rem(module, guess_kind, copy)
    _mul_a(module)
    for copy in (1, 2):
        _mul_x(module, copy)


def _rem_clocks(module: _Module, copy: int) -> dict[str, str]:
    """Rem copy 1 writes the shrunk value into the source clock, copy 2 back into the destination."""
    if copy == 1:
        return {"w": module.source, "v": module.dest}
    return {"w": module.dest, "v": module.source}


def _rem(module: _Module, guess: str, copy: int) -> None:
    builder = module.builder
    clocks = _rem_clocks(module, copy)
    w, v = clocks["w"], clocks["v"]
    prefix = f"rem-{guess}{copy}"
    entry = module.node(f"{prefix}.A")
    builder.location(entry, Owner.DIAMOND, role=module.role("rem.A", clocks), comment=f"multiply {v} by 6 into {w}")
    builder.edge(entry, module.node(f"{prefix}.B"), f"{w}<=1", (w,), role="exit")
    builder.location(module.node(f"{prefix}.B"), Owner.DIAMOND, role=module.role("rem.B", clocks))
    builder.edge(module.node(f"{prefix}.B"), module.node(f"{prefix}.Check"), f"{w}<=1", ("b",), role="exit")
    check = builder.location(module.node(f"{prefix}.Check"), Owner.BOX, "b<=0", module.role("rem.check", clocks))
    builder.edge(check, module.node(f"rem-{guess}{3 - copy}.A"), "a<1", ("z", v), role="next-rem")
    builder.edge(check, _wid(module, guess, copy, w), "a=1", ("a",), role="wid")
    builder.edge(check, module.node("mula.A"), role="mul-a")
    builder.edge(check, module.node(f"mulx{copy}.A"), role="mul-x")


def _mul_a(module: _Module) -> None:
    goal, sink = module.builder.goal(), module.builder.sink()
    module.split("mula.E", "b<=1", [(goal, "z>1", 1), (sink, "z<=1", 1)], "widget")
    module.diamond("mula.D", module.node("mula.E"), "a=2", ("b",))
    module.diamond("mula.C", module.node("mula.D"), "z=1", ("z",))
    module.split("mula.B", "b<=1", [(goal, "z>1", 1), (sink, "z<=1", 1)], "widget")
    module.split("mula.A", "b<=0", [(module.node("mula.B"), "", 1), (module.node("mula.C"), "", 1)], "mul-a")


def _mul_x(module: _Module, copy: int) -> None:
    goal, sink = module.builder.goal(), module.builder.sink()
    clocks = _rem_clocks(module, copy)
    w, v = clocks["w"], clocks["v"]
    prefix = f"mulx{copy}"
    module.split(f"{prefix}.E", "b<=1", [(goal, f"{w}>=1", 1), (sink, f"{w}<1", 1)], "widget", clocks)
    module.split(f"{prefix}.H", "b<=0", [(sink, "", REM_FACTOR - 1), (module.node(f"{prefix}.E"), "", 1)], "widget")
    module.split(f"{prefix}.C", "z<=1", [(goal, f"{v}<=2", 1), (sink, f"{v}>2", 1)], "widget", clocks)
    module.diamond(f"{prefix}.B", module.node(f"{prefix}.C"), "z=1", ("z",))
    module.split(
        f"{prefix}.A", "b<=0", [(module.node(f"{prefix}.B"), "", 1), (module.node(f"{prefix}.H"), "", 1)], "mul-x", clocks
    )


def _factor_check(module: _Module, prefix: str, v: str, factor: int) -> str:
    """Checks that the last loop multiplied `v` by `factor`; the x3 check keeps the drawn sink branch."""
    goal, sink = module.builder.goal(), module.builder.sink()
    clocks = {"v": v}
    module.split(f"{prefix}.R", "b<=1", [(goal, "a<=1", 1), (sink, "a>1", 1)], "widget", clocks)
    module.diamond(f"{prefix}.Q", module.node(f"{prefix}.R"), f"{v}=2", ("b",), clocks=clocks)
    module.diamond(f"{prefix}.P", module.node(f"{prefix}.Q"), "a=1", ("a",), clocks=clocks)
    module.split(f"{prefix}.L", "b<=1", [(goal, "a<=1", 1), (sink, "a>1", 1)], "widget", clocks)
    first = module.node(f"{prefix}.L")
    if factor == 3:
        first = module.split(f"{prefix}.K", "b<=0", [(first, "", 1), (sink, "", 1)], "widget", clocks)
    return module.split(
        f"{prefix}.J", "b<=0", [(first, "", 1), (module.node(f"{prefix}.P"), "", 1)], "wid.check", clocks, factor
    )


def _loop_block(module: _Module, prefix: str, v: str, factor: int, kinds: tuple[str, str, str], on_one: str, on_less: str) -> str:
    """Diamond multiplies `v` by `factor` while Box may check each round, then stops at v <= 1."""
    builder = module.builder
    sink = builder.sink()
    entry_kind, loop_kind, stop_kind = kinds
    clocks = {"v": v}
    entry = module.node(f"{prefix}.A")
    builder.location(entry, Owner.DIAMOND, role=module.role(entry_kind, clocks, factor), comment=f"multiply {v} by {factor}")
    loop = module.node(f"{prefix}.B")
    stop = module.node(f"{prefix}.E")
    builder.edge(entry, loop, f"{v}<=1", ("b",), role="exit")
    builder.edge(entry, stop, f"{v}<=1", ("b",), role="stop")
    builder.edge(entry, sink, f"{v}>1")
    builder.location(loop, Owner.BOX, "b<=0", module.role(loop_kind, clocks, factor))
    builder.edge(loop, entry, resets=("a",), role="loop")
    builder.edge(loop, _factor_check(module, f"{prefix}.chk", v, factor), role="check")
    builder.location(stop, Owner.BOX, "b<=0", module.role(stop_kind, clocks, factor))
    builder.edge(stop, on_one, f"{v}=1", role="continue")
    builder.edge(stop, on_less, f"{v}<1", ("a",), role="continue")
    return entry


def _wid(module: _Module, guess: str, copy: int, v: str) -> str:
    """Wid block of a zero check: strips the other counter's prime, then tests the value against 1."""
    goal, sink = module.builder.goal(), module.builder.sink()
    strip, finish = wid_factors(module.base.counter)
    prefix = f"wid-{guess}{copy}"
    halve = [(goal, "", 1), (sink, "", 1)]
    if guess == "zero":
        win = module.split(f"{prefix}.G", "b<=0", halve, "widget")
        return _loop_block(module, f"{prefix}.strip", v, strip, ("wid.strip", "wid.loopbox", "wid.stopbox"), win, sink)
    filled = module.split(f"{prefix}.H", "b<=0", halve, "widget")
    fill = _loop_block(
        module, f"{prefix}.fill", v, finish, ("wid.finish", "wid.finishbox", "wid.finishstop"), filled, sink
    )
    return _loop_block(module, f"{prefix}.strip", v, strip, ("wid.strip", "wid.loopbox", "wid.stopbox"), sink, fill)


def _halt(builder: GameBuilder, instruction: Halt, parity: int) -> None:
    name = module_name(instruction.label, parity)
    role = NodeRole("tb.halt", instruction.label, "halt", "", parity)
    builder.stochastic_split(name, "b<=0", [(builder.goal(), "", 1), (builder.sink(), "", 1)], role)


def compile_timebounded(machine: TwoCounterMachine) -> CompiledGame:
    builder = GameBuilder(
        "tcm-timebounded", CLOCKS, f"two-counter machine reduction with Box checks, bounded by {TIME_BOUND} time units"
    )
    builder.goal()
    builder.sink()
    for instruction in machine.instructions:
        for parity in (0, 1):
            builder.entries[(instruction.label, parity)] = module_name(instruction.label, parity)
            if isinstance(instruction, Halt):
                _halt(builder, instruction, parity)
                continue
            module = _Module(builder, instruction, parity)
            if isinstance(instruction, (Inc, Dec)):
                _step(module, instruction.next)
            else:
                _zero_check(module)
    valuation = {"x1": Fraction(1), "x2": Fraction(0), "z": Fraction(0), "a": Fraction(0), "b": Fraction(0)}
    return builder.build(machine, "timebounded", module_name(machine.initial, 0), valuation)
