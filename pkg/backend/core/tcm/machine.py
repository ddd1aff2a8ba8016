"""Two-counter machines: program parser and interpreter."""

import logging
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Literal, Union

from core.errors import ModelError, SemanticsError, TcmSyntaxError

logger = logging.getLogger(__name__)

Counter = Literal["c1", "c2"]
COUNTERS: tuple[str, ...] = ("c1", "c2")
RESERVED_LABELS = frozenset({"goal", "sink"})

_LABEL = r"[A-Za-z_][A-Za-z0-9_]*"
_LINE_RE = re.compile(rf"^\s*({_LABEL})\s*:\s*(.*?)\s*$")
_STEP_RE = re.compile(rf"^(inc|dec)\s+(\w+)\s+goto\s+({_LABEL})$")
_JZ_RE = re.compile(rf"^jz\s+(\w+)\s+({_LABEL})\s+({_LABEL})$")


@dataclass(frozen=True)
class Inc:
    label: str
    counter: Counter
    next: str

    kind = "inc"


@dataclass(frozen=True)
class Dec:
    label: str
    counter: Counter
    next: str

    kind = "dec"


@dataclass(frozen=True)
class Jz:
    """Jump to `then` when the counter is zero, else to `otherwise`."""

    label: str
    counter: Counter
    then: str
    otherwise: str

    kind = "jz"


@dataclass(frozen=True)
class Halt:
    label: str

    kind = "halt"


Instruction = Union[Inc, Dec, Jz, Halt]


@dataclass(frozen=True)
class Configuration:
    label: str
    c1: int
    c2: int

    def counter(self, name: str) -> int:
        return self.c1 if name == "c1" else self.c2

    def to_json(self) -> dict:
        return {"label": self.label, "c1": self.c1, "c2": self.c2}


@dataclass(frozen=True)
class TwoCounterMachine:
    instructions: tuple[Instruction, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "_by_label", {instruction.label: instruction for instruction in self.instructions})

    @property
    def initial(self) -> str:
        return self.instructions[0].label

    @property
    def labels(self) -> list[str]:
        return [instruction.label for instruction in self.instructions]

    def instruction(self, label: str) -> Instruction:
        try:
            return self._by_label[label]
        except KeyError as exc:
            raise ModelError(f"unknown instruction label {label!r}") from exc

    def successors(self, instruction: Instruction) -> tuple[str, ...]:
        if isinstance(instruction, (Inc, Dec)):
            return (instruction.next,)
        if isinstance(instruction, Jz):
            return (instruction.then, instruction.otherwise)
        return ()

    def describe(self) -> str:
        lines = []
        for instruction in self.instructions:
            if isinstance(instruction, (Inc, Dec)):
                body = f"{instruction.kind} {instruction.counter} goto {instruction.next}"
            elif isinstance(instruction, Jz):
                body = f"jz {instruction.counter} {instruction.then} {instruction.otherwise}"
            else:
                body = "halt"
            lines.append(f"{instruction.label}: {body}")
        return "\n".join(lines) + "\n"


@dataclass
class MachineRun:
    configurations: list[Configuration] = field(default_factory=list)
    halted: bool = False

    @property
    def steps(self) -> int:
        """Executed instructions, halt excluded."""
        return len(self.configurations) - 1

    @property
    def final(self) -> Configuration:
        return self.configurations[-1]

    def to_json(self) -> dict:
        return {
            "halted": self.halted,
            "steps": self.steps,
            "final": self.final.to_json(),
            "configurations": [configuration.to_json() for configuration in self.configurations],
        }


def _counter(name: str, line: int) -> str:
    if name not in COUNTERS:
        raise TcmSyntaxError(f"unknown counter {name!r} (expected c1 or c2)", line)
    return name


def _parse_body(label: str, body: str, line: int) -> Instruction:
    if body == "halt":
        return Halt(label)
    match = _STEP_RE.match(body)
    if match:
        kind, counter, target = match.groups()
        cls = Inc if kind == "inc" else Dec
        return cls(label, _counter(counter, line), target)
    match = _JZ_RE.match(body)
    if match:
        counter, then, otherwise = match.groups()
        return Jz(label, _counter(counter, line), then, otherwise)
    raise TcmSyntaxError(f"cannot parse instruction {body!r}", line)


def parse_tcm(text: str) -> TwoCounterMachine:
    instructions: list[Instruction] = []
    declared: dict[str, int] = {}
    references: list[tuple[str, int]] = []
    for number, raw in enumerate(text.splitlines(), start=1):
        content = raw.split("#", 1)[0].strip()
        if not content:
            continue
        match = _LINE_RE.match(content)
        if not match:
            raise TcmSyntaxError(f"expected 'LABEL: instruction', got {content!r}", number)
        label, body = match.groups()
        if label in RESERVED_LABELS:
            raise TcmSyntaxError(f"label {label!r} is reserved", number)
        if label in declared:
            raise TcmSyntaxError(f"label {label!r} already defined on line {declared[label]}", number)
        declared[label] = number
        instruction = _parse_body(label, " ".join(body.split()), number)
        instructions.append(instruction)
        if isinstance(instruction, (Inc, Dec)):
            references.append((instruction.next, number))
        elif isinstance(instruction, Jz):
            references.extend([(instruction.then, number), (instruction.otherwise, number)])
    if not instructions:
        raise TcmSyntaxError("program has no instructions")
    for target, number in references:
        if target not in declared:
            raise TcmSyntaxError(f"undefined label {target!r}", number)
    halts = [instruction for instruction in instructions if isinstance(instruction, Halt)]
    if len(halts) != 1:
        raise TcmSyntaxError(f"program needs exactly one halt instruction, found {len(halts)}")
    machine = TwoCounterMachine(tuple(instructions))
    logger.info("Parsed two-counter machine with %d instructions", len(instructions))
    return machine


def load_tcm(path: str | Path) -> TwoCounterMachine:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ModelError(f"cannot read program file {path}: {exc}") from exc
    return parse_tcm(text)


def run_tcm(machine: TwoCounterMachine, max_steps: int = 1000) -> MachineRun:
    """The machine's unique run from (l0, 0, 0), cut after `max_steps` instructions."""
    current = Configuration(machine.initial, 0, 0)
    run = MachineRun([current])
    for _ in range(max_steps):
        instruction = machine.instruction(current.label)
        if isinstance(instruction, Halt):
            run.halted = True
            return run
        counters = {"c1": current.c1, "c2": current.c2}
        if isinstance(instruction, Inc):
            counters[instruction.counter] += 1
            label = instruction.next
        elif isinstance(instruction, Dec):
            if counters[instruction.counter] == 0:
                raise SemanticsError(f"{instruction.label}: decrement of {instruction.counter} at zero")
            counters[instruction.counter] -= 1
            label = instruction.next
        else:
            label = instruction.then if counters[instruction.counter] == 0 else instruction.otherwise
        current = Configuration(label, counters["c1"], counters["c2"])
        run.configurations.append(current)
    run.halted = isinstance(machine.instruction(current.label), Halt)
    if not run.halted:
        logger.info("Machine run truncated after %d steps at %s", max_steps, current.label)
    return run
