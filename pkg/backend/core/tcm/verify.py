"""Empirical checks of the compiled games against the machine and the gadget laws."""

import logging
from collections.abc import Callable
from dataclasses import dataclass, field
from fractions import Fraction

from core.config import DEFAULT_CONFIDENCE
from core.errors import InternalConsistencyError, PreconditionError, SemanticsError
from core.model import Owner, State, Valuation, enabled_interval
from core.semantics import ReachEstimate, Run, RunStep, SimulationLimits, estimate_reach, step
from core.strategies import Profile, Strategy
from core.tcm.builder import CompiledGame, NodeRole
from core.tcm.faithful import WIDGETS, AlwaysContinue, CheckAt, current_step, faithful_strategies
from core.tcm.laws import gadget_law
from core.tcm.machine import Configuration, MachineRun, TwoCounterMachine, run_tcm
from core.tcm.onehalf import compile_onehalf, counter_clocks
from core.tcm.timebounded import CHECK_WEIGHTS, TIME_BOUND, compile_timebounded, module_name, parity_clocks

logger = logging.getLogger(__name__)

VARIANTS = ("onehalf", "timebounded")
REPLAY_LIMIT = 100_000


def compile_machine(machine: TwoCounterMachine, variant: str, max_steps: int = 1000) -> CompiledGame:
    """Compiles `machine` after running it for up to `max_steps` steps.

    A program that decrements a zero counter raises SemanticsError here, before
    any game is built.
    """
    if variant not in VARIANTS:
        raise PreconditionError(f"unknown variant {variant!r}; choose onehalf or timebounded")
    run_tcm(machine, max_steps)
    if variant == "onehalf":
        return compile_onehalf(machine)
    return compile_timebounded(machine)


def _configuration(machine_run: MachineRun, step: int) -> Configuration:
    if not 1 <= step <= len(machine_run.configurations):
        raise PreconditionError(f"step {step} is outside the machine run (1..{len(machine_run.configurations)})")
    return machine_run.configurations[step - 1]


def module_entry_valuation(
    machine: TwoCounterMachine, variant: str, step: int, machine_run: MachineRun | None = None
) -> State:
    """Exact state on entering the module of instruction `step` (1-based) of a faithful simulation."""
    machine_run = machine_run or run_tcm(machine, max(step, 1))
    config = _configuration(machine_run, step)
    if variant == "onehalf":
        values = {
            "x1": Fraction(1, 2**config.c1),
            "x2": Fraction(1, 2**config.c2),
            "x3": Fraction(0),
            "x4": Fraction(0),
        }
        return State(config.label, Valuation(values))
    if variant != "timebounded":
        raise PreconditionError(f"unknown variant {variant!r}")
    k = step - 1
    source, dest = parity_clocks(k % 2)
    values = {
        source: Fraction(1, 2 ** (k + config.c1) * 3 ** (k + config.c2)),
        dest: Fraction(0),
        "z": 1 - Fraction(1, 2**k),
        "a": Fraction(0),
        "b": Fraction(0),
    }
    return State(module_name(config.label, k % 2), Valuation(values))


def replay(
    game: CompiledGame,
    profile: Profile,
    origin: State,
    until: Callable[[Run], bool],
    prefer: str = "continue",
    max_steps: int = REPLAY_LIMIT,
) -> Run:
    """Exact run under `profile` where every stochastic node takes its zero-delay `prefer` edge.

    Stops when `until` holds, at a target, or at a stochastic node without
    such an edge.
    """
    stg = game.stg
    run = Run(origin)
    for _ in range(max_steps):
        if until(run):
            return run
        state = run.state
        if stg.is_target(state.location):
            return run
        owner = stg.owner(state.location)
        if owner is Owner.STOCHASTIC:
            edges = [
                edge
                for edge in game.edges_with_role(state.location, prefer)
                if enabled_interval(stg, state, edge).contains(Fraction(0))
            ]
            if not edges:
                return run
            delay, edge_id = Fraction(0), edges[0].id
        else:
            move = profile.for_owner(owner).decide(stg, run)
            delay, edge_id = move.delay, move.edge
        run.append(RunStep(delay, edge_id, step(stg, state, delay, edge_id)))
    raise SemanticsError(f"replay did not finish within {max_steps} steps")


@dataclass(frozen=True)
class EntryCheck:
    step: int
    location: str
    expected: Valuation
    actual: Valuation

    @property
    def ok(self) -> bool:
        return self.expected == self.actual

    def to_json(self) -> dict:
        return {
            "step": self.step,
            "location": self.location,
            "expected": self.expected.to_json(),
            "actual": self.actual.to_json(),
            "ok": self.ok,
        }


def check_module_entries(game: CompiledGame, max_steps: int = 50) -> list[EntryCheck]:
    """Replays the faithful simulation and compares every module entry with its encoding."""
    machine_run = run_tcm(game.machine, max_steps)
    profile = faithful_strategies(game, machine_run=machine_run)
    origin = game.stg.initial_state()
    last = len(machine_run.configurations)
    run = replay(game, profile, origin, lambda run: current_step(game, run) >= last)
    entries = [origin] + [
        item.state
        for item in run.steps
        if item.state.location in game.entry_locations and not game.stg.edge(item.edge).is_self_loop
    ]
    checks = []
    for index, state in enumerate(entries, start=1):
        expected = module_entry_valuation(game.machine, game.variant, index, machine_run)
        if expected.location != state.location:
            raise InternalConsistencyError(f"step {index} entered {state.location}, expected {expected.location}")
        checks.append(EntryCheck(index, state.location, expected.valuation, state.valuation))
    return checks


ParameterFn = Callable[[State, NodeRole, Configuration, int], dict[str, Fraction]]


@dataclass(frozen=True)
class GadgetSpec:
    name: str
    step_kinds: tuple[str, ...]
    entry_kinds: tuple[str, ...]
    parameters: ParameterFn
    widget: str | None = None
    factor: int = 0
    laws: dict[str, str] = field(default_factory=dict)
    reference: str | None = None

    def law_for(self, step_kind: str) -> str:
        return self.laws.get(step_kind, self.name)

    def is_entry(self, game: CompiledGame, location: str) -> bool:
        role = game.role(location)
        if role is None or role.kind not in self.entry_kinds:
            return False
        return not self.factor or role.factor == self.factor


def _getprob_parameters(state: State, role: NodeRole, config: Configuration, step: int) -> dict[str, Fraction]:
    own, other = counter_clocks(role.counter)
    value = config.counter(role.counter)
    if role.step_kind == "inc":
        return {"eps": state.valuation[own] - Fraction(1, 2 ** (value + 1)), "c": Fraction(value)}
    return {"eps": Fraction(1, 2**value) - state.valuation[other], "c": Fraction(value)}


def _no_parameters(state, role, config, step) -> dict[str, Fraction]:
    return {}


def _check_z(state: State, role: NodeRole, config: Configuration, step: int) -> dict[str, Fraction]:
    return {"t": state.valuation["a"], "k": Fraction(step - 1)}


def _check_x(state: State, role: NodeRole, config: Configuration, step: int) -> dict[str, Fraction]:
    values = state.valuation
    return {
        "t2": values[role.clocks["d"]],
        "n": values[role.clocks["s"]] - values["a"],
        "w": Fraction(CHECK_WEIGHTS[(role.step_kind, role.counter)]),
    }


def _mul_a(state: State, role: NodeRole, config: Configuration, step: int) -> dict[str, Fraction]:
    return {"t": state.valuation["z"], "k": Fraction(step - 1)}


def _mul_x(state: State, role: NodeRole, config: Configuration, step: int) -> dict[str, Fraction]:
    values = state.valuation
    return {"t2": values[role.clocks["w"]], "n": values[role.clocks["v"]] - values["z"]}


def _wid(state: State, role: NodeRole, config: Configuration, step: int) -> dict[str, Fraction]:
    values = state.valuation
    return {"t": values["a"], "m": values[role.clocks["v"]] - values["a"]}


_SIMULATING = ("inc", "dec", "jz")

GADGETS: dict[str, dict[str, GadgetSpec]] = {
    "onehalf": {
        "getprob": GadgetSpec(
            "getprob",
            ("inc", "dec"),
            ("getprob.E0",),
            _getprob_parameters,
            laws={"inc": "getprob-inc", "dec": "getprob-dec-compiled"},
        ),
        "getprob-inc": GadgetSpec("getprob-inc", ("inc",), ("getprob.E0",), _getprob_parameters),
        "getprob-dec": GadgetSpec(
            "getprob-dec",
            ("dec",),
            ("getprob.E0",),
            _getprob_parameters,
            laws={"dec": "getprob-dec-compiled"},
            reference="getprob-dec",
        ),
        "zero-test": GadgetSpec("zero-test", ("jz",), ("zero.B1", "zero.B2"), _no_parameters),
    },
    "timebounded": {
        "check-z": GadgetSpec("check-z", _SIMULATING, ("check-z",), _check_z, widget="check-z"),
        "check-x": GadgetSpec("check-x", _SIMULATING, ("check-x",), _check_x, widget="check-x"),
        "mul-a": GadgetSpec("mul-a", ("jz",), ("mul-a",), _mul_a, widget="mul-a"),
        "mul-x": GadgetSpec("mul-x", ("jz",), ("mul-x",), _mul_x, widget="mul-x"),
        "wid-zero": GadgetSpec("wid-zero", ("jz",), ("wid.check",), _wid, widget="wid-zero", factor=3),
        "wid-double": GadgetSpec("wid-double", ("jz",), ("wid.check",), _wid, widget="wid-double", factor=2),
        "halt": GadgetSpec("halt", ("halt",), ("tb.halt",), _no_parameters),
    },
}


def gadget_names(variant: str) -> list[str]:
    if variant not in GADGETS:
        raise PreconditionError(f"unknown variant {variant!r}")
    return list(GADGETS[variant])


@dataclass(frozen=True)
class GadgetVerdict:
    gadget: str
    law: str
    variant: str
    step: int
    epsilon: Fraction
    parameters: dict[str, Fraction]
    law_value: Fraction
    estimate: ReachEstimate
    reference_law: str | None = None
    reference_value: Fraction | None = None

    @property
    def passed(self) -> bool:
        return self.estimate.within_sigmas(float(self.law_value), 3.0)

    @property
    def deviation(self) -> str | None:
        """How the compiled law departs from the stated reference law, if one is recorded."""
        if self.reference_law is None:
            return None
        realised, stated = gadget_law(self.law), gadget_law(self.reference_law)
        if self.reference_value == self.law_value:
            outcome = f"both give {self.law_value} here"
        else:
            outcome = f"giving {self.reference_value} instead of {self.law_value}"
        return (
            f"the compiled gadget realises {realised.formula} ({self.law}); the stated law {self.reference_law}"
            f" is {stated.formula}, {outcome}"
        )

    def to_json(self) -> dict:
        document = {
            "gadget": self.gadget,
            "law": self.law,
            "variant": self.variant,
            "step": self.step,
            "epsilon": str(self.epsilon),
            "parameters": {name: str(value) for name, value in self.parameters.items()},
            "law_value": str(self.law_value),
            "law_float": float(self.law_value),
            "estimate": self.estimate.to_json(),
            "passed": self.passed,
        }
        if self.reference_law is not None:
            document["reference"] = {
                "law": self.reference_law,
                "formula": gadget_law(self.reference_law).formula,
                "value": str(self.reference_value),
                "note": self.deviation,
            }
        return document


def _candidate_steps(game: CompiledGame, spec: GadgetSpec, machine_run: MachineRun) -> list[int]:
    steps = []
    for index, config in enumerate(machine_run.configurations, start=1):
        kind = game.machine.instruction(config.label).kind
        if kind in spec.step_kinds and (kind == "halt" or index <= machine_run.steps):
            steps.append(index)
    return steps


def _gadget_entry(game: CompiledGame, spec: GadgetSpec, profile: Profile, origin: State) -> State | None:
    run = replay(game, profile, origin, lambda run: spec.is_entry(game, run.state.location), prefer="gadget")
    return run.state if spec.is_entry(game, run.state.location) else None


def verify_gadget(
    machine: TwoCounterMachine,
    variant: str,
    gadget: str,
    epsilon: Fraction = Fraction(0),
    samples: int = 10_000,
    seed: int = 0,
    confidence: float = DEFAULT_CONFIDENCE,
    workers: int = 1,
    step: int | None = None,
    max_steps: int = 1000,
) -> GadgetVerdict:
    """Estimates the target probability from the gadget's entry state and compares it with its law.

    The run starts at the exact module entry of the first step (or `step`)
    whose faithful simulation, perturbed by `epsilon` at that step, reaches
    the gadget.
    """
    game = compile_machine(machine, variant, max_steps)
    if gadget not in GADGETS[variant]:
        raise PreconditionError(f"no gadget {gadget!r} in the {variant} game; known: {', '.join(GADGETS[variant])}")
    spec = GADGETS[variant][gadget]
    machine_run = run_tcm(machine, max_steps)
    candidates = [step] if step is not None else _candidate_steps(game, spec, machine_run)
    for index in candidates:
        config = _configuration(machine_run, index)
        perturbation = (index, epsilon) if epsilon else None

        def make_profile(index=index, perturbation=perturbation) -> Profile:
            box = CheckAt(game, index, spec.widget, index) if spec.widget else AlwaysContinue(game, index)
            return faithful_strategies(game, perturbation, box, index, machine_run)

        origin = module_entry_valuation(machine, variant, index, machine_run)
        entry = _gadget_entry(game, spec, make_profile(), origin)
        if entry is None:
            logger.debug("Step %d does not reach gadget %s", index, gadget)
            continue
        role = game.role(entry.location)
        law = gadget_law(spec.law_for(role.step_kind))
        parameters = spec.parameters(entry, role, config, index)
        law_value = law.evaluate(**parameters)
        reference_law = reference_value = None
        if spec.reference is not None:
            reference_law = spec.reference
            reference_value = gadget_law(spec.reference).evaluate(**parameters)
        limits = SimulationLimits(stop_locations=game.entry_locations)
        estimate = estimate_reach(game.stg, make_profile, samples, seed, confidence, limits, entry, workers)
        verdict = GadgetVerdict(
            gadget, law.name, variant, index, epsilon, parameters, law_value, estimate, reference_law, reference_value
        )
        logger.info(
            "Gadget %s at step %d: law %s = %.6f, estimate %.6f, %s",
            gadget,
            index,
            law.name,
            float(law_value),
            estimate.point,
            "pass" if verdict.passed else "FAIL",
        )
        return verdict
    raise PreconditionError(f"the faithful simulation never enters gadget {gadget} of the {variant} game")


def halting_sum(machine: TwoCounterMachine, variant: str, max_steps: int = 1000) -> Fraction:
    """Exact target probability of the faithful simulation with Box never checking.

    In the 1½-player game step i is reached with probability (1/2)^(i-1) and
    then hits the target either through its GetProb gadget or its zero-test
    coin; the time-bounded game only hits through the halt gadget.
    """
    machine_run = run_tcm(machine, max_steps)
    if variant == "timebounded":
        return gadget_law("halt").evaluate() if machine_run.halted else Fraction(0)
    if variant != "onehalf":
        raise PreconditionError(f"unknown variant {variant!r}")
    total = Fraction(0)
    reach = Fraction(1)
    coin = Fraction(1, 2)
    for config in machine_run.configurations[: machine_run.steps]:
        instruction = machine.instruction(config.label)
        if instruction.kind == "inc":
            hit = coin * gadget_law("getprob-inc").evaluate(eps=0, c=config.counter(instruction.counter))
        elif instruction.kind == "dec":
            hit = coin * gadget_law("getprob-dec-compiled").evaluate(eps=0, c=config.counter(instruction.counter))
        else:
            hit = gadget_law("zero-test").evaluate()
        total += reach * hit
        reach *= coin
    return total


@dataclass(frozen=True)
class HaltingVerdict:
    variant: str
    expected: Fraction
    estimate: ReachEstimate

    @property
    def passed(self) -> bool:
        return self.estimate.within_sigmas(float(self.expected), 3.0)

    def to_json(self) -> dict:
        return {
            "check": "halting-sum",
            "variant": self.variant,
            "expected": str(self.expected),
            "expected_float": float(self.expected),
            "estimate": self.estimate.to_json(),
            "passed": self.passed,
        }


def verify_halting_sum(
    machine: TwoCounterMachine,
    variant: str,
    samples: int = 10_000,
    seed: int = 0,
    confidence: float = DEFAULT_CONFIDENCE,
    workers: int = 1,
    max_steps: int = 1000,
) -> HaltingVerdict:
    """Target-hit estimate of the whole game under the faithful Diamond and a Box that never checks."""
    game = compile_machine(machine, variant, max_steps)
    machine_run = run_tcm(machine, max_steps)
    expected = halting_sum(machine, variant, max_steps)

    def make_profile() -> Profile:
        return faithful_strategies(game, machine_run=machine_run)

    estimate = estimate_reach(game.stg, make_profile, samples, seed, confidence, workers=workers)
    verdict = HaltingVerdict(variant, expected, estimate)
    logger.info("Halting sum %s: expected %.6f, estimate %.6f", variant, float(expected), estimate.point)
    return verdict


@dataclass(frozen=True)
class TimeBoundCheck:
    policy: str
    runs: int
    max_elapsed: float
    outcomes: dict[str, int]

    @property
    def passed(self) -> bool:
        failed = self.outcomes.get("blocked", 0) + self.outcomes.get("limit_reached", 0)
        return self.max_elapsed < float(TIME_BOUND) and not failed

    def to_json(self) -> dict:
        return {
            "policy": self.policy,
            "runs": self.runs,
            "max_elapsed": self.max_elapsed,
            "outcomes": dict(sorted(self.outcomes.items())),
            "passed": self.passed,
        }


def box_policies(game: CompiledGame, machine_run: MachineRun) -> dict[str, Callable[[], Strategy]]:
    """AlwaysContinue plus one CheckAt policy per executed step and widget."""
    policies: dict[str, Callable[[], Strategy]] = {"always-continue": lambda: AlwaysContinue(game)}
    for index in range(1, machine_run.steps + 1):
        for widget in WIDGETS:
            policies[f"check-at:{index}:{widget}"] = lambda index=index, widget=widget: CheckAt(game, index, widget)
    return policies


def check_time_bound(
    machine: TwoCounterMachine,
    samples: int = 10_000,
    seed: int = 0,
    workers: int = 1,
    max_steps: int = 1000,
) -> list[TimeBoundCheck]:
    """Samples the time-bounded game under every Box policy and records the longest run."""
    game = compile_machine(machine, "timebounded", max_steps)
    machine_run = run_tcm(machine, max_steps)
    checks = []
    for offset, (name, make_box) in enumerate(box_policies(game, machine_run).items()):

        def make_profile(make_box=make_box) -> Profile:
            return faithful_strategies(game, box=make_box(), machine_run=machine_run)

        estimate = estimate_reach(game.stg, make_profile, samples, seed + offset, workers=workers)
        check = TimeBoundCheck(name, samples, estimate.max_elapsed, estimate.outcomes)
        logger.info("Time bound under %s: longest run %.6f", name, check.max_elapsed)
        checks.append(check)
    return checks
