"""Two-counter machine reductions to stochastic timed games."""

from core.tcm.builder import CompiledGame
from core.tcm.faithful import AlwaysContinue, CheckAt, FaithfulDiamond, faithful_strategies
from core.tcm.laws import GadgetLaw, gadget_law, gadget_laws
from core.tcm.machine import MachineRun, TwoCounterMachine, load_tcm, parse_tcm, run_tcm
from core.tcm.onehalf import compile_onehalf
from core.tcm.timebounded import TIME_BOUND, compile_timebounded
from core.tcm.verify import (
    VARIANTS,
    check_module_entries,
    check_time_bound,
    compile_machine,
    gadget_names,
    halting_sum,
    module_entry_valuation,
    verify_gadget,
    verify_halting_sum,
)

__all__ = [
    "AlwaysContinue",
    "CheckAt",
    "CompiledGame",
    "FaithfulDiamond",
    "GadgetLaw",
    "MachineRun",
    "TIME_BOUND",
    "TwoCounterMachine",
    "VARIANTS",
    "check_module_entries",
    "check_time_bound",
    "compile_machine",
    "compile_onehalf",
    "compile_timebounded",
    "faithful_strategies",
    "gadget_law",
    "gadget_laws",
    "gadget_names",
    "halting_sum",
    "load_tcm",
    "module_entry_valuation",
    "parse_tcm",
    "run_tcm",
    "verify_gadget",
    "verify_halting_sum",
]
