"""popbench: build, simulate, and verify space-bounded population protocols.

The package compiles bounded counter-machine programs into population
protocols over (level, flag-set) states, runs them under a seeded random
scheduler to stable consensus, and decides small instances exactly with a
reachability-based model checker.
"""

from .states import State, state, parse_state, config_text, parse_config
from .patterns import TransitionTemplate, StatePattern, RightSide
from .protocol import (
    Protocol, enabled_outcomes, step, initial_config, output_consensus, val,
    binary_counter_example, majority_fixture,
)
from .countermachine import (
    CMProgram, CMConfig, CMVerdict, CMFault, Instruction,
    parse_program, format_program, normalize, cm_step, cm_decides,
)
from .construction import (
    FSpec, DigitLayout, BuiltProtocol, build_protocol, layout,
    population_layout, capacity_check, digit_value, register_value,
    checkpoint_registers, is_initialised, is_cleaned,
)
from .scheduler import RunPolicy, Verdict, Trace, random_step, run, replay
from .checker import (
    ReachGraph, StabilityReport, Truncated,
    reachable_set, classify_stability, decide, state_complexity,
)
from .programs import LIBRARY, PredicateEntry, library_selftest

__version__ = "0.1.0"
