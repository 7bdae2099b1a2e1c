"""Shipped predicate programs and their reference evaluators.

Every library program is total (defined for all inputs including zero),
deterministic (INC branches coincide), P1-safe given one unit of headroom
per register it touches, and normalized (absorbing accept sentinel last).

Zero tests use the INC/DEC idiom: incrementing before the decrement makes
the decrement safe and branches on the original value, at the cost of one
unit of headroom.  Rejection enters a two-instruction loop bouncing a
scratch register between 0 and 1, so rejecting runs never accept and
never violate P1.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Dict, Mapping, Sequence

from .countermachine import CMProgram, CMVerdict, check_p1, cm_decides, parse_program

__all__ = ["PredicateEntry", "LIBRARY", "BAD_DEC", "NONDET_DEMO", "library_selftest"]


@dataclass(frozen=True)
class PredicateEntry:
    name: str
    source: str
    reference: Callable[[Mapping[str, int]], bool]
    alphabet: tuple  # input symbols in register order (last one is padding)
    headroom: int  # extra capacity needed per register for zero tests
    deterministic: bool = True

    @property
    def program(self) -> CMProgram:
        return parse_program(self.source)


# x even?  Registers: r1=x, r2=pad, r3..r5 scratch.  Instruction 7 accepts.
_EVEN = """\
registers: 5 inputs: 2
1: INC r1 -> 2 | 2        # make the zero test on x safe
2: DEC r1 ? z:7 nz:3      # x was 0: even, accept
3: DEC r1 ? z:5 nz:4      # strip one; x was 1: odd, reject
4: DEC r1 ? z:7 nz:3      # strip the pair; x was 2: even, accept
5: INC r3 -> 6 | 6        # reject loop
6: DEC r3 ? z:5 nz:5
7: INC r5 -> 7 | 7        # accept sentinel (never executed)
"""

# x >= y?  Registers: r1=x, r2=y, r3=pad, r4..r6 scratch.  Instruction 9 accepts.
_GEQ = """\
registers: 6 inputs: 3
1: INC r2 -> 2 | 2        # zero test on y
2: DEC r2 ? z:9 nz:3      # y exhausted: x >= y, accept
3: INC r1 -> 4 | 4        # zero test on x
4: DEC r1 ? z:7 nz:5      # x exhausted while y remains: reject
5: DEC r2 ? z:6 nz:6      # strip one from each and loop
6: DEC r1 ? z:1 nz:1
7: INC r4 -> 8 | 8        # reject loop
8: DEC r4 ? z:7 nz:7
9: INC r6 -> 9 | 9        # accept sentinel (never executed)
"""

# Deliberately P1-violating fixture: decrements r1 unconditionally.
BAD_DEC = """\
registers: 4 inputs: 1
1: DEC r1 ? z:2 nz:1
2: INC r4 -> 2 | 2
"""

# Nondeterministic fixture: the INC at instruction 1 genuinely branches.
# Accepts regardless of the choice taken (P2), used to exercise the
# two-outcome dispatch of Incr instructions.
NONDET_DEMO = """\
registers: 4 inputs: 1
1: INC r2 -> 2 | 3
2: DEC r2 ? z:4 nz:4
3: DEC r2 ? z:4 nz:4
4: INC r4 -> 4 | 4
"""


LIBRARY: Dict[str, PredicateEntry] = {
    "even": PredicateEntry(
        name="even",
        source=_EVEN,
        reference=lambda w: w.get("x", 0) % 2 == 0,
        alphabet=("x", "pad"),
        headroom=1,
    ),
    "geq": PredicateEntry(
        name="geq",
        source=_GEQ,
        reference=lambda w: w.get("x", 0) >= w.get("y", 0),
        alphabet=("x", "y", "pad"),
        headroom=1,
    ),
}


def library_selftest(max_value: int = 64, budget: int = 500_000) -> None:
    """Check cm_decides against each reference on the full input grid.

    Padding registers are ignored by the programs, so the grid ranges over
    the non-padding inputs only.  Raises AssertionError on any mismatch
    and CMFault if a program is not P1-safe at the grid bounds.
    """
    for entry in LIBRARY.values():
        program = entry.program
        bounds = [max_value + entry.headroom] * program.n_registers
        check_p1(program, bounds, input_max=2)
        n_args = len(entry.alphabet) - 1  # padding register stays 0
        grid = [()]
        for _ in range(n_args):
            grid = [g + (v,) for g in grid for v in range(max_value + 1)]
        for args in grid:
            inputs = list(args) + [0] * (program.n_inputs - n_args)
            got = cm_decides(program, inputs, bounds, budget=budget)
            want = entry.reference(dict(zip(entry.alphabet, inputs)))
            assert got is (CMVerdict.ACCEPT if want else CMVerdict.REJECT), (
                entry.name, args, got,
            )
