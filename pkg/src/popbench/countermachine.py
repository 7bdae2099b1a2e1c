"""Bounded nondeterministic counter machines: the simulation oracle.

Instructions are ``(op, register, s0, s1)``.  ``INC`` increments its
register and moves nondeterministically to ``s0`` or ``s1``.  ``DEC``
decrements and branches on the *resulting* value: ``s0`` when it is zero,
``s1`` otherwise.  (The zero branch is listed first both here and in the
text format, matching the order in which the generated protocol resolves
the two cases.)

Machines must respect three behavioural assumptions:

* P1 -- no increment beyond a register's bound, no decrement of an empty
  register; violations raise :class:`CMFault` loudly, because the protocol
  construction silently corrupts neighbouring registers otherwise.
* P2 -- acceptance must not depend on nondeterministic choices (the
  shipped predicate programs are deterministic).
* P3 -- the final instruction is an absorbing accept.  Reaching index
  ``l`` accepts; the sentinel instruction stored there is never executed.

Text format (bit-exact round trip)::

    registers: 5 inputs: 2
    # comment
    1: INC r1 -> 2 | 2
    2: DEC r1 ? z:7 nz:3
"""

from __future__ import annotations

import re
from dataclasses import dataclass, replace
from enum import Enum
from random import Random
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

__all__ = [
    "Instruction", "CMProgram", "CMConfig", "CMVerdict",
    "CMFault", "CMParseError",
    "parse_program", "format_program", "normalize", "is_normalized",
    "cm_step", "cm_successors", "cm_decides", "check_p1", "with_restart",
]

INC, DEC = "INC", "DEC"


class CMFault(Exception):
    """P1 violation: overflow/underflow, or execution of the sentinel."""


class CMParseError(ValueError):
    def __init__(self, errors: List[str]):
        super().__init__("; ".join(errors))
        self.errors = errors


class CMVerdict(Enum):
    ACCEPT = "accept"
    REJECT = "reject"
    UNDETERMINED = "undetermined"


@dataclass(frozen=True)
class Instruction:
    op: str  # INC or DEC
    reg: int  # 1-based
    s0: int  # INC: first choice; DEC: zero branch
    s1: int  # INC: second choice; DEC: nonzero branch


@dataclass(frozen=True)
class CMProgram:
    n_inputs: int
    n_registers: int  # always n_inputs + 3
    instructions: Tuple[Instruction, ...]
    restartable: bool = False  # experimental, see with_restart

    @property
    def length(self) -> int:
        return len(self.instructions)

    @property
    def accept_ip(self) -> int:
        return len(self.instructions)


@dataclass(frozen=True)
class CMConfig:
    ip: int
    regs: Tuple[int, ...]


_HEADER = re.compile(r"^registers:\s*(\d+)\s+inputs:\s*(\d+)\s*$")
_INC = re.compile(r"^(\d+):\s*INC\s+r(\d+)\s*->\s*(\d+)\s*\|\s*(\d+)\s*$")
_DEC = re.compile(
    r"^(\d+):\s*DEC\s+r(\d+)\s*\?\s*(z|nz):(\d+)\s+(z|nz):(\d+)\s*$"
)


def parse_program(text: str) -> CMProgram:
    errors: List[str] = []
    header: Optional[Tuple[int, int]] = None
    lines: List[Tuple[int, int, Instruction]] = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if header is None:
            m = _HEADER.match(line)
            if m is None:
                errors.append("line %d: expected 'registers: <G> inputs: <k>' header" % lineno)
                header = (0, 0)
            else:
                header = (int(m.group(1)), int(m.group(2)))
                if header[0] != header[1] + 3:
                    errors.append(
                        "line %d: register count %d must be inputs+3 = %d"
                        % (lineno, header[0], header[1] + 3)
                    )
            continue
        m = _INC.match(line)
        if m:
            idx, reg, s0, s1 = (int(g) for g in m.groups())
            lines.append((lineno, idx, Instruction(INC, reg, s0, s1)))
            continue
        m = _DEC.match(line)
        if m:
            idx, reg = int(m.group(1)), int(m.group(2))
            labels = {m.group(3): int(m.group(4)), m.group(5): int(m.group(6))}
            if set(labels) != {"z", "nz"}:
                errors.append("line %d: need one z: and one nz: target" % lineno)
                continue
            lines.append((lineno, idx, Instruction(DEC, reg, labels["z"], labels["nz"])))
            continue
        errors.append("line %d: unrecognised instruction %r" % (lineno, line))
    if header is None:
        errors.append("missing header")
        raise CMParseError(errors)
    n_regs, n_inputs = header
    instructions: List[Optional[Instruction]] = [None] * len(lines)
    for lineno, idx, ins in lines:
        if not 1 <= idx <= len(lines):
            errors.append("line %d: instruction index %d out of range" % (lineno, idx))
            continue
        if instructions[idx - 1] is not None:
            errors.append("line %d: duplicate instruction index %d" % (lineno, idx))
            continue
        instructions[idx - 1] = ins
        if not 1 <= ins.reg <= n_regs:
            errors.append("line %d: register r%d out of range 1..%d" % (lineno, ins.reg, n_regs))
        for target in (ins.s0, ins.s1):
            if not 1 <= target <= len(lines):
                errors.append("line %d: dangling instruction index %d" % (lineno, target))
    if any(i is None for i in instructions):
        errors.append("instruction indices must cover 1..%d" % len(lines))
    if errors:
        raise CMParseError(errors)
    return CMProgram(n_inputs=n_inputs, n_registers=n_regs,
                     instructions=tuple(instructions))  # type: ignore[arg-type]


def format_program(program: CMProgram) -> str:
    out = ["registers: %d inputs: %d" % (program.n_registers, program.n_inputs)]
    for idx, ins in enumerate(program.instructions, 1):
        if ins.op == INC:
            out.append("%d: INC r%d -> %d | %d" % (idx, ins.reg, ins.s0, ins.s1))
        else:
            out.append("%d: DEC r%d ? z:%d nz:%d" % (idx, ins.reg, ins.s0, ins.s1))
    return "\n".join(out) + "\n"


def is_normalized(program: CMProgram) -> bool:
    if not program.instructions:
        return False
    last = program.instructions[-1]
    n = program.length
    return last.s0 == n and last.s1 == n


def normalize(program: CMProgram) -> CMProgram:
    """Rewrite the final instruction into a self-looping accept sentinel.

    Reaching the final index means acceptance and the sentinel never
    executes, so its register choice (last scratch register) is formal.
    Idempotent.
    """
    if not program.instructions:
        raise ValueError("empty program")
    if is_normalized(program):
        return program
    sentinel = Instruction(INC, program.n_registers, program.length, program.length)
    return replace(program, instructions=program.instructions[:-1] + (sentinel,))


def with_restart(program: CMProgram) -> CMProgram:
    """Mark a program as nondeterministically restartable (experimental).

    The interpreter then treats "reset to the initial configuration" as an
    extra edge from every non-accepting state.  Only sensible for programs
    whose acceptance is choice-independent; shipped programs do not need it.
    """
    return replace(program, restartable=True)


def cm_step(program: CMProgram, config: CMConfig, choice: int,
            bounds: Sequence[int]) -> CMConfig:
    """Execute one instruction.  ``choice`` selects the INC branch."""
    ip = config.ip
    if ip == program.accept_ip:
        raise CMFault("instruction %d is the accepting sentinel" % ip)
    if not 1 <= ip <= program.length:
        raise ValueError("instruction pointer %d out of range" % ip)
    ins = program.instructions[ip - 1]
    r = ins.reg - 1
    regs = list(config.regs)
    if ins.op == INC:
        if regs[r] >= bounds[r]:
            raise CMFault(
                "instruction %d: increment of r%d beyond bound %d"
                % (ip, ins.reg, bounds[r])
            )
        regs[r] += 1
        target = ins.s1 if choice else ins.s0
    else:
        if regs[r] == 0:
            raise CMFault("instruction %d: decrement of empty r%d" % (ip, ins.reg))
        regs[r] -= 1
        target = ins.s0 if regs[r] == 0 else ins.s1
    return CMConfig(ip=target, regs=tuple(regs))


def cm_successors(program: CMProgram, config: CMConfig,
                  bounds: Sequence[int]) -> List[CMConfig]:
    """All one-step successors (raises CMFault on a P1 violation)."""
    if config.ip == program.accept_ip:
        return []
    ins = program.instructions[config.ip - 1]
    if ins.op == INC and ins.s0 != ins.s1:
        return [cm_step(program, config, 0, bounds),
                cm_step(program, config, 1, bounds)]
    return [cm_step(program, config, 0, bounds)]


def _initial(program: CMProgram, inputs: Sequence[int]) -> CMConfig:
    regs = [0] * program.n_registers
    for i, v in enumerate(inputs):
        regs[i] = v
    return CMConfig(ip=1, regs=tuple(regs))


def cm_decides(program: CMProgram, inputs: Sequence[int],
               bounds: Sequence[int], budget: int = 200_000,
               rng: Optional[Random] = None,
               exhaustive: Optional[bool] = None) -> CMVerdict:
    """Decide by exhaustive reachability, or randomized walk past the budget.

    Accept iff the final instruction index is reachable.  The exhaustive
    search enumerates reachable (ip, registers) tuples breadth-first; when
    the budget is exhausted it falls back to seeded random execution, and
    returns UNDETERMINED if that is inconclusive too.  ``exhaustive``
    forces one of the two strategies (None picks automatically).
    """
    if len(inputs) != program.n_inputs:
        raise ValueError("expected %d inputs, got %d" % (program.n_inputs, len(inputs)))
    for i, v in enumerate(inputs):
        if v > bounds[i]:
            raise ValueError("input %d exceeds bound %d" % (v, bounds[i]))
    if exhaustive is False:
        return _randomized(program, inputs, bounds, budget, rng)
    init = _initial(program, inputs)
    seen = {init}
    frontier = [init]
    nodes = 0
    while frontier:
        nxt: List[CMConfig] = []
        for cfg in frontier:
            if cfg.ip == program.accept_ip:
                return CMVerdict.ACCEPT
            nodes += 1
            if nodes > budget:
                if exhaustive:
                    return CMVerdict.UNDETERMINED
                return _randomized(program, inputs, bounds, budget, rng)
            for succ in cm_successors(program, cfg, bounds):
                if succ not in seen:
                    seen.add(succ)
                    nxt.append(succ)
        frontier = nxt
    return CMVerdict.REJECT


def _randomized(program: CMProgram, inputs: Sequence[int],
                bounds: Sequence[int], budget: int,
                rng: Optional[Random]) -> CMVerdict:
    rng = rng or Random(0)
    cfg = _initial(program, inputs)
    seen = set()
    for _ in range(budget):
        if cfg.ip == program.accept_ip:
            return CMVerdict.ACCEPT
        if cfg in seen and not program.restartable:
            # Deterministic cycle: acceptance unreachable on this walk.
            det = all(i.op == DEC or i.s0 == i.s1 for i in program.instructions)
            if det:
                return CMVerdict.REJECT
        seen.add(cfg)
        cfg = cm_step(program, cfg, rng.getrandbits(1), bounds)
    return CMVerdict.UNDETERMINED


def instruction_path(program: CMProgram, inputs: Sequence[int],
                     bounds: Sequence[int], limit: int = 10_000) -> List[int]:
    """Instruction trace of the choice-0 run (for --trace diagnostics)."""
    cfg = _initial(program, inputs)
    path = [cfg.ip]
    for _ in range(limit):
        if cfg.ip == program.accept_ip:
            break
        cfg = cm_step(program, cfg, 0, bounds)
        path.append(cfg.ip)
        if len(path) >= limit:
            break
    return path


def check_p1(program: CMProgram, bounds: Sequence[int],
             input_max: int) -> bool:
    """Certify by exhaustive search that no run up to the given bounds
    violates P1, over all inputs with every register <= input_max."""
    def grids(k: int):
        if k == 0:
            yield ()
            return
        for rest in grids(k - 1):
            for v in range(input_max + 1):
                yield rest + (v,)

    for inputs in grids(program.n_inputs):
        init = _initial(program, inputs)
        seen = {init}
        frontier = [init]
        while frontier:
            nxt = []
            for cfg in frontier:
                if cfg.ip == program.accept_ip:
                    continue
                for succ in cm_successors(program, cfg, bounds):  # raises CMFault
                    if succ not in seen:
                        seen.add(succ)
                        nxt.append(succ)
            frontier = nxt
    return True
