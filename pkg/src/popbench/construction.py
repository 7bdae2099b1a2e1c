"""Compilation of a counter-machine program into a population protocol.

States are (level, flag-set) pairs.  The generated template list covers
the families: counter, leader (initialisation), clear, swap, incr
(distributed-counter arithmetic), loop (iterate a body exactly n-1
times), reset, cleanup (re-initialisation and garbage collection), dist
(round-robin assignment of free agents to digits), detect (digit
full/empty probe), dig-incr / dig-decr (mixed-radix digit update with
carry/borrow), input (load input multiplicities into registers), cm-incr
/ cm-decr (instruction dispatch), output (accept broadcast), go (phase
start-up).

Level arithmetic inside templates only ever uses levels bound from the
interacting agents, so one fixed template list works for every population
size: the leader's level carries floor(log n), and the digit count and
register bases are derived from it on the fly.

Helper-facing patterns carry explicit leader/counter/T exclusions beyond
the constraints strictly needed to drive the protocol.  Those exclusions
hold in every reachable configuration anyway; spelling them out makes the
phase-separation audit (see audit.py) a purely syntactic check.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Dict, List, Optional, Sequence, Tuple

from .countermachine import CMProgram, DEC, INC, is_normalized
from .patterns import (
    Guard, NegClause, RightSide, StatePattern, TransitionTemplate,
    a_addvar, a_const, a_notvar, a_var,
    f_bind, f_eq, f_is, f_neq,
    lv_const, lv_eval, lv_plus, lv_var, lv_wild,
)
from .protocol import Protocol
from .states import Configuration, State, state

__all__ = [
    "FSpec", "DigitLayout", "PopulationLayout", "BuiltProtocol",
    "build_protocol", "layout", "population_layout", "capacity_check",
    "digit_value", "register_value", "checkpoint_registers",
    "is_initialised", "is_cleaned", "cm_snapshot",
    "COUNTER_HELPER_FLAGS", "INIT_FAMILIES", "CLEANUP_FAMILIES",
]

COUNTER_HELPER_FLAGS = frozenset({"Clr", "Incr", "Cmp", "Swap", "Done"})
INIT_FAMILIES = frozenset({"counter", "leader"})
CLEANUP_FAMILIES = frozenset({"clear", "swap", "incr", "loop", "reset", "cleanup"})

# Flags that are busy markers of some in-flight operation; a counter-machine
# checkpoint is only read when none of these occur in the configuration.
_BUSY_BASE = frozenset({
    "Clr", "Swap", "Incr", "Cmp",
    "Det", "DetA",
    "DigIncr", "DigIncrA", "DigIncrB", "DigIncrC",
    "DigDecr", "DigDecrA", "DigDecrB", "DigDecrC",
    "Dist", "DistA",
    "Inp", "InpA", "InpB", "InpC",
    "Loop", "LoopA", "Body", "End",
})


@dataclass(frozen=True)
class FSpec:
    """State budget f(n) = g(floor(log n)), plus the digit multiplier beta.

    The protocol organises agents into beta * g(l_n) digits (rounded up to
    a multiple of the register count so every register gets equally many).
    """

    g: Callable[[int], int]
    beta: int
    name: str

    @staticmethod
    def log(beta: int) -> "FSpec":
        """f(n) = floor(log n), the paper's headline regime."""
        return FSpec(g=lambda l: l, beta=beta, name="log")

    def f_of(self, n: int) -> int:
        return self.g(n.bit_length() - 1)

    def digits(self, l_n: int, gamma: int) -> int:
        """Total digit count for populations with floor(log n) = l_n.

        Rounds beta*g(l_n) up to the next multiple of gamma (capacity only
        grows), with a floor of one digit per register.
        """
        raw = self.beta * self.g(l_n)
        if raw <= gamma:
            return gamma
        return -(-raw // gamma) * gamma


@dataclass(frozen=True)
class DigitLayout:
    l_n: int
    gamma: int
    digits: int
    k: int  # digits per register
    nu: Tuple[int, ...]  # nu[r-1] = first digit of register r; nu[gamma] = digits+1

    def register_digits(self, r: int) -> range:
        return range(self.nu[r - 1], self.nu[r - 1] + self.k)


@dataclass(frozen=True)
class PopulationLayout:
    """Exact agent budget for a concrete population size."""

    base: DigitLayout
    n: int
    free_agents: int  # agents left over for digits after leader/counters/helpers
    per_digit: Tuple[int, ...]  # per_digit[i-1] = agents in digit i
    register_capacity: Tuple[int, ...]  # product of (agents+1) over the digits

    def max_register_value(self, r: int) -> int:
        return self.register_capacity[r - 1] - 1


def layout(l_n: int, gamma: int, fspec: FSpec) -> DigitLayout:
    digits = fspec.digits(l_n, gamma)
    k = digits // gamma
    nu = tuple(1 + k * (r - 1) for r in range(1, gamma + 2))
    return DigitLayout(l_n=l_n, gamma=gamma, digits=digits, k=k, nu=nu)


def population_layout(n: int, gamma: int, fspec: FSpec) -> PopulationLayout:
    """Per-digit agent counts for population n.

    Non-digit agents: one leader, l_n+1 counter agents, and the four
    appointed helpers (counter helper, detect helper, digit helper, and
    the distributor that later becomes the input/machine agent).  The
    distributor hands out the rest round-robin from the top digit down,
    so the first ``free mod digits`` digits visited get one extra agent.
    """
    l_n = n.bit_length() - 1
    base = layout(l_n, gamma, fspec)
    free = n - (l_n + 2) - 4
    if free < 0:
        free = 0
    share, rem = divmod(free, base.digits)
    per_digit = tuple(
        share + (1 if i > base.digits - rem else 0)
        for i in range(1, base.digits + 1)
    )
    caps = []
    for r in range(1, gamma + 1):
        cap = 1
        for i in base.register_digits(r):
            cap *= per_digit[i - 1] + 1
        caps.append(cap)
    return PopulationLayout(base=base, n=n, free_agents=free,
                            per_digit=per_digit, register_capacity=tuple(caps))


def capacity_check(n: int, fspec: FSpec, gamma: int, c: int) -> str:
    """Evaluate the digit-capacity inequality from the space-bound proof.

    Each digit holds at least (n - l_n - 5)/g(l_n) - 1 agents and a
    register spans g(l_n)/gamma digits, so register capacity is that base
    raised to the digits-per-register.  Returns "ok" when it reaches
    2^(c*f(n)*log n), i.e. n^(c*f(n)), using exact integer arithmetic.
    """
    if n < 2:
        raise ValueError("population must have at least 2 agents")
    l_n = n.bit_length() - 1
    g = fspec.digits(l_n, gamma)
    k = g // gamma
    base = (n - l_n - 5) // g - 1
    if base < 1:
        return "insufficient"
    need_exp = c * fspec.f_of(n)
    return "ok" if base ** k >= n ** need_exp else "insufficient"


# -- flag universe -----------------------------------------------------------

_CORE_FLAGS = (
    "Ldr", "Ctr", "Free", "N", "I", "A", "B",
    "Clr", "Incr", "Cmp", "Swap", "Done", "R",
    "Loop", "LoopA", "Body", "End",
    "T", "Q", "Start",
    "Dist", "DistA", "DistDone", "V",
    "Det", "DetA", "DetDone", "M", "U",
    "Digit", "W",
    "DigIncr", "DigIncrA", "DigIncrB", "DigIncrC",
    "DigDecr", "DigDecrA", "DigDecrB", "DigDecrC",
    "DigDone",
    "Inp", "InpA", "InpB", "InpC", "InpDone", "O",
    "CM", "Output",
    "Go", "GoA", "GoB", "GoC", "GoD",
)


def _ip(s: int) -> str:
    return "IP^%d" % s


def _ipa(s: int) -> str:
    return "IPA^%d" % s


def _ipb(s: int) -> str:
    return "IPB^%d" % s


def _ipc(s: int) -> str:
    return "IPC^%d" % s


# -- template generation -------------------------------------------------------

_IS0, _IS1 = f_is(0), f_is(1)
_EXCL = (("Ldr", _IS0), ("Ctr", _IS0))  # helper slots are never leader/counter


def _clear_group(flag_universe, alphabet, keep: Dict[str, tuple]) -> tuple:
    """Assignment map for '(F \\ Sigma)_0' followed by named assignments."""
    out = {f: a_const(0) for f in sorted(flag_universe) if f not in alphabet}
    out.update(keep)
    return tuple(out.items())


def _t(tid, family, l0, l1, r0, r1, guard=None, rights=None):
    return TransitionTemplate(
        id=tid, family=family, left=(l0, l1),
        rights=rights if rights is not None else ((r0, r1),),
        guard=guard,
    )


def generate_templates(program: CMProgram, fspec: FSpec,
                       alphabet: Sequence[str]) -> Tuple[tuple, frozenset]:
    """All transition templates for the given program, in family order."""
    gamma = len(alphabet) + 3
    if program.n_registers != gamma:
        raise ValueError(
            "program has %d registers but alphabet %r implies %d"
            % (program.n_registers, tuple(alphabet), gamma)
        )
    if not is_normalized(program):
        raise ValueError("program must be normalized (accepting self-loop last)")
    l = program.length

    flags = list(_CORE_FLAGS) + list(alphabet)
    for s in range(1, l + 1):
        flags.append(_ip(s))
    for s, ins in enumerate(program.instructions, 1):
        if ins.op == DEC and s != l:
            flags += [_ipa(s), _ipb(s), _ipc(s)]
    flag_universe = frozenset(flags)

    def gdigits(binding: dict) -> int:
        return fspec.digits(binding["i"], gamma)

    def nu_of(reg: int):
        def ev(binding: dict) -> int:
            k = fspec.digits(binding["i"], gamma) // gamma
            return 1 + k * (reg - 1)
        return ev

    P, RS = StatePattern, RightSide
    i_, j_ = lv_var("i"), lv_var("j")
    wild = lv_wild()
    T: List[TransitionTemplate] = []

    # --- initialisation: binary agent counting plus leader election
    T.append(_t(
        "counter.1", "counter",
        P(i_, (("Ctr", _IS1), ("N", _IS1))),
        P(i_, (("Ctr", _IS1), ("N", _IS1))),
        RS(lv_plus("i", 1)),
        RS(i_, (("N", a_const(0)),)),
    ))
    T.append(_t(
        "counter.2", "counter",
        P(i_, (("Ctr", _IS1), ("N", f_bind("a")))),
        P(i_, (("Ctr", _IS1), ("N", f_bind("b")))),
        RS(i_, (("N", a_addvar("a", "b")),)),
        RS(i_, (("Ctr", a_const(0)), ("Ldr", a_const(1)), ("I", a_const(1)))),
        guard=Guard(lambda b: b["a"] + b["b"] <= 1, "a+b<=1"),
    ))
    T.append(_t(
        "leader.1", "leader",
        P(i_, (("Ldr", _IS1),)),
        P(j_, (("Ldr", _IS1),)),
        RS(wild, (("I", a_const(1)),)),
        RS(lv_const(0), (("Ldr", a_const(0)), ("Free", a_const(1)))),
        guard=Guard(lambda b: b["i"] >= b["j"], "i>=j"),
    ))
    T.append(_t(
        "leader.2", "leader",
        P(i_, (("Ldr", _IS1),)),
        P(j_, (("Ctr", _IS1),)),
        RS(j_, (("I", a_const(1)),)),
        RS(j_),
        guard=Guard(lambda b: b["i"] < b["j"], "i<j"),
    ))

    # --- counter-helper operations: clear A, swap A/B, increment-and-compare
    T.append(_t(
        "clear.1", "clear",
        P(i_, (("Clr", _IS1),) + _EXCL),
        P(i_, (("Ctr", _IS1),)),
        RS(lv_plus("i", 1)),
        RS(i_, (("A", a_const(0)),)),
    ))
    T.append(_t(
        "clear.2", "clear",
        P(lv_plus("i", 1), (("Clr", _IS1),) + _EXCL),
        P(i_, (("Ldr", _IS1),)),
        RS(lv_const(0), (("Clr", a_const(0)), ("Done", a_const(1)))),
        RS(i_),
    ))
    T.append(_t(
        "swap.1", "swap",
        P(i_, (("Swap", _IS1),) + _EXCL),
        P(i_, (("Ctr", _IS1), ("A", f_bind("a")), ("B", f_bind("b")))),
        RS(lv_plus("i", 1)),
        RS(i_, (("A", a_var("b")), ("B", a_var("a")))),
    ))
    T.append(_t(
        "swap.2", "swap",
        P(lv_plus("i", 1), (("Swap", _IS1),) + _EXCL),
        P(i_, (("Ldr", _IS1),)),
        RS(lv_const(0), (("Swap", a_const(0)), ("Done", a_const(1)))),
        RS(i_),
    ))
    T.append(_t(
        "incr.1", "incr",
        P(i_, (("Incr", _IS1),) + _EXCL),
        P(i_, (("Ctr", _IS1), ("A", _IS1))),
        RS(lv_plus("i", 1)),
        RS(i_, (("A", a_const(0)),)),
    ))
    T.append(_t(
        "incr.2", "incr",
        P(i_, (("Incr", _IS1),) + _EXCL),
        P(i_, (("Ctr", _IS1), ("A", _IS0))),
        RS(lv_const(0), (("Incr", a_const(0)), ("Cmp", a_const(1)))),
        RS(i_, (("A", a_const(1)),)),
    ))
    T.append(_t(
        "incr.3", "incr",
        P(i_, (("Cmp", _IS1),) + _EXCL),
        P(i_, (("Ctr", _IS1), ("A", f_bind("a")), ("N", f_eq("a")))),
        RS(lv_plus("i", 1)),
        RS(i_),
    ))
    T.append(_t(
        "incr.4", "incr",
        P(i_, (("Cmp", _IS1),) + _EXCL),
        P(i_, (("Ctr", _IS1), ("A", f_bind("a")), ("N", f_neq("a")))),
        RS(lv_const(0), (("Cmp", a_const(0)), ("Done", a_const(1)), ("R", a_const(0)))),
        RS(i_),
    ))
    T.append(_t(
        "incr.5", "incr",
        P(lv_plus("i", 1), (("Cmp", _IS1),) + _EXCL),
        P(i_, (("Ldr", _IS1),)),
        RS(lv_const(0), (("Cmp", a_const(0)), ("Clr", a_const(1)), ("R", a_const(1)))),
        RS(i_),
    ))

    # --- loop macro: body runs exactly n-1 times, driven by incr's R flag
    T.append(_t(
        "loop.1", "loop",
        P(wild, (("Loop", _IS1), ("Body", _IS0))),
        P(wild, (("Done", _IS1),) + _EXCL),
        RS(wild, (("Loop", a_const(0)), ("LoopA", a_const(1)))),
        RS(lv_const(0), (("Done", a_const(0)), ("Incr", a_const(1)))),
    ))
    T.append(_t(
        "loop.2", "loop",
        P(wild, (("LoopA", _IS1),)),
        P(wild, (("Done", _IS1), ("R", _IS0))),
        RS(wild, (("LoopA", a_const(0)), ("Loop", a_const(1)), ("Body", a_const(1)))),
        RS(wild),
    ))
    T.append(_t(
        "loop.3", "loop",
        P(wild, (("LoopA", _IS1),)),
        P(wild, (("Done", _IS1), ("R", _IS1))),
        RS(wild, (("LoopA", a_const(0)), ("End", a_const(1)))),
        RS(wild),
    ))

    # --- reset and cleanup.  Lines are ordered for the per-pair priority
    # rule: wipes win over everything later, the T-clearing loop step wins
    # over the re-initialisation trigger, and the trigger itself comes last
    # of all (it is also a deferred recovery line, so the run loop fires it
    # only at quiescence, i.e. exactly when a wipe pass has finished or a
    # cleanup loop has stalled).
    T.append(_t(
        "reset.2", "reset",
        P(wild, (("Ldr", _IS1), ("I", _IS1))),
        P(wild, (("Ldr", _IS0), ("Ctr", _IS0))),
        RS(wild),
        RS(lv_const(0), _clear_group(flag_universe, alphabet, {
            "Free": a_const(1), "T": a_const(1),
        })),
    ))
    T.append(_t(
        "reset.3", "reset",
        P(wild, (("Ldr", _IS1), ("I", _IS1))),
        P(wild, (("Ctr", _IS1), ("T", _IS0))),
        RS(wild),
        RS(wild, (("T", a_const(1)),)),
    ))

    # --- cleanup: appoint a helper, loop n-1 times clearing T, then Start
    T.append(_t(
        "cleanup.1", "cleanup",
        P(wild, (("Ldr", _IS1), ("I", _IS1), ("Ctr", _IS0))),
        P(wild, (("Free", _IS1),) + _EXCL),
        RS(wild, _clear_group(flag_universe, alphabet, {
            "Ldr": a_const(1), "Loop": a_const(1),
        })),
        RS(lv_const(0), (("Free", a_const(0)), ("Clr", a_const(1)),
                         ("T", a_const(1)), ("Q", a_const(1)))),
    ))
    T.append(_t(
        "cleanup.2", "cleanup",
        P(wild, (("Ldr", _IS1), ("Body", _IS1), ("Start", _IS0), ("I", _IS0))),
        P(wild, (("T", _IS1),)),
        RS(wild, (("Body", a_const(0)),)),
        RS(wild, (("T", a_const(0)),)),
    ))
    T.append(_t(
        "cleanup.3", "cleanup",
        P(wild, (("Ldr", _IS1), ("End", _IS1), ("Start", _IS0), ("I", _IS0))),
        P(wild, (("Done", _IS1),) + _EXCL),
        RS(wild, (("End", a_const(0)), ("Start", a_const(1)))),
        RS(lv_const(0), _clear_group(flag_universe, alphabet, {
            "Free": a_const(1),
        })),
    ))
    T.append(_t(
        "reset.1", "reset",
        P(wild, (("Ldr", _IS1), ("I", _IS0))),
        P(wild, (("Q", _IS1),)),
        RS(wild, (("I", a_const(1)),)),
        RS(wild),
    ))

    # --- dist: round-robin free agents into digits 1..g(l_n)
    T.append(_t(
        "dist.1", "dist",
        P(wild, (("Dist", _IS1),) + _EXCL),
        P(wild),
        RS(lv_const(0), (("Dist", a_const(0)), ("DistA", a_const(1)),
                         ("Loop", a_const(1)))),
        RS(wild),
    ))
    T.append(_t(
        "dist.2", "dist",
        P(i_, (("DistA", _IS1), ("Body", _IS1)) + _EXCL),
        P(lv_const(0), (("Free", _IS1), ("V", _IS0), ("T", _IS0)) + _EXCL),
        RS(lv_plus("i", -1), (("Body", a_const(0)),)),
        RS(i_, (("Free", a_const(0)), ("Digit", a_const(1)), ("V", a_const(1)))),
        guard=Guard(lambda b: b["i"] > 0, "i>0"),
    ))
    T.append(_t(
        "dist.3", "dist",
        P(wild, (("DistA", _IS1), ("Body", _IS1)) + _EXCL),
        P(wild, (("Free", _IS0), ("V", _IS0), ("T", _IS0))),
        RS(wild, (("Body", a_const(0)),)),
        RS(wild, (("V", a_const(1)),)),
    ))
    T.append(_t(
        "dist.4", "dist",
        P(lv_const(0), (("DistA", _IS1),) + _EXCL),
        P(i_, (("Ldr", _IS1),)),
        RS(lv_eval(gdigits, "g(i)")),
        RS(i_),
    ))
    T.append(_t(
        "dist.5", "dist",
        P(wild, (("DistA", _IS1), ("End", _IS1)) + _EXCL),
        P(wild),
        RS(wild, (("DistA", a_const(0)), ("End", a_const(0)),
                  ("DistDone", a_const(1)))),
        RS(wild),
    ))

    # --- detect: is there a digit-i agent with M = a?  Marks visited agents
    # by flipping U, alternating the polarity between runs.
    T.append(_t(
        "detect.1", "detect",
        P(wild, (("Det", _IS1),) + _EXCL),
        P(wild),
        RS(wild, (("Det", a_const(0)), ("DetA", a_const(1)),
                  ("Loop", a_const(1)), ("R", a_const(0)))),
        RS(wild),
    ))
    T.append(_t(
        "detect.2", "detect",
        P(i_, (("DetA", _IS1), ("Body", _IS1), ("M", f_bind("a")),
               ("U", f_bind("b"))) + _EXCL),
        P(i_, (("Digit", _IS1), ("M", f_eq("a")), ("U", f_eq("b")))),
        RS(i_, (("Body", a_const(0)), ("R", a_const(1)))),
        RS(wild, (("U", a_notvar("b")),)),
    ))
    T.append(_t(
        "detect.3", "detect",
        P(i_, (("DetA", _IS1), ("Body", _IS1), ("M", f_bind("a")),
               ("U", f_bind("b"))) + _EXCL),
        P(wild, (("U", f_eq("b")),),
          neg=NegClause(level=i_, flags=(("Digit", _IS1), ("M", f_eq("a"))))),
        RS(i_, (("Body", a_const(0)),)),
        RS(wild, (("U", a_notvar("b")),)),
    ))
    T.append(_t(
        "detect.4", "detect",
        P(i_, (("DetA", _IS1), ("End", _IS1), ("U", f_bind("b"))) + _EXCL),
        P(wild),
        RS(lv_plus("i", 1), (("DetA", a_const(0)), ("DetDone", a_const(1)),
                             ("End", a_const(0)), ("U", a_notvar("b")))),
        RS(wild),
    ))

    # --- digit increment / decrement with carry / borrow
    def digit_family(op: str):
        fam = "dig-incr" if op == "incr" else "dig-decr"
        F0 = "DigIncr" if op == "incr" else "DigDecr"
        FA, FB, FC = F0 + "A", F0 + "B", F0 + "C"
        probe = 0 if op == "incr" else 1  # incr asks "not full", decr "not empty"
        T.append(_t(
            fam + ".1", fam,
            P(i_, ((F0, _IS1),) + _EXCL),
            P(wild, (("DetDone", _IS1),) + _EXCL),
            RS(i_, ((F0, a_const(0)), (FA, a_const(1)))),
            RS(i_, (("DetDone", a_const(0)), ("Det", a_const(1)),
                    ("M", a_const(probe)))),
        ))
        T.append(_t(
            fam + ".2", fam,
            P(wild, ((FA, _IS1),) + _EXCL),
            P(wild, (("DetDone", _IS1), ("R", _IS1))),
            RS(wild, ((FA, a_const(0)), (FB, a_const(1)))),
            RS(wild),
        ))
        T.append(_t(
            fam + ".3", fam,
            P(i_, ((FB, _IS1),) + _EXCL),
            P(i_, (("Digit", _IS1), ("M", f_is(probe)))),
            RS(lv_const(0), ((FB, a_const(0)), ("DigDone", a_const(1)))),
            RS(wild, (("M", a_const(1 - probe)),)),
        ))
        T.append(_t(
            fam + ".4", fam,
            P(wild, ((FA, _IS1),) + _EXCL),
            P(wild, (("DetDone", _IS1), ("R", _IS0))),
            RS(wild, ((FA, a_const(0)), (FC, a_const(1)), ("Loop", a_const(1)))),
            RS(wild),
        ))
        T.append(_t(
            fam + ".5", fam,
            P(i_, ((FC, _IS1), ("Body", _IS1), ("W", f_bind("b"))) + _EXCL),
            P(i_, (("Digit", _IS1), ("W", f_eq("b")))),
            RS(i_, (("Body", a_const(0)),)),
            RS(i_, (("W", a_notvar("b")), ("M", a_const(probe)))),
        ))
        T.append(_t(
            fam + ".6", fam,
            P(i_, ((FC, _IS1), ("Body", _IS1), ("W", f_bind("b"))) + _EXCL),
            P(wild, (("W", f_eq("b")),),
              neg=NegClause(level=i_, flags=(("Digit", _IS1),))),
            RS(i_, (("Body", a_const(0)),)),
            RS(wild, (("W", a_notvar("b")),)),
        ))
        T.append(_t(
            fam + ".7", fam,
            P(i_, ((FC, _IS1), ("End", _IS1), ("W", f_bind("b"))) + _EXCL),
            P(wild),
            RS(lv_plus("i", 1), ((FC, a_const(0)), ("End", a_const(0)),
                                 (F0, a_const(1)), ("W", a_notvar("b")))),
            RS(wild),
        ))

    digit_family("incr")
    digit_family("decr")

    # --- input: the Inp agent counts its own symbol into the matching
    # register, then trades flags with an uncounted agent and repeats.
    # A/B swaps alternate the counter between the outer loop's tally and
    # the digit machinery's scratch space.
    for x, sym in enumerate(alphabet, 1):
        T.append(_t(
            "input.1{%s}" % sym, "input",
            P(wild, (("Inp", _IS1), (sym, _IS1), ("O", _IS0))),
            P(wild, (("Done", _IS1), ("T", _IS0)) + _EXCL),
            RS(wild, (("Inp", a_const(0)), ("InpA", a_const(1)))),
            RS(lv_const(0), (("Done", a_const(0)), ("Swap", a_const(1)))),
        ))
        T.append(_t(
            "input.2{%s}" % sym, "input",
            P(i_, (("InpA", _IS1), (sym, _IS1), ("O", _IS0))),
            P(wild, (("DigDone", _IS1),) + _EXCL),
            RS(wild, (("InpA", a_const(0)), ("InpB", a_const(1)), ("O", a_const(1)))),
            RS(lv_eval(nu_of(x), "nu(i,%d)" % x),
               (("DigDone", a_const(0)), ("DigIncr", a_const(1)))),
        ))
    T.append(_t(
        "input.3", "input",
        P(wild, (("InpB", _IS1),)),
        P(wild, (("DigDone", _IS1),)),
        RS(wild, (("InpB", a_const(0)), ("InpC", a_const(1)))),
        RS(wild),
    ))
    T.append(_t(
        "input.4", "input",
        P(wild, (("InpC", _IS1),) + _EXCL),
        P(wild, (("Done", _IS1), ("T", _IS0)) + _EXCL),
        RS(wild, (("InpC", a_const(0)), ("Inp", a_const(1)),
                  ("Loop", a_const(1)), ("Body", a_const(0)))),
        RS(wild, (("Done", a_const(0)), ("Swap", a_const(1)))),
    ))
    for sx in alphabet:
        for sy in alphabet:
            if sx == sy:
                rights = ((RS(wild, (("O", a_const(0)),)),
                           RS(wild, (("O", a_const(1)),))),)
            else:
                rights = ((RS(wild, ((sx, a_const(0)), (sy, a_const(1)),
                                     ("O", a_const(0)))),
                           RS(wild, ((sx, a_const(1)), (sy, a_const(0)),
                                     ("O", a_const(1))))),)
            T.append(TransitionTemplate(
                id="input.5{%s,%s}" % (sx, sy), family="input",
                left=(
                    P(wild, (("Inp", _IS1), ("Body", _IS1), (sx, _IS1),
                             ("O", _IS1))),
                    P(wild, ((sy, _IS1), ("O", _IS0))),
                ),
                rights=rights,
            ))
    T.append(_t(
        "input.6", "input",
        P(wild, (("Inp", _IS1), ("End", _IS1)) + _EXCL),
        P(wild),
        RS(wild, (("Inp", a_const(0)), ("End", a_const(0)),
                  ("InpDone", a_const(1)))),
        RS(wild),
    ))

    # --- instruction dispatch; none generated for the accepting sentinel
    for s, ins in enumerate(program.instructions, 1):
        if s == l:
            continue
        if ins.op == INC:
            rights = tuple(
                (
                    RS(wild, ((_ip(s), a_const(0)), (_ip(target), a_const(1)))),
                    RS(lv_eval(nu_of(ins.reg), "nu(i,%d)" % ins.reg),
                       (("DigDone", a_const(0)), ("DigIncr", a_const(1)))),
                )
                for target in (ins.s0, ins.s1)
            )
            T.append(TransitionTemplate(
                id="cm-incr.%d" % s, family="cm-incr",
                left=(
                    P(i_, ((_ip(s), _IS1), ("CM", _IS1))),
                    P(wild, (("DigDone", _IS1),) + _EXCL),
                ),
                rights=rights,
            ))
        else:
            reg = ins.reg
            T.append(_t(
                "cm-decr.%d.1" % s, "cm-decr",
                P(i_, ((_ip(s), _IS1), ("CM", _IS1))),
                P(wild, (("DigDone", _IS1),) + _EXCL),
                RS(wild, ((_ip(s), a_const(0)), (_ipa(s), a_const(1)))),
                RS(lv_eval(nu_of(reg), "nu(i,%d)" % reg),
                   (("DigDone", a_const(0)), ("DigDecr", a_const(1)))),
            ))
            T.append(_t(
                "cm-decr.%d.2" % s, "cm-decr",
                P(i_, ((_ipa(s), _IS1), ("CM", _IS1))),
                P(wild, (("DigDone", _IS1),)),
                RS(wild, ((_ipa(s), a_const(0)), (_ipb(s), a_const(1)))),
                RS(wild),
            ))
            T.append(_t(
                "cm-decr.%d.3" % s, "cm-decr",
                P(i_, ((_ipb(s), _IS1), ("CM", _IS1))),
                P(wild, (("DetDone", _IS1),) + _EXCL),
                RS(wild, ((_ipb(s), a_const(0)), (_ipc(s), a_const(1)))),
                RS(lv_eval(nu_of(reg), "nu(i,%d)" % reg), (("R", a_const(0)),)),
            ))
            T.append(_t(
                "cm-decr.%d.4" % s, "cm-decr",
                P(i_, ((_ipc(s), _IS1), ("CM", _IS1))),
                P(j_, (("DetDone", _IS1), ("R", _IS0))),
                RS(wild),
                RS(wild, (("DetDone", a_const(0)), ("Det", a_const(1)),
                          ("M", a_const(1)))),
                guard=Guard(
                    (lambda nu_end: lambda b: b["j"] < nu_end(b))(nu_of(reg + 1)),
                    "j<nu(i,%d)" % (reg + 1),
                ),
            ))
            T.append(_t(
                "cm-decr.%d.5" % s, "cm-decr",
                P(i_, ((_ipc(s), _IS1), ("CM", _IS1))),
                P(lv_eval(nu_of(reg + 1), "nu(i,%d)" % (reg + 1)),
                  (("DetDone", _IS1), ("R", _IS0))),
                RS(wild, ((_ipc(s), a_const(0)), (_ip(ins.s0), a_const(1)))),
                RS(wild),
            ))
            T.append(_t(
                "cm-decr.%d.6" % s, "cm-decr",
                P(i_, ((_ipc(s), _IS1), ("CM", _IS1))),
                P(wild, (("DetDone", _IS1), ("R", _IS1))),
                RS(wild, ((_ipc(s), a_const(0)), (_ip(ins.s1), a_const(1)))),
                RS(wild),
            ))

    # --- output broadcast: accept iff the machine agent reached the end
    T.append(_t(
        "output.1", "output",
        P(wild, ((_ip(l), _IS1), ("CM", _IS1))),
        P(wild),
        RS(wild, (("Output", a_const(1)),)),
        RS(wild),
    ))
    T.append(_t(
        "output.2", "output",
        P(wild, (("CM", _IS1), ("Output", f_bind("b")))),
        P(wild),
        RS(wild),
        RS(wild, (("Output", a_var("b")),)),
    ))

    # --- go: the Start leader appoints the phase helpers in order.  Gated
    # on I so a pending re-initialisation freezes phase start-up.
    for tid, pre, post, grant in (
        ("go.1", ("Go", _IS0), (("Go", a_const(1)), ("GoA", a_const(1))),
         RS(wild, (("Free", a_const(0)), ("Done", a_const(1))))),
        ("go.2", ("GoA", _IS1), (("GoA", a_const(0)), ("GoB", a_const(1))),
         RS(lv_const(0), (("Free", a_const(0)), ("DetDone", a_const(1))))),
        ("go.3", ("GoB", _IS1), (("GoB", a_const(0)), ("GoC", a_const(1))),
         RS(lv_const(0), (("Free", a_const(0)), ("DigDone", a_const(1))))),
        ("go.4", ("GoC", _IS1), (("GoC", a_const(0)), ("GoD", a_const(1))),
         RS(lv_const(0), (("Free", a_const(0)), ("Dist", a_const(1))))),
    ):
        T.append(_t(
            tid, "go",
            P(wild, (("Start", _IS1), ("I", _IS0), pre)),
            P(wild, (("Free", _IS1), ("T", _IS0)) + _EXCL),
            RS(wild, post),
            grant,
        ))
    T.append(_t(
        "go.5", "go",
        P(i_, (("Start", _IS1), ("I", _IS0), ("GoD", _IS1))),
        P(wild, (("DistDone", _IS1),) + _EXCL),
        RS(wild),
        RS(i_, (("DistDone", a_const(0)), ("Inp", a_const(1)))),
    ))
    T.append(_t(
        "go.6", "go",
        P(i_, (("Start", _IS1), ("I", _IS0), ("GoD", _IS1))),
        P(wild, (("InpDone", _IS1),) + _EXCL),
        RS(wild),
        RS(i_, (("InpDone", a_const(0)), ("CM", a_const(1)),
                (_ip(1), a_const(1)))),
    ))

    return tuple(T), flag_universe


# -- built protocol ------------------------------------------------------------

@dataclass
class BuiltProtocol:
    protocol: Protocol
    program: CMProgram
    fspec: FSpec
    alphabet: tuple
    gamma: int
    c: int
    n0: int

    def population_layout(self, n: int) -> PopulationLayout:
        return population_layout(n, self.gamma, self.fspec)

    def register_bounds(self, n: int) -> Tuple[int, ...]:
        pl = self.population_layout(n)
        return tuple(cap - 1 for cap in pl.register_capacity)

    @property
    def busy_flags(self) -> frozenset:
        extra = set()
        for s in range(1, self.program.length + 1):
            extra.update({_ipa(s), _ipb(s), _ipc(s)})
        return _BUSY_BASE | extra

    def ip_change(self, template_id: str, branch: int) -> Optional[int]:
        """New instruction index when this template moves the machine's
        instruction pointer; None otherwise."""
        if template_id == "go.6":
            return 1
        if template_id.startswith("cm-incr."):
            ins = self.program.instructions[int(template_id.split(".")[1]) - 1]
            return ins.s1 if branch else ins.s0
        if template_id.startswith("cm-decr."):
            _fam, s, line = template_id.split(".")
            ins = self.program.instructions[int(s) - 1]
            if line == "5":
                return ins.s0
            if line == "6":
                return ins.s1
        return None


def build_protocol(program: CMProgram, fspec: FSpec,
                   alphabet: Optional[Sequence[str]] = None,
                   c: int = 0, name: Optional[str] = None) -> BuiltProtocol:
    """Compile a normalized counter-machine program into a protocol.

    The template list is audited against the initialisation and cleanup
    phase-separation hypotheses before anything is returned; a violation
    is a construction bug and fails the build.
    """
    from .audit import audit_templates, AuditError  # cycle-free at runtime

    if not is_normalized(program):
        raise ValueError("program must be normalized first")
    if alphabet is None:
        alphabet = tuple("x%d" % k for k in range(1, program.n_inputs + 1))
    alphabet = tuple(alphabet)
    gamma = len(alphabet) + 3
    templates, flag_universe = generate_templates(program, fspec, alphabet)
    problems = audit_templates(templates, flag_universe, alphabet)
    if problems:
        raise AuditError(problems)

    input_map = {sym: state(0, {"Ctr", "N", sym}) for sym in alphabet}
    protocol = Protocol(
        name=name or "cm-protocol",
        flag_universe=flag_universe,
        alphabet=alphabet,
        templates=templates,
        input_map=input_map,
        output_of=lambda st: 1 if "Output" in st.flags else 0,
        deferred_ids=frozenset({"reset.1", "cleanup.1"}),
    )
    n0 = _minimum_population(fspec, gamma, c)
    return BuiltProtocol(protocol=protocol, program=program, fspec=fspec,
                         alphabet=alphabet, gamma=gamma, c=c, n0=n0)


def _minimum_population(fspec: FSpec, gamma: int, c: int,
                        search_cap: int = 1 << 20) -> int:
    """Least n at which a full run is viable.

    Structural floor from the proof (leader + counters + helpers + one
    agent per digit), the capacity inequality at the requested c, and --
    so that any input multiset of size n actually fits its register --
    every register holding at least n+2 values.
    """
    n = 4
    while n <= search_cap:
        l_n = n.bit_length() - 1
        digits = fspec.digits(l_n, gamma)
        if l_n + 5 + digits <= n and capacity_check(n, fspec, gamma, c) == "ok":
            pl = population_layout(n, gamma, fspec)
            if min(pl.register_capacity) >= n + 2:
                return n
        n += 1
    raise ValueError("no viable population size up to %d" % search_cap)


# -- configuration probes --------------------------------------------------------

def is_initialised(config: Configuration, n: int) -> bool:
    """One leader at the top level, one counter agent per bit spelling n."""
    l_n = n.bit_length() - 1
    leaders = [(st, c) for st, c in config.items() if "Ldr" in st.flags]
    if len(leaders) != 1 or leaders[0][1] != 1:
        return False
    leader = leaders[0][0]
    if leader.level != l_n or "Ctr" in leader.flags:
        return False
    seen_levels = {}
    for st, c in config.items():
        if "Ctr" in st.flags:
            if st.level in seen_levels:
                return False
            seen_levels[st.level] = (st, c)
    if set(seen_levels) != set(range(l_n + 1)):
        return False
    for i in range(l_n + 1):
        st, c = seen_levels[i]
        if c != 1:
            return False
        if (("N" in st.flags) != bool((n >> i) & 1)):
            return False
    return True


def is_initialised_with_init_flag(config: Configuration, n: int) -> bool:
    if not is_initialised(config, n):
        return False
    leader = next(st for st in config if "Ldr" in st.flags)
    return "I" in leader.flags


def is_cleaned(config: Configuration, n: int, alphabet: Sequence[str]) -> bool:
    """Lemma-8 shape: Start leader, bare counters, everyone else Free."""
    if not is_initialised(config, n):
        return False
    sigma = set(alphabet)
    for st, _c in config.items():
        non_input = st.flags - sigma
        if "Ldr" in st.flags:
            if non_input != {"Ldr", "Start"}:
                return False
        elif "Ctr" in st.flags:
            continue
        else:
            if st.level != 0 or non_input != {"Free"}:
                return False
    return True


def digit_value(config: Configuration, i: int) -> int:
    """Unary content of digit i: its agents carrying the M flag."""
    return sum(c for st, c in config.items()
               if st.level == i and "Digit" in st.flags and "M" in st.flags)


def digit_base(config: Configuration, i: int) -> int:
    return 1 + sum(c for st, c in config.items()
                   if st.level == i and "Digit" in st.flags)


def register_value(config: Configuration, lay: DigitLayout, r: int) -> int:
    """Mixed-radix value of register r: sum of digit values weighted by the
    product of the bases of all lower digits in the register."""
    total = 0
    weight = 1
    for i in lay.register_digits(r):
        total += weight * digit_value(config, i)
        weight *= digit_base(config, i)
    return total


def cm_snapshot(config: Configuration, built: BuiltProtocol,
                lay: DigitLayout) -> Optional[Tuple[int, Tuple[int, ...]]]:
    """(ip, registers) when the machine agent is at a bare instruction and
    every helper is parked in its done state; None otherwise."""
    busy = built.busy_flags
    ip = None
    for st, _c in config.items():
        if st.flags & busy:
            return None
        if "CM" in st.flags:
            ips = [f for f in st.flags if f.startswith("IP^")]
            if len(ips) != 1:
                return None
            ip = int(ips[0][3:])
    if ip is None:
        return None
    regs = tuple(register_value(config, lay, r)
                 for r in range(1, built.gamma + 1))
    return ip, regs


def checkpoint_registers(trace, built: BuiltProtocol,
                         lay: DigitLayout) -> List[Tuple[int, Tuple[int, ...]]]:
    """Instruction-level checkpoints extracted from a recorded trace.

    Whenever the machine agent holds a bare instruction flag and every
    helper is parked in its done state, the (ip, registers) pair can be
    read off the configuration; this happens exactly once per executed
    instruction, so the result replays as a cm_step path of the source
    program.  The walk tracks the busy-agent count incrementally, reading
    registers only at the settlement point after each dispatch.
    """
    busy = built.busy_flags
    cfg = dict(trace.initial)
    busy_agents = sum(c for st, c in cfg.items() if st.flags & busy)

    out: List[Tuple[int, Tuple[int, ...]]] = []
    snap = cm_snapshot(cfg, built, lay)
    if snap is not None:
        out.append(snap)
    pending = False
    for _step, q1, o1, q2, o2, tid, branch in trace.events:
        for q in (q1, q2):
            c = cfg[q] - 1
            if c:
                cfg[q] = c
            else:
                del cfg[q]
            if q.flags & busy:
                busy_agents -= 1
        for q in (o1, o2):
            cfg[q] = cfg.get(q, 0) + 1
            if q.flags & busy:
                busy_agents += 1
        if built.ip_change(tid, branch) is not None:
            pending = True
        if pending and not busy_agents:
            got = cm_snapshot(cfg, built, lay)
            if got is not None:
                if not out or out[-1] != got:
                    out.append(got)
                pending = False
    return out
