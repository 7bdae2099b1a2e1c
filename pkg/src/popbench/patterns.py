"""Guarded transition templates over (level, flag-set) states.

A template describes one line of a transition family: a pair of left-hand
patterns that must match the initiator and responder, an optional guard
over the bound level/flag variables, and one or more right-hand sides (one
per nondeterministic branch) written as assignments.  Right-hand sides
follow assignment semantics: mentioned levels/flags are set, everything
else is copied from the matched agent.

Level expressions on either side are small tagged tuples; arbitrary
derived levels (``g(i)``, register base digits) use a callable together
with a rendering string so template dumps stay readable and stable.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

from .states import State, state

__all__ = [
    "WILD", "CONST", "VAR", "VARPLUS", "EVAL",
    "lv_wild", "lv_const", "lv_var", "lv_plus", "lv_eval",
    "f_is", "f_bind", "f_eq", "f_neq",
    "a_const", "a_var", "a_notvar", "a_addvar",
    "NegClause", "StatePattern", "RightSide", "Guard", "TransitionTemplate",
    "match_left", "apply_right", "match_pair", "LevelUnderflow",
]

# Level pattern / expression kinds.
WILD, CONST, VAR, VARPLUS, EVAL = "wild", "const", "var", "var+", "eval"


def lv_wild():
    return (WILD,)


def lv_const(k: int):
    return (CONST, k)


def lv_var(name: str):
    return (VAR, name)


def lv_plus(name: str, delta: int):
    return (VARPLUS, name, delta)


def lv_eval(fn: Callable[[dict], int], text: str):
    return (EVAL, fn, text)


def level_text(lv) -> str:
    kind = lv[0]
    if kind == WILD:
        return "*"
    if kind == CONST:
        return str(lv[1])
    if kind == VAR:
        return lv[1]
    if kind == VARPLUS:
        d = lv[2]
        return "%s%+d" % (lv[1], d)
    return lv[2]


# Flag constraint kinds (left side): required value, bind to a variable,
# equal / unequal to an already-bound variable.
F_IS, F_BIND, F_EQ, F_NEQ = "is", "bind", "eq", "neq"


def f_is(value: int):
    return (F_IS, value)


def f_bind(name: str):
    return (F_BIND, name)


def f_eq(name: str):
    return (F_EQ, name)


def f_neq(name: str):
    return (F_NEQ, name)


# Flag assignment kinds (right side).
A_CONST, A_VAR, A_NOT, A_ADD = "const", "var", "not", "add"


def a_const(value: int):
    return (A_CONST, value)


def a_var(name: str):
    return (A_VAR, name)


def a_notvar(name: str):
    return (A_NOT, name)


def a_addvar(n1: str, n2: str):
    return (A_ADD, n1, n2)


class LevelUnderflow(Exception):
    """A right-hand level expression evaluated below zero."""


@dataclass(frozen=True)
class NegClause:
    """A negated sub-pattern: the side does NOT lie in this state set.

    Used for the side conditions of the digit-detection and digit-update
    loops, e.g. "any responder that is not a digit-i agent with M = a".
    All variables referenced here must already be bound by the initiator.
    """

    level: tuple
    flags: tuple  # of (flag, F_IS value | F_EQ var)

    def holds(self, st: State, binding: dict) -> bool:
        kind = self.level[0]
        if kind == CONST and st.level != self.level[1]:
            return False
        if kind == VAR and st.level != binding[self.level[1]]:
            return False
        for flag, spec in self.flags:
            have = 1 if flag in st.flags else 0
            k = spec[0]
            want = spec[1] if k == F_IS else binding[spec[1]]
            if have != want:
                return False
        return True

    def text(self) -> str:
        parts = [level_text(self.level)]
        parts += ["%s:%s" % (f, s[1]) for f, s in self.flags]
        return "!(%s)" % " ".join(str(p) for p in parts)


@dataclass(frozen=True)
class StatePattern:
    """Left-hand pattern for one side of an interaction."""

    level: tuple = field(default_factory=lv_wild)
    flags: tuple = ()  # of (flag, constraint)
    neg: Optional[NegClause] = None

    def text(self) -> str:
        parts = [level_text(self.level)]
        for flag, spec in self.flags:
            k = spec[0]
            if k == F_IS:
                parts.append("%s:%d" % (flag, spec[1]))
            elif k == F_BIND:
                parts.append("%s:%s" % (flag, spec[1]))
            elif k == F_EQ:
                parts.append("%s:=%s" % (flag, spec[1]))
            else:
                parts.append("%s:!%s" % (flag, spec[1]))
        if self.neg is not None:
            parts.append(self.neg.text())
        return "(%s)" % " ".join(parts)


@dataclass(frozen=True)
class RightSide:
    """Assignment-style right-hand side for one agent."""

    level: tuple = field(default_factory=lv_wild)  # wild = keep own level
    flags: tuple = ()  # of (flag, assignment)

    def text(self) -> str:
        parts = [level_text(self.level)]
        for flag, spec in self.flags:
            k = spec[0]
            if k == A_CONST:
                parts.append("%s:%d" % (flag, spec[1]))
            elif k == A_VAR:
                parts.append("%s:%s" % (flag, spec[1]))
            elif k == A_NOT:
                parts.append("%s:1-%s" % (flag, spec[1]))
            else:
                parts.append("%s:%s+%s" % (flag, spec[1], spec[2]))
        return "(%s)" % " ".join(str(p) for p in parts)


@dataclass(frozen=True)
class Guard:
    fn: Callable[[dict], bool]
    text: str


@dataclass(frozen=True)
class TransitionTemplate:
    """One line of a transition family.

    ``rights`` holds one (initiator, responder) assignment pair per
    nondeterministic branch; every family is single-branch except the
    instruction-dispatch line of Incr instructions, which branches over
    the two successor instructions.
    """

    id: str
    family: str
    left: tuple  # (StatePattern, StatePattern)
    rights: tuple  # of (RightSide, RightSide)
    guard: Optional[Guard] = None

    def text(self) -> str:
        lhs = "%s,%s" % (self.left[0].text(), self.left[1].text())
        alts = " / ".join(
            "%s,%s" % (r0.text(), r1.text()) for r0, r1 in self.rights
        )
        out = "%s: %s -> %s" % (self.id, lhs, alts)
        if self.guard is not None:
            out += "  [%s]" % self.guard.text
        return out


def match_left(pattern: StatePattern, st: State, binding: dict) -> bool:
    """Match one left-hand pattern, extending ``binding`` in place.

    Returns False (binding possibly partially extended; caller discards)
    when the state does not satisfy the pattern.  Total: never raises for
    well-formed templates.
    """
    lv = pattern.level
    kind = lv[0]
    if kind == CONST:
        if st.level != lv[1]:
            return False
    elif kind == VAR:
        name = lv[1]
        bound = binding.get(name)
        if bound is None:
            binding[name] = st.level
        elif bound != st.level:
            return False
    elif kind == VARPLUS:
        name, delta = lv[1], lv[2]
        bound = binding.get(name)
        if bound is None:
            v = st.level - delta
            if v < 0:
                return False
            binding[name] = v
        elif bound + delta != st.level:
            return False
    elif kind == EVAL:
        if st.level != lv[1](binding):
            return False
    flags = st.flags
    for flag, spec in pattern.flags:
        have = 1 if flag in flags else 0
        k = spec[0]
        if k == F_IS:
            if have != spec[1]:
                return False
        elif k == F_BIND:
            name = spec[1]
            bound = binding.get(name)
            if bound is None:
                binding[name] = have
            elif bound != have:
                return False
        elif k == F_EQ:
            if have != binding[spec[1]]:
                return False
        else:  # F_NEQ
            if have == binding[spec[1]]:
                return False
    if pattern.neg is not None and pattern.neg.holds(st, binding):
        return False
    return True


def apply_right(side: RightSide, matched: State, binding: dict) -> State:
    """Apply an assignment right-hand side to the matched agent."""
    lv = side.level
    kind = lv[0]
    if kind == WILD:
        level = matched.level
    elif kind == CONST:
        level = lv[1]
    elif kind == VAR:
        level = binding[lv[1]]
    elif kind == VARPLUS:
        level = binding[lv[1]] + lv[2]
    else:
        level = lv[1](binding)
    if level < 0:
        raise LevelUnderflow(
            "level expression %s gives %d" % (level_text(lv), level)
        )
    if not side.flags:
        if level == matched.level:
            return matched
        return state(level, matched.flags)
    new_flags = set(matched.flags)
    for flag, spec in side.flags:
        k = spec[0]
        if k == A_CONST:
            value = spec[1]
        elif k == A_VAR:
            value = binding[spec[1]]
        elif k == A_NOT:
            value = 1 - binding[spec[1]]
        else:
            value = binding[spec[1]] + binding[spec[2]]
        if value:
            new_flags.add(flag)
        else:
            new_flags.discard(flag)
    return state(level, new_flags)


def match_pair(template: TransitionTemplate, q1: State, q2: State) -> Optional[dict]:
    """Bind a template against an (initiator, responder) state pair."""
    binding: dict = {}
    if not match_left(template.left[0], q1, binding):
        return None
    if not match_left(template.left[1], q2, binding):
        return None
    if template.guard is not None and not template.guard.fn(binding):
        return None
    return binding
