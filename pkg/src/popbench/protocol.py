"""Protocols: template lists with input/output maps, and step semantics.

The transition relation of a protocol is given by an ordered template
list.  For an oriented state pair, the first template (in list order)
that matches and produces at least one outcome different from the matched
pair wins; its branches are the enabled outcomes for that orientation.
Templates matching with only no-op outcomes fall through, so an earlier
line that has already done its work does not shadow a later one -- the
re-initialisation and helper-appointment lines of the construction rely
on this.  Pairs matching nothing interact as the identity.
"""

from __future__ import annotations

import hashlib
import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, Iterable, Mapping, Optional, Sequence, Tuple

from .patterns import (
    StatePattern, RightSide, TransitionTemplate,
    apply_right, match_left, lv_var, lv_plus, lv_const,
    f_is,
    a_const,
)
from .states import Configuration, State, config_size, state

__all__ = [
    "Outcome", "Protocol", "UnknownSymbol", "EmptyInput",
    "enabled_outcomes", "step", "initial_config", "output_consensus", "val",
    "binary_counter_example", "majority_fixture",
]

log = logging.getLogger(__name__)


class UnknownSymbol(ValueError):
    """Input symbol outside the protocol alphabet."""


class EmptyInput(ValueError):
    """Initial configurations must contain at least one agent."""


# (initiator', responder', template id, branch index)
Outcome = Tuple[State, State, str, int]


@dataclass
class Protocol:
    name: str
    flag_universe: frozenset
    alphabet: tuple  # ordered input symbols, subset of flag_universe
    templates: tuple  # of TransitionTemplate, in priority order
    input_map: Dict[str, State]
    output_of: Callable[[State], int]
    # Recovery lines: the run loop only fires these when no other pair is
    # enabled anywhere (see scheduler module docstring).
    deferred_ids: frozenset = frozenset()
    debug_overlaps: bool = False

    def __post_init__(self):
        self._memo: Dict[tuple, tuple] = {}
        by_flag: Dict[str, list] = {}
        wild_init: list = []
        for idx, t in enumerate(self.templates):
            anchor = _anchor_flag(t.left[0])
            if anchor is None:
                wild_init.append(idx)
            else:
                by_flag.setdefault(anchor, []).append(idx)
        self._init_by_flag = by_flag
        self._wild_init = tuple(wild_init)

    # -- transition relation ------------------------------------------------

    def oriented_outcomes(self, q1: State, q2: State) -> tuple:
        """Outcomes with q1 as initiator and q2 as responder."""
        return self._oriented(q1, q2)[1]

    def _oriented(self, q1: State, q2: State) -> tuple:
        """(winning template index, outcomes) for one orientation.

        The first template (in list order) with a branch that actually
        changes the pair wins; templates matching with only no-op branches
        fall through.  Index is len(templates) when nothing applies.
        """
        key = (q1, q2)
        memo = self._memo
        got = memo.get(key)
        if got is not None:
            return got
        result = self._compute(q1, q2)
        memo[key] = result
        return result

    def _candidate_templates(self, q1: State):
        seen = set()
        for flag in q1.flags:
            for idx in self._init_by_flag.get(flag, ()):
                seen.add(idx)
        seen.update(self._wild_init)
        return sorted(seen)

    def _compute(self, q1: State, q2: State) -> tuple:
        winner: Optional[tuple] = None
        win_idx = len(self.templates)
        matched_ids = []
        for idx in self._candidate_templates(q1):
            t = self.templates[idx]
            binding: dict = {}
            if not match_left(t.left[0], q1, binding):
                continue
            if not match_left(t.left[1], q2, binding):
                continue
            if t.guard is not None and not t.guard.fn(binding):
                continue
            matched_ids.append(t.id)
            if winner is not None:
                continue  # only scan on for the overlap diagnostic
            outs = []
            for branch, (r1, r2) in enumerate(t.rights):
                o1 = apply_right(r1, q1, binding)
                o2 = apply_right(r2, q2, binding)
                if (o1 is q1 and o2 is q2) or (o1 is q2 and o2 is q1):
                    continue  # multiset unchanged
                outs.append((o1, o2, t.id, branch))
            if outs:
                winner = tuple(outs)
                win_idx = idx
                if not self.debug_overlaps:
                    break
        if self.debug_overlaps and len(matched_ids) > 1:
            log.debug(
                "overlap: pair (%s, %s) matched by %s",
                q1.text, q2.text, ", ".join(matched_ids),
            )
        return (win_idx, winner if winner is not None else ())

    def pair_outcomes(self, qa: State, qb: State) -> tuple:
        """Enabled outcomes of an unordered pair: (outcomes, deferred).

        Both orientations of the drawn pair are tried and the earliest
        winning template decides; when the same template wins both ways its
        outcomes pool.  Each outcome carries its orientation (0: qa
        initiates).  ``deferred`` marks pairs resolved by a recovery line.
        """
        if qa is qb:
            idx, outs = self._oriented(qa, qa)
            pooled = tuple((o, 0) for o in outs)
        else:
            idx_f, fwd = self._oriented(qa, qb)
            idx_r, rev = self._oriented(qb, qa)
            if idx_f < idx_r:
                idx, pooled = idx_f, tuple((o, 0) for o in fwd)
            elif idx_r < idx_f:
                idx, pooled = idx_r, tuple((o, 1) for o in rev)
            else:
                idx = idx_f
                pooled = tuple((o, 0) for o in fwd) + tuple((o, 1) for o in rev)
        if not pooled:
            return (), False
        deferred = self.templates[idx].id in self.deferred_ids
        return pooled, deferred

    # -- misc ----------------------------------------------------------------

    def dump(self) -> str:
        return "\n".join(t.text() for t in self.templates)

    def digest(self) -> str:
        h = hashlib.sha256()
        h.update(self.name.encode())
        h.update("|".join(self.alphabet).encode())
        h.update(self.dump().encode())
        return h.hexdigest()[:16]


def _anchor_flag(pattern: StatePattern) -> Optional[str]:
    for flag, spec in pattern.flags:
        if spec[0] == "is" and spec[1] == 1:
            return flag
    return None


def enabled_outcomes(protocol: Protocol, q1: State, q2: State) -> tuple:
    """Spec operation: outcomes of the oriented pair (q1 initiator)."""
    return protocol.oriented_outcomes(q1, q2)


def step(config: Configuration, q1: State, q2: State,
         out1: State, out2: State) -> Configuration:
    """Replace {q1, q2} by {out1, out2}; population size is conserved."""
    need = 2 if q1 is q2 else 1
    if config.get(q1, 0) < need or config.get(q2, 0) < (2 if q1 is q2 else 1):
        raise ValueError("configuration lacks the pair {%s, %s}" % (q1.text, q2.text))
    new = dict(config)
    for q in (q1, q2):
        c = new[q] - 1
        if c:
            new[q] = c
        else:
            del new[q]
    for q in (out1, out2):
        new[q] = new.get(q, 0) + 1
    return new


def initial_config(protocol: Protocol, inputs: Mapping[str, int]) -> Configuration:
    total = 0
    cfg: Configuration = {}
    for symbol, count in inputs.items():
        if count < 0:
            raise ValueError("negative multiplicity for %r" % symbol)
        if count == 0:
            continue
        if symbol not in protocol.input_map:
            raise UnknownSymbol("symbol %r not in alphabet %s" % (symbol, protocol.alphabet))
        st = protocol.input_map[symbol]
        cfg[st] = cfg.get(st, 0) + count
        total += count
    if total == 0:
        raise EmptyInput("input multiset is empty")
    return cfg


def output_consensus(protocol: Protocol, config: Configuration) -> Optional[int]:
    """b when every occurring state outputs b, else None."""
    it = iter(config)
    try:
        first = protocol.output_of(next(it))
    except StopIteration:
        return None
    for st in it:
        if protocol.output_of(st) != first:
            return None
    return first


def val(config: Configuration, flag: str) -> int:
    """Distributed-counter value: sum of 2^level over Ctr agents with flag set."""
    total = 0
    for st, count in config.items():
        if "Ctr" in st.flags and flag in st.flags:
            total += count << st.level
    return total


# -- built-in protocols ------------------------------------------------------

def binary_counter_example() -> Protocol:
    """Power-of-two merging: two equal agents combine, one zeroes out.

    Encoding: value 2^i is (i, {P}); value 0 is (0, {}).  Terminal
    configurations spell the population size in binary.
    """
    t = TransitionTemplate(
        id="example.1",
        family="example",
        left=(
            StatePattern(level=lv_var("i"), flags=(("P", f_is(1)),)),
            StatePattern(level=lv_var("i"), flags=(("P", f_is(1)),)),
        ),
        rights=((
            RightSide(level=lv_plus("i", 1)),
            RightSide(level=lv_const(0), flags=(("P", a_const(0)),)),
        ),),
    )
    return Protocol(
        name="binary",
        flag_universe=frozenset({"P"}),
        alphabet=("x",),
        templates=(t,),
        input_map={"x": state(0, {"P"})},
        output_of=lambda st: 1,
    )


def majority_fixture() -> Protocol:
    """Standard 4-state exact-majority protocol.

    States: A=(0,{S,P}), B=(0,{S}), a=(0,{P}), b=(0,{}).  Strong agents
    cancel pairwise; survivors convert weak agents.  Output is the P flag.
    Ties end in a mixed weak configuration with no consensus.
    """
    lvl0 = lv_const(0)
    tmpl = [
        TransitionTemplate(
            id="maj.1", family="maj",
            left=(
                StatePattern(level=lvl0, flags=(("S", f_is(1)), ("P", f_is(1)))),
                StatePattern(level=lvl0, flags=(("S", f_is(1)), ("P", f_is(0)))),
            ),
            rights=((
                RightSide(flags=(("S", a_const(0)),)),
                RightSide(flags=(("S", a_const(0)),)),
            ),),
        ),
        TransitionTemplate(
            id="maj.2", family="maj",
            left=(
                StatePattern(level=lvl0, flags=(("S", f_is(1)), ("P", f_is(1)))),
                StatePattern(level=lvl0, flags=(("S", f_is(0)), ("P", f_is(0)))),
            ),
            rights=((RightSide(), RightSide(flags=(("P", a_const(1)),))),),
        ),
        TransitionTemplate(
            id="maj.3", family="maj",
            left=(
                StatePattern(level=lvl0, flags=(("S", f_is(1)), ("P", f_is(0)))),
                StatePattern(level=lvl0, flags=(("S", f_is(0)), ("P", f_is(1)))),
            ),
            rights=((RightSide(), RightSide(flags=(("P", a_const(0)),))),),
        ),
    ]
    return Protocol(
        name="majority4",
        flag_universe=frozenset({"S", "P"}),
        alphabet=("a", "b"),
        templates=tuple(tmpl),
        input_map={"a": state(0, {"S", "P"}), "b": state(0, {"S"})},
        output_of=lambda st: 1 if "P" in st.flags else 0,
    )
