"""Static phase-separation audit of generated template lists.

The correctness argument for the construction rests on two groups of
hypotheses about everything *outside* the initialisation and cleanup
families, checked here purely syntactically over the patterns:

Initialisation hypotheses (all templates outside counter/leader):
  * never change the Ldr or Ctr flag of any agent,
  * never change N except on an agent known not to be a counter agent,
  * never change the level of an agent unless the pattern rules out
    leaders and counter agents.

Cleanup hypotheses (a)-(e), for templates outside the six
initialisation/cleanup families:
  (a) never change I or Start;
  (b) never demote a counter helper to a non-helper;
  (c) never disturb protected attributes of an agent that could be a
      T-marked free agent or T-marked counter helper;
  (d) never disturb protected attributes of an agent that could be a
      counter agent (scratch marks like U/V/W/O and input flags are fine,
      which is how the all-agent counting loops stay legal);
  (e) require, on some side, a phase flag that cannot occur during
      cleanup, so no later-phase transition can fire in a mid-cleanup
      configuration.

A reported violation means a generated template would break a lemma the
construction depends on; the build refuses to produce the protocol.
"""

from __future__ import annotations

from typing import Dict, List, Optional, Sequence

from .patterns import StatePattern, RightSide, TransitionTemplate
from .construction import COUNTER_HELPER_FLAGS, INIT_FAMILIES, CLEANUP_FAMILIES

__all__ = ["AuditError", "audit_templates", "PROTECTED_FLAGS", "PHASE_FLAGS"]

# Attributes read or written by the initialisation/cleanup machinery; a
# later-phase template touching these on the wrong kind of agent would
# invalidate the phase-separation argument.
PROTECTED_FLAGS = frozenset({
    "Ldr", "Ctr", "N", "I", "Start", "T", "Q", "Free", "A", "B", "R",
    "Loop", "LoopA", "Body", "End",
}) | COUNTER_HELPER_FLAGS

# Flags that cannot occur on any agent of a mid-cleanup configuration.
_PHASE_BASE = frozenset({
    "Start",
    "Dist", "DistA", "DistDone",
    "Det", "DetA", "DetDone",
    "DigIncr", "DigIncrA", "DigIncrB", "DigIncrC",
    "DigDecr", "DigDecrA", "DigDecrB", "DigDecrC", "DigDone",
    "Inp", "InpA", "InpB", "InpC", "InpDone",
    "CM",
})


def PHASE_FLAGS(flag_universe: frozenset) -> frozenset:
    ips = {f for f in flag_universe if f.startswith(("IP^", "IPA^", "IPB^", "IPC^"))}
    return _PHASE_BASE | ips


class AuditError(Exception):
    def __init__(self, problems: List[str]):
        super().__init__("%d audit violation(s):\n%s"
                         % (len(problems), "\n".join(problems)))
        self.problems = problems


def _requires(pattern: StatePattern, flag: str) -> Optional[int]:
    """The value the left pattern pins ``flag`` to, if any."""
    for f, spec in pattern.flags:
        if f == flag and spec[0] == "is":
            return spec[1]
    return None


def _allows(pattern: StatePattern, flag: str, value: int) -> bool:
    pinned = _requires(pattern, flag)
    return pinned is None or pinned == value


def _could_match(pattern: StatePattern, possible_flags: frozenset) -> bool:
    """Could the pattern match an agent whose set flags all lie in
    ``possible_flags``?  True when no required-1 flag falls outside it."""
    return all(
        spec[1] == 0 or f in possible_flags
        for f, spec in pattern.flags if spec[0] == "is"
    )


def _level_unchanged(left: StatePattern, right: RightSide) -> bool:
    lk, rk = left.level, right.level
    if rk[0] == "wild":
        return True
    if rk[0] == "const" and lk[0] == "const" and rk[1] == lk[1]:
        return True
    if rk[0] == "var" and lk[0] == "var" and rk[1] == lk[1]:
        return True
    if rk[0] == "var+" and lk[0] == "var+" and rk[1:] == lk[1:]:
        return True
    return False


def _changed_flags(left: StatePattern, right: RightSide) -> Dict[str, tuple]:
    """Flags the right side may change: assignment not pinned to the same
    constant by the left side."""
    out = {}
    for f, spec in right.flags:
        if spec[0] == "const" and _requires(left, f) == spec[1]:
            continue
        out[f] = spec
    return out


def audit_templates(templates: Sequence[TransitionTemplate],
                    flag_universe: frozenset,
                    alphabet: Sequence[str]) -> List[str]:
    problems: List[str] = []
    phase_flags = PHASE_FLAGS(flag_universe)
    sigma = set(alphabet)
    scratch = (flag_universe - PROTECTED_FLAGS) | sigma

    for t in templates:
        in_init = t.family in INIT_FAMILIES
        in_cleanup = t.family in CLEANUP_FAMILIES
        for rights in t.rights:
            for side, (left, right) in enumerate(zip(t.left, rights)):
                tag = "%s[%s]" % (t.id, "init" if side == 0 else "resp")
                changed = _changed_flags(left, right)
                lvl_same = _level_unchanged(left, right)

                if not in_init:
                    # Initialisation hypotheses.
                    for f in ("Ldr", "Ctr"):
                        if f in changed:
                            problems.append("%s: may change %s" % (tag, f))
                    if "N" in changed and _requires(left, "Ctr") != 0:
                        problems.append(
                            "%s: may change N on a possible counter agent" % tag)
                    if not lvl_same and not (
                        _requires(left, "Ldr") == 0 and _requires(left, "Ctr") == 0
                    ):
                        problems.append(
                            "%s: moves level of a possible leader/counter" % tag)

                if in_init or in_cleanup:
                    continue

                # (a)
                for f in ("I", "Start"):
                    if f in changed:
                        problems.append("%s: (a) may change %s" % (tag, f))
                # (b)
                clears_helper = any(
                    f in COUNTER_HELPER_FLAGS and spec == ("const", 0)
                    for f, spec in right.flags
                )
                if clears_helper:
                    sets_helper = any(
                        f in COUNTER_HELPER_FLAGS and spec == ("const", 1)
                        for f, spec in right.flags
                    )
                    keeps_helper = any(
                        _requires(left, f) == 1
                        and dict(right.flags).get(f) != ("const", 0)
                        for f in COUNTER_HELPER_FLAGS
                    )
                    if not (sets_helper or keeps_helper):
                        problems.append("%s: (b) may demote a counter helper" % tag)
                # (c) / (d): which cleanup-era agents can this side match?
                # A wiped free agent carries exactly {Free, T} plus input
                # flags; the appointed helper carries counter-helper flags
                # plus T/Q/R; a counter agent carries Ctr/N/A/B plus T and
                # whatever scratch marks earlier phases left behind.
                maybe_free_t = (
                    _allows(left, "Free", 1) and _allows(left, "T", 1)
                    and _could_match(left, frozenset({"Free", "T"}) | sigma)
                )
                maybe_helper_t = (
                    _allows(left, "T", 1)
                    and _could_match(
                        left,
                        COUNTER_HELPER_FLAGS | frozenset({"T", "Q", "R"}) | sigma)
                )
                maybe_ctr = (
                    _allows(left, "Ctr", 1)
                    and _could_match(
                        left,
                        frozenset({"Ctr", "N", "A", "B", "T"}) | scratch)
                )
                touches_protected = (not lvl_same) or any(
                    f not in scratch for f in changed
                )
                if touches_protected and (maybe_free_t or maybe_helper_t):
                    problems.append(
                        "%s: (c) may disturb a T-marked free agent or helper" % tag)
                if touches_protected and maybe_ctr:
                    problems.append(
                        "%s: (d) may disturb a counter agent" % tag)

        if not (in_init or in_cleanup):
            # (e)
            has_phase = any(
                spec[0] == "is" and spec[1] == 1 and f in phase_flags
                for left in t.left for f, spec in left.flags
            )
            if not has_phase:
                problems.append(
                    "%s: (e) could fire in a mid-cleanup configuration" % t.id)
    return problems
