"""Agent states and configurations.

A state is a pair of a natural-number *level* and a finite set of *flags*;
a configuration is a finite multiset of states, stored as a mapping from
state to a positive count.  States are interned so that equality is
identity and hashing is cheap, which the simulator and model checker rely
on heavily.

Canonical text forms (used by golden tests and trace files):

* state:          ``<level>|<flag>,<flag>,...`` with flags sorted
* configuration:  one ``<count> <state>`` line per state, sorted by
  (level, flags)
"""

from __future__ import annotations

from typing import Dict, Iterable, Mapping

__all__ = [
    "State",
    "Configuration",
    "state",
    "state_text",
    "parse_state",
    "config_from_counts",
    "config_size",
    "config_text",
    "parse_config",
    "config_copy",
]


class State:
    """An interned (level, flag-set) pair.

    Instances are created through :func:`state`; two structurally equal
    states are always the same object, so the default identity ``__eq__``
    and ``__hash__`` are correct and fast.
    """

    __slots__ = ("level", "flags", "_key", "_text")

    def __init__(self, level: int, flags: frozenset[str]):
        self.level = level
        self.flags = flags
        self._key = (level, tuple(sorted(flags)))
        self._text = "%d|%s" % (level, ",".join(self._key[1]))

    # Hashing stays the id-based default for speed; every container whose
    # iteration order can influence a seeded run is an insertion-ordered
    # dict or is sorted by .key, so traces stay bit-exact across processes.

    @property
    def key(self) -> tuple:
        return self._key

    @property
    def text(self) -> str:
        return self._text

    def has(self, flag: str) -> bool:
        return flag in self.flags

    def __repr__(self) -> str:  # pragma: no cover - debugging aid
        return "State(%s)" % self._text


_INTERN: Dict[tuple, State] = {}


def state(level: int, flags: Iterable[str] = ()) -> State:
    """Return the unique interned state with the given level and flags."""
    if level < 0:
        raise ValueError("state level must be >= 0, got %d" % level)
    fs = frozenset(flags)
    key = (level, tuple(sorted(fs)))
    st = _INTERN.get(key)
    if st is None:
        st = State(level, fs)
        _INTERN[key] = st
    return st


def state_text(st: State) -> str:
    return st.text


def parse_state(text: str) -> State:
    """Inverse of :func:`state_text`."""
    head, _, tail = text.partition("|")
    level = int(head)
    flags = [f for f in tail.split(",") if f]
    return state(level, flags)


# A configuration is a plain dict State -> positive count.  Helpers below
# keep the "all counts >= 1" invariant.
Configuration = Dict[State, int]


def config_from_counts(counts: Mapping[State, int]) -> Configuration:
    cfg: Configuration = {}
    for st, c in counts.items():
        if c < 0:
            raise ValueError("negative count for %s" % st.text)
        if c:
            cfg[st] = cfg.get(st, 0) + c
    return cfg


def config_size(cfg: Configuration) -> int:
    return sum(cfg.values())


def config_copy(cfg: Configuration) -> Configuration:
    return dict(cfg)


def config_text(cfg: Configuration) -> str:
    lines = ["%d %s" % (cfg[st], st.text) for st in sorted(cfg, key=lambda s: s.key)]
    return "\n".join(lines)


def parse_config(text: str) -> Configuration:
    cfg: Configuration = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line:
            continue
        count_s, _, state_s = line.partition(" ")
        try:
            count = int(count_s)
        except ValueError:
            raise ValueError("line %d: bad count %r" % (lineno, count_s)) from None
        if count <= 0:
            raise ValueError("line %d: count must be positive" % lineno)
        st = parse_state(state_s)
        cfg[st] = cfg.get(st, 0) + count
    return cfg
