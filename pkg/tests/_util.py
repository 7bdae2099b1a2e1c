"""Shared helpers for the test suite."""

from __future__ import annotations

from typing import Dict, Optional, Tuple

import popbench as pb
from popbench.countermachine import normalize
from popbench.programs import LIBRARY
from popbench.states import State, state

_BUILT_CACHE: Dict[tuple, object] = {}


def built_protocol(name: str):
    """Compiled protocol for a library predicate (cached; even uses beta=2,
    geq beta=3 so both have desk-scale minimum populations)."""
    beta = {"even": 2, "geq": 3}[name]
    key = (name, beta)
    if key not in _BUILT_CACHE:
        entry = LIBRARY[name]
        _BUILT_CACHE[key] = pb.build_protocol(
            normalize(entry.program), pb.FSpec.log(beta), alphabet=entry.alphabet)
    return _BUILT_CACHE[key]


def initialised_config(n: int, a: int = 0, b: int = 0,
                       helper_flags: Tuple[str, ...] = (),
                       extra: Optional[dict] = None) -> dict:
    """Hand-built initialised configuration: leader at the top level, one
    counter agent per bit of n (with optional A/B register bits), optional
    helper, and free agents padding the population to exactly n."""
    l = n.bit_length() - 1
    cfg = {state(l, {"Ldr"}): 1}
    for i in range(l + 1):
        flags = {"Ctr"}
        if (n >> i) & 1:
            flags.add("N")
        if (a >> i) & 1:
            flags.add("A")
        if (b >> i) & 1:
            flags.add("B")
        cfg[state(i, flags)] = 1
    if helper_flags:
        cfg[state(0, set(helper_flags))] = 1
    for st, c in (extra or {}).items():
        cfg[st] = cfg.get(st, 0) + c
    pad = n - sum(cfg.values())
    assert pad >= 0, "population %d too small for the scaffolding" % n
    if pad:
        free = state(0, {"Free"})
        cfg[free] = cfg.get(free, 0) + pad
    return cfg


def helper_is_done(cfg) -> bool:
    ops = {"Clr", "Swap", "Incr", "Cmp"}
    return any("Done" in st.flags and not (ops & st.flags) for st in cfg)
