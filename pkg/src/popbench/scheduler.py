"""Random-pairing scheduler, run loop, and trace recording.

Scheduling semantics: draw an unordered agent pair uniformly at random,
try both orientations, and pick uniformly among the enabled outcomes of
the chosen pair; a draw with no enabled outcome leaves the configuration
unchanged.  Identity draws never change anything, so the run loop samples
directly from the conditional distribution over *effective* pairs
(weighting each unordered state pair by its agent-pair multiplicity) and
counts only effective steps.  This is fair with probability 1.

The engine keeps an incremental index of enabled state pairs: presence
sets per flag narrow partner discovery to the few templates a state can
take part in, and pair outcomes are memoized on the protocol, so a step
costs roughly the handful of dictionary probes around the two states it
touches.

Stopping rules, in priority order: a caller predicate; terminality (no
enabled pair: the consensus, if any, is trivially stable); for compiled
machine protocols, a repeated (instruction, registers) checkpoint of a
deterministic program, which certifies the machine loops without
accepting (verdict 0); an optional quiescence window; the step budget.

Randomness: Python's ``random.Random`` (Mersenne Twister MT19937), one
generator per run seeded from the policy; portable and stable across
platforms, so identical (protocol, input, policy, seed) yields identical
traces.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from random import Random
from typing import Callable, Dict, Iterator, List, Optional, Sequence, Tuple

from .protocol import Protocol
from .states import Configuration, State, config_size, config_text, parse_state, state
from .construction import BuiltProtocol, register_value
from .countermachine import DEC

__all__ = [
    "RunPolicy", "Verdict", "Trace", "ReplayDivergence",
    "random_step", "run", "replay",
]


@dataclass(frozen=True)
class RunPolicy:
    max_steps: int = 2_000_000
    window: Optional[int] = None  # quiescence window, in effective steps
    snapshot_stride: Optional[int] = None  # default: n * ceil(log n)
    seed: int = 0

    def __post_init__(self):
        if self.window is not None:
            if self.window < 1:
                raise ValueError("window must be >= 1")
            if self.max_steps < self.window:
                raise ValueError("max_steps must be >= window")


@dataclass(frozen=True)
class Verdict:
    kind: str  # "consensus" | "undetermined" | "predicate"
    value: Optional[int]  # consensus bit, if any
    step: int
    reason: str  # terminal | cm-cycle | window | max-steps | predicate


# One interaction: (step, init_before, init_after, resp_before, resp_after,
# template id, branch index)
Event = Tuple[int, State, State, State, State, str, int]


@dataclass
class Trace:
    seed: int
    protocol_digest: str
    initial: Configuration
    events: List[Event] = field(default_factory=list)
    snapshots: List[Tuple[int, Configuration]] = field(default_factory=list)
    verdict: Optional[Verdict] = None

    def iter_configs(self) -> Iterator[Configuration]:
        """Initial configuration followed by the configuration after each
        recorded event (requires the trace to carry events)."""
        cfg = dict(self.initial)
        yield cfg
        for _step, q1, o1, q2, o2, _tid, _br in self.events:
            cfg = dict(cfg)
            _apply(cfg, q1, q2, o1, o2)
            yield cfg

    def final_config(self) -> Configuration:
        cfg = dict(self.initial)
        for _step, q1, o1, q2, o2, _tid, _br in self.events:
            _apply(cfg, q1, q2, o1, o2)
        return cfg

    # line-delimited records; header first, snapshots carry canonical text
    def to_jsonl(self) -> str:
        out = [json.dumps({
            "record": "header", "seed": self.seed,
            "protocol": self.protocol_digest,
            "initial": config_text(self.initial),
        })]
        snap = dict(self.snapshots)
        for step, q1, o1, q2, o2, tid, br in self.events:
            out.append(json.dumps({
                "step": step,
                "init_before": q1.text, "init_after": o1.text,
                "resp_before": q2.text, "resp_after": o2.text,
                "template": tid, "branch": br,
            }))
            if step in snap:
                out.append(json.dumps({
                    "record": "snapshot", "step": step,
                    "config": config_text(snap[step]),
                }))
        if self.verdict is not None:
            out.append(json.dumps({
                "record": "verdict", "kind": self.verdict.kind,
                "value": self.verdict.value, "step": self.verdict.step,
                "reason": self.verdict.reason,
            }))
        return "\n".join(out) + "\n"


class ReplayDivergence(Exception):
    def __init__(self, step: int, detail: str):
        super().__init__("replay diverged at step %d: %s" % (step, detail))
        self.step = step


def _apply(cfg: Configuration, q1: State, q2: State, o1: State, o2: State) -> None:
    for q in (q1, q2):
        c = cfg[q] - 1
        if c:
            cfg[q] = c
        else:
            del cfg[q]
    for q in (o1, o2):
        cfg[q] = cfg.get(q, 0) + 1


def random_step(protocol: Protocol, config: Configuration, rng: Random):
    """Reference single-draw semantics (inefficient, for small instances).

    Returns (config', event) for an effective draw and (config, None) for
    an idle one.  Raises on singleton populations.
    """
    n = config_size(config)
    if n < 2:
        raise ValueError("population must have at least 2 agents")
    states = sorted(config, key=lambda s: s.key)
    weights = []
    pairs = []
    for a, qa in enumerate(states):
        ca = config[qa]
        if ca >= 2:
            pairs.append((qa, qa))
            weights.append(ca * (ca - 1) // 2)
        for qb in states[a + 1:]:
            pairs.append((qa, qb))
            weights.append(ca * config[qb])
    total = sum(weights)
    r = rng.randrange(total)
    for (qa, qb), w in zip(pairs, weights):
        if r < w:
            break
        r -= w
    outs, _deferred = protocol.pair_outcomes(qa, qb)
    if not outs:
        return config, None
    (o1, o2, tid, branch), orient = outs[rng.randrange(len(outs))]
    q1, q2 = (qa, qb) if orient == 0 else (qb, qa)
    new = dict(config)
    _apply(new, q1, q2, o1, o2)
    return new, (q1, o1, q2, o2, tid, branch)


class _Engine:
    """Incremental enabled-pair index over a configuration.

    All iterated containers are insertion-ordered dicts so seeded runs are
    reproducible; pair evaluations are cached on the protocol (positive and
    negative partner maps) and shared between runs.
    """

    def __init__(self, protocol: Protocol, config: Configuration,
                 families: Optional[frozenset] = None):
        self.protocol = protocol
        self.families = families
        self.counts: Dict[State, int] = dict(config)
        self.by_flag: Dict[str, dict] = {}
        self.entries: Dict[tuple, tuple] = {}  # pairkey -> (qa, qb, outcomes)
        self.deferred: Dict[tuple, tuple] = {}  # recovery pairs, same layout
        self.adj: Dict[State, dict] = {}
        if families is None:
            if not hasattr(protocol, "_partner_pos"):
                protocol._partner_pos = {}
                protocol._partner_neg = {}
            self.pos: Dict[State, dict] = protocol._partner_pos
            self.neg: Dict[State, set] = protocol._partner_neg
        else:
            self.pos = {}
            self.neg = {}
            self.family_of = {t.id: t.family for t in protocol.templates}
        anchors = getattr(protocol, "_partner_anchor_cache", None)
        if anchors is None:
            anchors = protocol._partner_anchor_cache = {}
        self.anchor_cache = anchors
        for st in self.counts:
            self._index_flags(st)
        for st in list(self.counts):
            self._discover(st)

    # -- presence bookkeeping

    def _index_flags(self, st: State) -> None:
        by_flag = self.by_flag
        for f in st.flags:
            s = by_flag.get(f)
            if s is None:
                by_flag[f] = {st: None}
            else:
                s[st] = None

    def _unindex_flags(self, st: State) -> None:
        by_flag = self.by_flag
        for f in st.flags:
            s = by_flag.get(f)
            if s is not None:
                s.pop(st, None)

    def _anchors(self, st: State):
        got = self.anchor_cache.get(st)
        if got is None:
            got = _partner_anchors(self.protocol, st)
            self.anchor_cache[st] = got
        return got

    def _evaluate(self, qa: State, qb: State):
        """Pair evaluation feeding the positive/negative partner caches."""
        pooled, deferred = self.protocol.pair_outcomes(qa, qb)
        outs = tuple((o[0], o[1], o[2], o[3], orient) for o, orient in pooled)
        if self.families is not None:
            fam = self.family_of
            outs = tuple(o for o in outs if fam[o[2]] in self.families)
        return (outs, deferred) if outs else None

    def _discover(self, st: State) -> None:
        anchor_flags, wildcard = self._anchors(st)
        adjq = self.adj.get(st)
        if adjq is None:
            adjq = self.adj[st] = {}
        posq = self.pos.get(st)
        if posq is None:
            posq = self.pos[st] = {}
        negq = self.neg.get(st)
        if negq is None:
            negq = self.neg[st] = set()
        if wildcard:
            cands = self.counts
        elif len(anchor_flags) == 1:
            cands = self.by_flag.get(anchor_flags[0]) or ()
        else:
            cands = {}
            by_flag = self.by_flag
            for f in anchor_flags:
                g = by_flag.get(f)
                if g:
                    cands.update(g)
        entries, deferred_entries, adj = self.entries, self.deferred, self.adj
        for p in cands:
            if p in adjq or p in negq:
                continue
            e = posq.get(p)
            if e is None:
                e = self._evaluate(st, p)
                if e is None:
                    negq.add(p)
                    if p is not st:
                        pn = self.neg.get(p)
                        if pn is None:
                            pn = self.neg[p] = set()
                        pn.add(st)
                    continue
                posq[p] = e
                if p is not st:
                    pp = self.pos.get(p)
                    if pp is None:
                        pp = self.pos[p] = {}
                    pp[st] = e
            qa, qb = (st, p) if st.key <= p.key else (p, st)
            (deferred_entries if e[1] else entries)[(qa, qb)] = (qa, qb, e[0])
            adjq[p] = None
            if p is not st:
                pa = adj.get(p)
                if pa is None:
                    pa = adj[p] = {}
                pa[st] = None

    def _vanish(self, st: State) -> None:
        self._unindex_flags(st)
        partners = self.adj.pop(st, None)
        if partners:
            for p in partners:
                key = (st, p) if st.key <= p.key else (p, st)
                if self.entries.pop(key, None) is None:
                    self.deferred.pop(key, None)
                if p is not st:
                    s = self.adj.get(p)
                    if s is not None:
                        s.pop(st, None)

    def apply(self, q1: State, q2: State, o1: State, o2: State) -> None:
        counts = self.counts
        appeared = []
        for q in (q1, q2):
            c = counts[q] - 1
            if c:
                counts[q] = c
            else:
                del counts[q]
                self._vanish(q)
        for q in (o1, o2):
            c = counts.get(q, 0)
            counts[q] = c + 1
            if c == 0 and q not in appeared:
                appeared.append(q)
        for q in appeared:
            self._index_flags(q)
        for q in appeared:
            self._discover(q)

    def sample(self, rng: Random):
        """Pick an effective (q1, q2, o1, o2, tid, branch); None if terminal.

        Recovery pairs are drawn only when no ordinary pair is enabled.
        """
        counts = self.counts
        total = 0
        buf = []
        for qa, qb, outs in self.entries.values():
            ca = counts[qa]
            w = ca * (ca - 1) if qa is qb else 2 * ca * counts[qb]
            if w:
                total += w
                buf.append((total, qa, qb, outs))
        if not total:
            for qa, qb, outs in self.deferred.values():
                ca = counts[qa]
                w = ca * (ca - 1) if qa is qb else 2 * ca * counts[qb]
                if w:
                    total += w
                    buf.append((total, qa, qb, outs))
        if not total:
            return None
        r = rng.randrange(total)
        lo, hi = 0, len(buf) - 1
        while lo < hi:
            mid = (lo + hi) // 2
            if buf[mid][0] <= r:
                lo = mid + 1
            else:
                hi = mid
        _cum, qa, qb, outs = buf[lo]
        o1, o2, tid, branch, orient = outs[rng.randrange(len(outs))]
        q1, q2 = (qa, qb) if orient == 0 else (qb, qa)
        return q1, q2, o1, o2, tid, branch


def _loose_match(pattern, st: State) -> bool:
    """Could ``st`` fill this slot for some binding?  Over-approximates."""
    lv = pattern.level
    kind = lv[0]
    if kind == "const" and st.level != lv[1]:
        return False
    if kind == "var+" and st.level - lv[2] < 0:
        return False
    flags = st.flags
    for f, spec in pattern.flags:
        if spec[0] == "is" and (f in flags) != bool(spec[1]):
            return False
    return True


def _anchor_of(pattern) -> Optional[str]:
    for f, spec in pattern.flags:
        if spec[0] == "is" and spec[1] == 1:
            return f
    return None


def _partner_anchors(protocol: Protocol, st: State):
    """Flags identifying every state that could pair with ``st``.

    Returns (flags, wildcard): union over templates where ``st`` loosely
    fills one slot of the other slot's anchor flag; wildcard means some
    template with an unconstrained responder takes ``st`` as initiator,
    so all present states are candidates.
    """
    flags = set()
    wildcard = False
    for t in protocol.templates:
        if _loose_match(t.left[0], st):
            a = _anchor_of(t.left[1])
            if a is None:
                wildcard = True
            else:
                flags.add(a)
        if _loose_match(t.left[1], st):
            a = _anchor_of(t.left[0])
            if a is not None:
                flags.add(a)
    return tuple(sorted(flags)), wildcard


def run(protocol: Protocol,
        inputs: Optional[dict] = None,
        policy: RunPolicy = RunPolicy(),
        *,
        config: Optional[Configuration] = None,
        stop_when: Optional[Callable[[Configuration], bool]] = None,
        families: Optional[frozenset] = None,
        record_events: bool = False,
        built: Optional[BuiltProtocol] = None) -> Tuple[Trace, Verdict]:
    """Simulate to a verdict under the random scheduler.

    ``inputs`` is an input multiset (symbol -> count); alternatively pass
    an explicit ``config``.  ``families`` restricts the transition relation
    to the given template families.  ``built`` enables the machine-level
    bookkeeping (instruction checkpoints, cycle detection) for compiled
    protocols.
    """
    from .protocol import initial_config, output_consensus  # local: hot module

    if config is None:
        if inputs is None:
            raise ValueError("need inputs or config")
        config = initial_config(protocol, inputs)
    if config_size(config) < 2:
        raise ValueError("population must have at least 2 agents")
    n = config_size(config)
    rng = Random(policy.seed)
    stride = policy.snapshot_stride
    if stride is None:
        stride = max(1, n * max(1, (n - 1).bit_length()))

    engine = _Engine(protocol, config, families)
    trace = Trace(seed=policy.seed, protocol_digest=protocol.digest(),
                  initial=dict(config))
    out_of = protocol.output_of
    n_out1 = sum(c for st, c in config.items() if out_of(st))
    n_total = n

    det_program = (
        built is not None
        and all(i.op == DEC or i.s0 == i.s1 for i in built.program.instructions)
    )
    lay = built.population_layout(n).base if built is not None else None
    cm_seen: set = set()
    cm_ip: Optional[int] = None
    accept_ip = built.program.accept_ip if built is not None else None

    def consensus_now() -> Optional[int]:
        if n_out1 == 0:
            return 0
        if n_out1 == n_total:
            return 1
        return None

    def verdictize(kind, value, step, reason):
        v = Verdict(kind, value, step, reason)
        trace.verdict = v
        return trace, v

    if stop_when is not None and stop_when(engine.counts):
        return verdictize("predicate", consensus_now(), 0, "predicate")

    step = 0
    streak = 0
    last_consensus: Optional[int] = None
    while step < policy.max_steps:
        picked = engine.sample(rng)
        if picked is None:
            return verdictize("consensus" if consensus_now() is not None
                              else "undetermined",
                              consensus_now(), step, "terminal")
        q1, q2, o1, o2, tid, branch = picked
        step += 1
        engine.apply(q1, q2, o1, o2)
        n_out1 += (out_of(o1) + out_of(o2)) - (out_of(q1) + out_of(q2))
        if record_events:
            trace.events.append((step, q1, o1, q2, o2, tid, branch))
        if step % stride == 0:
            trace.snapshots.append((step, dict(engine.counts)))

        if stop_when is not None and stop_when(engine.counts):
            return verdictize("predicate", consensus_now(), step, "predicate")

        if built is not None:
            new_ip = built.ip_change(tid, branch)
            if new_ip is not None:
                cm_ip = new_ip
                if det_program and new_ip != accept_ip:
                    regs = tuple(register_value(engine.counts, lay, r)
                                 for r in range(1, built.gamma + 1))
                    mark = (new_ip, regs)
                    if mark in cm_seen and consensus_now() == 0:
                        # Deterministic machine revisited a state without
                        # accepting: it never will, and output 0 is stable.
                        return verdictize("consensus", 0, step, "cm-cycle")
                    cm_seen.add(mark)

        if policy.window is not None:
            cons = consensus_now()
            if cons is not None and cons == last_consensus:
                streak += 1
            else:
                streak = 0
                last_consensus = cons
            if cons is not None and streak >= policy.window:
                if built is None or (cons == 1 and cm_ip == accept_ip):
                    return verdictize("consensus", cons, step, "window")
    return verdictize("undetermined", consensus_now(), step, "max-steps")


def replay(trace: Trace, protocol: Protocol) -> Configuration:
    """Deterministically re-apply a recorded trace, checking every event
    against the protocol's transition relation and every snapshot for
    equality.  Raises ReplayDivergence on the first mismatch."""
    cfg = dict(trace.initial)
    snapshots = dict(trace.snapshots)
    if trace.protocol_digest != protocol.digest():
        raise ReplayDivergence(0, "protocol digest mismatch")
    for step, q1, o1, q2, o2, tid, branch in trace.events:
        legal = protocol.oriented_outcomes(q1, q2)
        if (o1, o2, tid, branch) not in legal:
            raise ReplayDivergence(step, "event not enabled: %s" % tid)
        need = 2 if q1 is q2 else 1
        if cfg.get(q1, 0) < need or cfg.get(q2, 0) < need:
            raise ReplayDivergence(step, "missing agents for %s" % tid)
        _apply(cfg, q1, q2, o1, o2)
        snap = snapshots.get(step)
        if snap is not None and snap != cfg:
            raise ReplayDivergence(step, "snapshot mismatch")
    return cfg
