"""Exact decision procedure for small instances via explicit reachability.

A fair run settles in a bottom strongly connected component of the
reachability graph and visits all of its configurations over and over, so
at finite scale "every fair run stabilises to output b" is equivalent to
"every bottom SCC consists of b-consensus configurations".  That
reformulation is the checker's decision rule; per-node stability is the
complementary backward fixpoint (a configuration is not stable for b
exactly when it can reach a configuration containing an agent with the
other output).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Set, Tuple

from .protocol import Protocol, initial_config, output_consensus
from .states import Configuration, config_size, config_text

__all__ = [
    "ReachGraph", "StabilityReport", "Truncated",
    "reachable_set", "classify_stability", "decide", "state_complexity",
]


class Truncated(Exception):
    """The graph hit a level bound or node budget; exact queries refused."""


@dataclass
class ReachGraph:
    root: str
    nodes: Dict[str, Configuration]
    edges: Dict[str, List[Tuple[str, str]]]  # key -> [(succ key, template id)]
    truncated: bool = False
    truncation_reason: str = ""

    @property
    def size(self) -> int:
        return len(self.nodes)

    def edge_list_text(self) -> str:
        out = []
        for src in sorted(self.edges):
            for dst, tid in self.edges[src]:
                out.append("%s\t%s\t%s" % (src.replace("\n", ";"), tid,
                                           dst.replace("\n", ";")))
        return "\n".join(out)


@dataclass
class StabilityReport:
    classes: Dict[str, str]  # node key -> stable-0 | stable-1 | unstable
    decision: str  # "0" | "1" | "ill-specified"


def _successors(protocol: Protocol, cfg: Configuration):
    # The checker explores the full enabled relation; the run loop's
    # deferral of recovery pairs is a scheduling bias, not semantics.
    states = sorted(cfg, key=lambda s: s.key)
    for a, qa in enumerate(states):
        if cfg[qa] >= 2:
            pooled, _d = protocol.pair_outcomes(qa, qa)
            for (o1, o2, tid, _br), _orient in pooled:
                yield qa, qa, o1, o2, tid
        for qb in states[a + 1:]:
            pooled, _d = protocol.pair_outcomes(qa, qb)
            for (o1, o2, tid, _br), orient in pooled:
                q1, q2 = (qa, qb) if orient == 0 else (qb, qa)
                yield q1, q2, o1, o2, tid


def _apply(cfg: Configuration, q1, q2, o1, o2) -> Configuration:
    new = dict(cfg)
    for q in (q1, q2):
        c = new[q] - 1
        if c:
            new[q] = c
        else:
            del new[q]
    for q in (o1, o2):
        new[q] = new.get(q, 0) + 1
    return new


def reachable_set(protocol: Protocol, init: Configuration,
                  level_bound: int = 64,
                  node_budget: int = 200_000) -> ReachGraph:
    """Breadth-first closure of the step relation from ``init``.

    Returns a truncated graph (exact queries then refuse) when the node
    budget runs out or some state exceeds the level bound -- the latter
    signals a construction bug for compiled protocols, whose levels are
    bounded by design.
    """
    root_key = config_text(init)
    nodes = {root_key: dict(init)}
    edges: Dict[str, List[Tuple[str, str]]] = {}
    graph = ReachGraph(root=root_key, nodes=nodes, edges=edges)
    frontier = [root_key]
    while frontier:
        nxt: List[str] = []
        for key in frontier:
            cfg = nodes[key]
            outs = edges.setdefault(key, [])
            for q1, q2, o1, o2, tid in _successors(protocol, cfg):
                if o1.level > level_bound or o2.level > level_bound:
                    graph.truncated = True
                    graph.truncation_reason = (
                        "state above level bound %d via %s" % (level_bound, tid))
                    return graph
                succ = _apply(cfg, q1, q2, o1, o2)
                skey = config_text(succ)
                outs.append((skey, tid))
                if skey not in nodes:
                    if len(nodes) >= node_budget:
                        graph.truncated = True
                        graph.truncation_reason = (
                            "node budget %d exceeded" % node_budget)
                        return graph
                    nodes[skey] = succ
                    nxt.append(skey)
        frontier = nxt
    return graph


def classify_stability(graph: ReachGraph, protocol: Protocol) -> StabilityReport:
    """Per-node stability classes plus the bottom-SCC decision."""
    if graph.truncated:
        raise Truncated(graph.truncation_reason)
    reverse: Dict[str, List[str]] = {k: [] for k in graph.nodes}
    for src, outs in graph.edges.items():
        for dst, _tid in outs:
            reverse[dst].append(src)

    consensus = {k: output_consensus(protocol, cfg)
                 for k, cfg in graph.nodes.items()}

    def unstable_for(b: int) -> Set[str]:
        seeds = [k for k, c in consensus.items() if c != b]
        seen = set(seeds)
        stack = list(seeds)
        while stack:
            node = stack.pop()
            for pred in reverse[node]:
                if pred not in seen:
                    seen.add(pred)
                    stack.append(pred)
        return seen

    not1 = unstable_for(1)
    not0 = unstable_for(0)
    classes = {}
    for k in graph.nodes:
        if k not in not1:
            classes[k] = "stable-1"
        elif k not in not0:
            classes[k] = "stable-0"
        else:
            classes[k] = "unstable"
    return StabilityReport(classes=classes, decision=_decide_sccs(graph, consensus))


def _decide_sccs(graph: ReachGraph, consensus: Dict[str, Optional[int]]) -> str:
    """Decision by bottom SCCs: b iff every bottom SCC is all-b-consensus."""
    # Tarjan, iterative.
    index: Dict[str, int] = {}
    low: Dict[str, int] = {}
    on_stack: Set[str] = set()
    stack: List[str] = []
    comp_of: Dict[str, int] = {}
    comps: List[List[str]] = []
    counter = [0]

    succs = {k: [d for d, _t in graph.edges.get(k, [])] for k in graph.nodes}
    for start in graph.nodes:
        if start in index:
            continue
        work = [(start, 0)]
        while work:
            node, pi = work[-1]
            if pi == 0:
                index[node] = low[node] = counter[0]
                counter[0] += 1
                stack.append(node)
                on_stack.add(node)
            advanced = False
            children = succs[node]
            while pi < len(children):
                child = children[pi]
                pi += 1
                if child not in index:
                    work[-1] = (node, pi)
                    work.append((child, 0))
                    advanced = True
                    break
                if child in on_stack:
                    low[node] = min(low[node], index[child])
            if advanced:
                continue
            if low[node] == index[node]:
                comp = []
                while True:
                    w = stack.pop()
                    on_stack.discard(w)
                    comp_of[w] = len(comps)
                    comp.append(w)
                    if w == node:
                        break
                comps.append(comp)
            work.pop()
            if work:
                parent, _ = work[-1]
                low[parent] = min(low[parent], low[node])

    decisions = set()
    for ci, comp in enumerate(comps):
        is_bottom = all(
            comp_of[d] == ci for k in comp for d in succs[k]
        )
        if not is_bottom:
            continue
        values = {consensus[k] for k in comp}
        if len(values) != 1 or None in values:
            return "ill-specified"
        decisions.add(values.pop())
    if len(decisions) != 1:
        return "ill-specified"
    return str(decisions.pop())


def decide(protocol: Protocol, inputs: dict,
           level_bound: int = 64, node_budget: int = 200_000) -> str:
    """Exact predicate value on one input: "0", "1", or "ill-specified"."""
    init = initial_config(protocol, inputs)
    graph = reachable_set(protocol, init, level_bound, node_budget)
    if graph.truncated:
        raise Truncated(graph.truncation_reason)
    return classify_stability(graph, protocol).decision


def _compositions(total: int, parts: int):
    if parts == 1:
        yield (total,)
        return
    for head in range(total + 1):
        for rest in _compositions(total - head, parts - 1):
            yield (head,) + rest


def state_complexity(protocol: Protocol, n: int,
                     level_bound: int = 64, node_budget: int = 200_000) -> int:
    """Number of states coverable from some initial configuration with n
    agents, by exhaustive reachability over all input multisets."""
    seen = set()
    for combo in _compositions(n, len(protocol.alphabet)):
        inputs = {sym: c for sym, c in zip(protocol.alphabet, combo) if c}
        if not inputs:
            continue
        graph = reachable_set(protocol, initial_config(protocol, inputs),
                              level_bound, node_budget)
        if graph.truncated:
            raise Truncated(graph.truncation_reason)
        for cfg in graph.nodes.values():
            seen.update(cfg)
    return len(seen)
