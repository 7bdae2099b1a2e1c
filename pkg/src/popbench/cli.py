"""Command-line front end.

Subcommands: ``compile`` (dump a compiled protocol and its layout),
``simulate`` (random-scheduler runs), ``check`` (exact model checking of
small instances), ``oracle`` (query the counter-machine interpreter).

Exit codes: 0 = decision produced, 2 = undetermined or truncated,
3 = ill-specified, 4 = input error.

Input multisets are written ``x=4,y=3``; symbols bind to the program's
input registers in the order given, and ``--pad N`` fills the final input
register with N copies of a padding symbol named ``pad``.  The default
seed comes from POPBENCH_SEED when set.
"""

from __future__ import annotations

import argparse
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from typing import Dict, List, Optional, Tuple

from . import construction, programs
from .checker import Truncated, classify_stability, decide, reachable_set
from .construction import FSpec, build_protocol, capacity_check, population_layout
from .countermachine import (
    CMFault, CMParseError, CMVerdict, cm_decides, format_program,
    instruction_path, normalize, parse_program,
)
from .protocol import (
    EmptyInput, UnknownSymbol, binary_counter_example, initial_config,
    majority_fixture,
)
from .scheduler import RunPolicy, run
from .states import config_text

EXIT_OK = 0
EXIT_UNDETERMINED = 2
EXIT_ILL_SPECIFIED = 3
EXIT_INPUT = 4


def _parse_inputs(spec: Optional[str]) -> Dict[str, int]:
    out: Dict[str, int] = {}
    if not spec:
        return out
    for part in spec.split(","):
        part = part.strip()
        if not part:
            continue
        name, _, value = part.partition("=")
        try:
            count = int(value)
        except ValueError:
            raise ValueError("bad input term %r (want sym=count)" % part) from None
        if count < 0:
            raise ValueError("negative multiplicity in %r" % part)
        if name in out:
            raise ValueError("duplicate symbol %r" % name)
        out[name] = count
    return out


def _load_program(args) -> Tuple:
    """Resolve --program/--predicate into (program, alphabet, inputs)."""
    inputs = _parse_inputs(getattr(args, "input", None))
    if getattr(args, "predicate", None):
        entry = programs.LIBRARY[args.predicate]
        program = normalize(entry.program)
        alphabet = entry.alphabet
    else:
        with open(args.program) as fh:
            program = normalize(parse_program(fh.read()))
        named = list(inputs)
        pad = getattr(args, "pad", None)
        want = program.n_inputs - (1 if pad is not None else 0)
        if len(named) != want:
            raise ValueError(
                "program has %d input registers; got %d named symbols%s"
                % (program.n_inputs, len(named),
                   " plus pad" if pad is not None else ""))
        alphabet = tuple(named) + (("pad",) if pad is not None else ())
    pad = getattr(args, "pad", None)
    if pad is not None:
        if "pad" in inputs:
            raise ValueError("give padding via --pad, not --input")
        inputs["pad"] = pad
    return program, alphabet, inputs


def _fspec(args) -> FSpec:
    return FSpec.log(beta=args.beta)


def _check_fit(built, inputs: Dict[str, int], n: int) -> Optional[str]:
    """One unit of INC/DEC headroom above each multiplicity must fit."""
    pl = built.population_layout(n)
    for r, sym in enumerate(built.alphabet, 1):
        need = inputs.get(sym, 0) + 1
        if need > pl.max_register_value(r):
            return (
                "input %s=%d does not fit register %d (capacity %d at n=%d)"
                % (sym, inputs.get(sym, 0), r, pl.register_capacity[r - 1], n))
    return None


# -- simulate -----------------------------------------------------------------

def _sim_task(payload) -> Tuple[int, str, int]:
    """One seeded run; returns (seed, verdict text, steps).  Top-level so
    --jobs can fan runs out over a process pool."""
    kind, data, seed = payload
    policy = RunPolicy(max_steps=data["max_steps"], window=data["window"],
                       seed=seed)
    if kind == "example":
        proto = binary_counter_example()
        trace, verdict = run(proto, {"x": data["n"]}, policy)
    elif kind == "fixture":
        proto = majority_fixture()
        trace, verdict = run(proto, data["inputs"], policy)
    else:
        entry_program = parse_program(data["program_text"])
        built = build_protocol(normalize(entry_program), FSpec.log(data["beta"]),
                               alphabet=tuple(data["alphabet"]), c=data["c"])
        trace, verdict = run(built.protocol, data["inputs"], policy, built=built)
    value = verdict.value if verdict.kind == "consensus" else None
    text = str(value) if value is not None else "undetermined"
    return seed, text, verdict.step


def cmd_simulate(args) -> int:
    policy_window = args.window
    data = {"max_steps": args.max_steps, "window": policy_window}
    if args.example:
        if args.example != "binary":
            print("unknown example %r" % args.example, file=sys.stderr)
            return EXIT_INPUT
        if args.n < 2:
            print("need at least 2 agents", file=sys.stderr)
            return EXIT_INPUT
        kind = "example"
        data["n"] = args.n
    elif args.fixture:
        if args.fixture != "majority4":
            print("unknown fixture %r" % args.fixture, file=sys.stderr)
            return EXIT_INPUT
        kind = "fixture"
        data["inputs"] = _parse_inputs(args.input)
    else:
        program, alphabet, inputs = _load_program(args)
        fspec = _fspec(args)
        built = build_protocol(program, fspec, alphabet=alphabet, c=args.c)
        n = sum(inputs.values())
        if n < built.n0:
            print("population %d below minimum n0=%d for this protocol"
                  % (n, built.n0), file=sys.stderr)
            return EXIT_INPUT
        misfit = _check_fit(built, inputs, n)
        if misfit:
            print(misfit, file=sys.stderr)
            return EXIT_INPUT
        kind = "program"
        data.update({
            "program_text": format_program(program),
            "alphabet": list(alphabet), "inputs": inputs,
            "beta": args.beta, "c": args.c,
        })

    seeds = [args.seed + k for k in range(args.runs)]
    tasks = [(kind, data, s) for s in seeds]
    if args.jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_sim_task, tasks))
    else:
        results = [_sim_task(t) for t in tasks]

    worst = EXIT_OK
    for (seed, text, steps), task in zip(results, tasks):
        if kind == "example" and args.runs == 1:
            # show the terminal configuration for the worked example
            proto = binary_counter_example()
            print(config_text(_final_by_rerun(proto, data["n"], seed,
                                              args.max_steps)))
        if args.trace:
            _write_trace(task, args.trace)
        print("verdict=%s steps=%d seed=%d" % (text, steps, seed))
        if text == "undetermined":
            worst = EXIT_UNDETERMINED
    return worst


def _final_by_rerun(proto, n, seed, max_steps):
    trace, _v = run(proto, {"x": n}, RunPolicy(max_steps=max_steps, seed=seed),
                    record_events=True)
    return trace.final_config()


def _write_trace(task, path: str) -> None:
    kind, data, seed = task
    policy = RunPolicy(max_steps=data["max_steps"], window=data["window"],
                       seed=seed)
    if kind == "example":
        proto = binary_counter_example()
        trace, _ = run(proto, {"x": data["n"]}, policy, record_events=True)
    elif kind == "fixture":
        proto = majority_fixture()
        trace, _ = run(proto, data["inputs"], policy, record_events=True)
    else:
        built = build_protocol(normalize(parse_program(data["program_text"])),
                               FSpec.log(data["beta"]),
                               alphabet=tuple(data["alphabet"]), c=data["c"])
        trace, _ = run(built.protocol, data["inputs"], policy, built=built,
                       record_events=True)
    with open(path, "w") as fh:
        fh.write(trace.to_jsonl())


# -- check --------------------------------------------------------------------

def cmd_check(args) -> int:
    if args.example:
        if args.n < 2:
            print("refusal: populations below 2 have no pairs", file=sys.stderr)
            return EXIT_INPUT
        proto = binary_counter_example()
        inputs = {"x": args.n}
        level_bound = max(8, args.n.bit_length() + 2)
    elif args.fixture:
        proto = majority_fixture()
        inputs = _parse_inputs(args.input)
        level_bound = 2
    else:
        program, alphabet, inputs = _load_program(args)
        built = build_protocol(program, _fspec(args), alphabet=alphabet, c=args.c)
        proto = built.protocol
        n = sum(inputs.values())
        lay = built.population_layout(n).base
        level_bound = lay.l_n + lay.digits + 2
    if args.level_bound:
        level_bound = args.level_bound
    try:
        init = initial_config(proto, inputs)
    except (EmptyInput, UnknownSymbol) as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_INPUT
    if sum(init.values()) < 2:
        print("refusal: populations below 2 have no pairs", file=sys.stderr)
        return EXIT_INPUT
    graph = reachable_set(proto, init, level_bound, args.node_budget)
    if graph.truncated:
        print("truncated: %s" % graph.truncation_reason, file=sys.stderr)
        return EXIT_UNDETERMINED
    report = classify_stability(graph, proto)
    for key in sorted(report.classes):
        print("%s\t%s" % (report.classes[key], key.replace("\n", ";")))
    print("nodes=%d" % graph.size)
    print("decision=%s" % report.decision)
    return EXIT_ILL_SPECIFIED if report.decision == "ill-specified" else EXIT_OK


# -- oracle -------------------------------------------------------------------

def cmd_oracle(args) -> int:
    try:
        program, alphabet, inputs = _load_program(args)
    except (CMParseError, ValueError, OSError) as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_INPUT
    reg_inputs = [inputs.get(sym, 0) for sym in alphabet]
    bound = args.bound if args.bound else max(reg_inputs) + 2
    bounds = [bound] * program.n_registers
    try:
        verdict = cm_decides(program, reg_inputs, bounds, budget=args.budget)
    except CMFault as exc:
        print("P1 violation: %s" % exc, file=sys.stderr)
        return EXIT_INPUT
    print(verdict.value)
    if args.trace:
        try:
            path = instruction_path(program, reg_inputs, bounds)
            print("path=%s" % ",".join(str(p) for p in path))
        except CMFault as exc:
            print("P1 violation on traced run: %s" % exc, file=sys.stderr)
    return EXIT_OK if verdict is not CMVerdict.UNDETERMINED else EXIT_UNDETERMINED


# -- compile ------------------------------------------------------------------

def cmd_compile(args) -> int:
    try:
        program, alphabet, _inputs = _load_program(args)
    except (CMParseError, ValueError, OSError) as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_INPUT
    fspec = _fspec(args)
    built = build_protocol(program, fspec, alphabet=alphabet, c=args.c)
    print("protocol=%s flags=%d templates=%d n0=%d"
          % (built.protocol.name, len(built.protocol.flag_universe),
             len(built.protocol.templates), built.n0))
    if args.n:
        pl = built.population_layout(args.n)
        lay = pl.base
        print("n=%d l_n=%d digits=%d K=%d nu=%s"
              % (args.n, lay.l_n, lay.digits, lay.k,
                 ",".join(str(v) for v in lay.nu[:-1])))
        print("per_digit=%s" % ",".join(str(v) for v in pl.per_digit))
        print("register_capacity=%s"
              % ",".join(str(v) for v in pl.register_capacity))
        verdict = capacity_check(args.n, fspec, built.gamma, args.c)
        print("capacity=%s" % verdict)
        if verdict != "ok" or args.n < built.n0:
            print("warning: minimum viable population is n0=%d" % built.n0)
    if args.dump:
        print(built.protocol.dump())
    return EXIT_OK


# -- argument wiring -----------------------------------------------------------

def _add_common_program_args(p) -> None:
    p.add_argument("--program", help="counter-machine program file")
    p.add_argument("--predicate", choices=sorted(programs.LIBRARY),
                   help="shipped predicate program")
    p.add_argument("--input", help="input multiset, e.g. x=4,y=3")
    p.add_argument("--pad", type=int, help="padding agents (final input register)")
    p.add_argument("--beta", type=int, default=2, help="digit multiplier")
    p.add_argument("-c", type=int, default=0, dest="c",
                   help="space-bound exponent for the capacity check")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="popbench")
    sub = ap.add_subparsers(dest="cmd", required=True)
    default_seed = int(os.environ.get("POPBENCH_SEED", "0"))

    p = sub.add_parser("simulate", help="random-scheduler simulation")
    p.add_argument("--example", help="built-in example protocol (binary)")
    p.add_argument("--fixture", help="built-in fixture (majority4)")
    _add_common_program_args(p)
    p.add_argument("-n", type=int, default=0, help="population for --example")
    p.add_argument("--seed", type=int, default=default_seed)
    p.add_argument("--runs", type=int, default=1)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--max-steps", type=int, default=5_000_000)
    p.add_argument("--window", type=int, default=None)
    p.add_argument("--trace", help="write a JSONL trace to this path")
    p.set_defaults(fn=cmd_simulate)

    p = sub.add_parser("check", help="exact model checking (small instances)")
    p.add_argument("--example", help="built-in example protocol (binary)")
    p.add_argument("--fixture", help="built-in fixture (majority4)")
    _add_common_program_args(p)
    p.add_argument("-n", type=int, default=0, help="population for --example")
    p.add_argument("--level-bound", type=int, default=0)
    p.add_argument("--node-budget", type=int, default=200_000)
    p.set_defaults(fn=cmd_check)

    p = sub.add_parser("oracle", help="counter-machine interpreter")
    _add_common_program_args(p)
    p.add_argument("--bound", type=int, default=0, help="per-register bound")
    p.add_argument("--budget", type=int, default=200_000)
    p.add_argument("--trace", action="store_true",
                   help="print the choice-0 instruction path")
    p.set_defaults(fn=cmd_oracle)

    p = sub.add_parser("compile", help="compile and dump a protocol")
    _add_common_program_args(p)
    p.add_argument("-n", type=int, default=0, help="report the layout at this n")
    p.add_argument("--dump", action="store_true", help="dump the template list")
    p.set_defaults(fn=cmd_compile)
    return ap


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except Truncated as exc:
        print("truncated: %s" % exc, file=sys.stderr)
        return EXIT_UNDETERMINED
    except (CMParseError, UnknownSymbol, EmptyInput, ValueError, OSError) as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
