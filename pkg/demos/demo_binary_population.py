"""The power-of-two merging protocol, end to end.

Agents start as the value 1; two equal agents merge into their double and
a zero.  Terminal configurations spell the population size in binary --
run with any population and watch the bits appear.
"""

import popbench as pb

N = 22

protocol = pb.binary_counter_example()
trace, verdict = pb.run(protocol, {"x": N}, pb.RunPolicy(seed=7),
                        record_events=True)

print("population:", N, "=", bin(N))
print("verdict:", verdict.kind, "after", verdict.step, "interactions")
print("terminal configuration:")
print(pb.config_text(trace.final_config()))

print("\nexact analysis (model checker):")
graph = pb.reachable_set(protocol, pb.initial_config(protocol, {"x": N}),
                         level_bound=8)
terminals = [k for k, outs in graph.edges.items() if not outs]
print("reachable configurations:", graph.size)
print("terminal configurations:", len(terminals))

print("\nstate complexity S(n) for n = 2..10 (expect floor(log n) + 2):")
for n in range(2, 11):
    print("  S(%d) = %d" % (n, pb.state_complexity(protocol, n, level_bound=8)))
