"""Exact model checking of the classic 4-state majority protocol.

Strong A/B agents cancel pairwise and the survivors convert the weak
agents, so the majority side wins; ties leave a mixed weak population
with no consensus, which the checker reports as ill-specified and the
simulator as undetermined.
"""

import popbench as pb
from popbench.checker import classify_stability, reachable_set

protocol = pb.majority_fixture()

for a, b in ((3, 1), (1, 3), (2, 2)):
    inputs = {"a": a, "b": b}
    decision = pb.decide(protocol, inputs)
    trace, verdict = pb.run(protocol, inputs, pb.RunPolicy(seed=1))
    print("input a=%d b=%d: checker=%s, simulator=%s" %
          (a, b, decision,
           verdict.value if verdict.kind == "consensus" else "undetermined"))

print("\nstability classes for a=2, b=1:")
init = pb.initial_config(protocol, {"a": 2, "b": 1})
graph = reachable_set(protocol, init)
report = classify_stability(graph, protocol)
for key in sorted(report.classes):
    print("  %-9s %s" % (report.classes[key], key.replace("\n", " ; ")))
