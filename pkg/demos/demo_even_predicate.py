"""Compile a counter-machine program to a population protocol and run it.

The "is x even?" machine is compiled into a protocol whose agents count
themselves in binary, elect a leader, organise into mixed-radix digit
groups, load the input multiplicities into registers, and then simulate
the machine instruction by instruction.  The run below shows the phase
milestones and the machine-level checkpoints recovered from the trace.
"""

import popbench as pb
from popbench.construction import checkpoint_registers, is_cleaned, is_initialised
from popbench.countermachine import normalize
from popbench.programs import LIBRARY

entry = LIBRARY["even"]
built = pb.build_protocol(normalize(entry.program), pb.FSpec.log(2),
                          alphabet=entry.alphabet)
print("program:")
print(entry.source)
print("templates: %d, flags: %d, minimum population n0 = %d" %
      (len(built.protocol.templates), len(built.protocol.flag_universe),
       built.n0))

n, x = built.n0, 4
layout = built.population_layout(n)
print("layout at n=%d: %d digits, %d per register, capacities %s" %
      (n, layout.base.digits, layout.base.k, layout.register_capacity))

trace, verdict = pb.run(built.protocol, {"x": x, "pad": n - x},
                        pb.RunPolicy(seed=3), built=built, record_events=True)
print("\nverdict for x=%d with %d agents: %s (%s) after %d interactions"
      % (x, n, verdict.value, verdict.reason, verdict.step))

for step, label, probe in (
    (None, "initialised", lambda c: is_initialised(c, n)),
    (None, "cleaned", lambda c: is_cleaned(c, n, entry.alphabet)),
):
    for k, cfg in enumerate(trace.iter_configs()):
        if probe(cfg):
            print("  %s at interaction %d" % (label, k))
            break

print("\nmachine checkpoints (instruction, registers):")
for ip, regs in checkpoint_registers(trace, built, layout.base):
    print("  ip=%d  regs=%s" % (ip, regs))
