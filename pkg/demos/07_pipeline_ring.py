# Ring forwarding of completed bands between nodes, one message per node and
# step, always to the successor.

from collections import defaultdict

from tpilu import pipeline_simulate

tr = pipeline_simulate(bands=6, nodes=4)
print("messages:", len(tr), "(bands x (nodes - 1) =", 6 * 3, ")")
print("band completed at step:", tr.completed_at)

steps = defaultdict(dict)
for m in tr.messages:
    steps[m.timestep][m.sender] = m.band

# one column per node: the band it forwards at that step
print("\nstep  " + "  ".join(f"n{i}" for i in range(tr.nodes)))
for t in sorted(steps):
    row = [f"b{steps[t][i]}" if i in steps[t] else " ." for i in range(tr.nodes)]
    print(f"{t:>4}  " + "  ".join(row))

for nodes in (2, 4, 8):
    tr = pipeline_simulate(16, nodes)
    last = tr.messages[-1].timestep + 1 if tr.messages else 0
    print(f"16 bands on {nodes} nodes: {len(tr)} messages over {last} steps")
