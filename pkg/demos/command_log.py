# Reading a command log
#
# Every run can log the DRAM commands it issued.  The log is enough to
# recompute energy and to inspect how the scheduler interleaves banks.

# In[1]:

import collections

import numpy as np

from clrdram import SimConfig, gen_mixed, requests_from_trace, run_memory

cfg = SimConfig(hp_fraction=50.0)
trace = gen_mixed(1, 5000, 1 << 26, "poisson:3", 0.3)
res = run_memory(cfg, requests_from_trace(trace, cfg.amap().size))
log = res.log
print(len(log), "commands over", res.end_cycle, "memory cycles")

# Command mix, split by the mode of the row each command touched.

# In[2]:

mix = collections.Counter((c.kind.name, c.mode.short) for c in log)
for (kind, mode), n in sorted(mix.items()):
    print(f"{kind:>4} {mode}: {n}")

# Gap between an ACT and the first column command to the same bank.  Fast
# rows show up at the smaller value.

# In[3]:

last_act = {}
gaps = collections.defaultdict(list)
for c in log:
    bank = c.coord[:4]
    if c.kind.name == "ACT":
        last_act[bank] = c
    elif c.kind.name in ("RD", "WR") and bank in last_act:
        act = last_act.pop(bank)
        gaps[act.mode.short].append(c.cycle - act.cycle)
for mode, g in sorted(gaps.items()):
    print(mode, "ACT to column, cycles: min", min(g), "median", int(np.median(g)))

# Replaying the log through the energy model gives the same totals as
# the streaming ledger kept during the run.

# In[4]:

again = res.mem.energy.replay(log, res.end_cycle)
print("streamed", res.mem.ledger.total, "replayed", again.total)
