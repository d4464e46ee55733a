# Trading capacity for latency
#
# Rows can run in high-performance mode at half their capacity.  This
# script sweeps the share of such rows on a random-access trace and prints
# IPC, capacity and refresh energy next to a conventional DDR4 baseline.

# In[1]:

from clrdram import CpuConfig, SimConfig, WorkloadConfig, sweep_fraction

cfg = SimConfig(cpu=CpuConfig(warmup=5000),
                workload=WorkloadConfig(kind="random", records=8000, footprint_mb=256,
                                        bubbles="poisson:10"))

# One run per fraction.  All runs share one trace, and the first row is
# the baseline that the speedups are relative to.

# In[2]:

reports = sweep_fraction(cfg, (0, 25, 50, 75, 100))

print(f"{'run':>10} {'capacity':>9} {'IPC':>7} {'speedup':>8} {'row hits':>9}")
for r in reports:
    hits = r.row_hits / (r.row_hits + r.row_misses + r.row_conflicts)
    print(f"{r.name:>10} {r.capacity * 100:8.1f}% {r.ipc[0]:7.3f} "
          f"{r.extra['speedup']:8.3f} {hits * 100:8.1f}%")

# Random traffic hits a closed or conflicting row on nearly every access,
# so the shorter activate and precharge timings of the fast rows show up
# almost one for one in IPC.  A streaming trace gains far less.

# In[3]:

stream = cfg.replace(workload=WorkloadConfig(kind="stream", records=8000, footprint_mb=256,
                                             bubbles="poisson:10"))
for r in sweep_fraction(stream, (0, 100)):
    print(f"{r.name:>10} speedup {r.extra['speedup']:.3f}")
