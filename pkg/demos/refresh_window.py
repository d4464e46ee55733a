# Stretching the refresh window of fast rows
#
# Fast rows hold their charge longer, so they can be refreshed less often
# at the cost of somewhat slower activation.  The sweep below keeps every
# row in high-performance mode and varies the refresh window.

# In[1]:

from clrdram import CpuConfig, SimConfig, WorkloadConfig, sweep_refresh

cfg = SimConfig(cpu=CpuConfig(warmup=5000),
                workload=WorkloadConfig(kind="random", records=20000, footprint_mb=256,
                                        bubbles="poisson:10"))
reports = sweep_refresh(cfg, (64, 114, 124, 184, 194))

# In[2]:

print(f"{'run':>14} {'tRCD ns':>8} {'tRAS ns':>8} {'IPC':>7} {'REF':>5} {'refresh cut':>12}")
for r in reports:
    t = r.metadata["timing_ns"].get("HP", r.metadata["timing_ns"]["MC"])
    print(f"{r.name:>14} {t['tRCD']:8.2f} {t['tRAS']:8.2f} {r.ipc[0]:7.3f} "
          f"{r.commands['REF']:5d} {r.extra['refresh_energy_reduction'] * 100:11.1f}%")

# A run this short sees few refresh commands, so IPC mostly reflects the
# slower tRCD and tRAS at long windows.  For the steady-state refresh
# energy, drive the memory for a fixed 400 ms with sparse traffic instead.

# In[3]:

from clrdram import gen_random, requests_from_trace, run_memory

end = 400 * 1_200_000
reqs = requests_from_trace(gen_random(0, 2000, 1 << 28, 0), SimConfig().amap().size,
                           spacing=end / 2000)


def refresh_power(c):
    led = run_memory(c, reqs, until=end, log=False).mem.ledger
    return led.refresh_energy / led.elapsed


base = refresh_power(SimConfig(clr=False))
for w in (64.0, 114.0, 194.0):
    cut = 1 - refresh_power(SimConfig(hp_fraction=100.0, trefw_ms=w)) / base
    print(f"tREFW {w:5.0f} ms  refresh energy cut {cut * 100:.1f}%")
