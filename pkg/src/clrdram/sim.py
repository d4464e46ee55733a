"""Simulation driver: builds the memory system, runs cores against it,
and collects statistics.

Time is kept in integer ticks shared by both clock domains.  With a
4 GHz core and a 1200 MHz bus a core cycle is 3 ticks and a memory cycle
10.  A request leaving a core enters the controller on the next memory
cycle; returning data is usable on the first core cycle at or after the
memory cycle that delivered it.
"""

from __future__ import annotations

import csv
import json
import os
from dataclasses import dataclass, field
from fractions import Fraction

from .bank import NEVER, CommandKind
from .clr import RowModeTable
from .config import ConfigError, SimConfig
from .controller import MemoryController, MemRequest, RequestKind, build_refresh_pools
from .cpu import LLC, Core, gmean, weighted_speedup
from .energy import (
    CATEGORIES, EnergyModel, report as energy_report, write_command_log,
)
from .timing import RowMode, TimingParams, interpolated, timing_for
from .workload import (
    LINE, PageProfile, gen_mixed, GENERATORS, mpki, plan_placement, profile_pages, read_trace,
)

MC, HP = RowMode.MAX_CAPACITY, RowMode.HIGH_PERFORMANCE


class SimulationError(RuntimeError):
    pass


def mode_timings(cfg: SimConfig) -> dict[RowMode, TimingParams]:
    """Nanosecond timing of each row mode present in ``cfg``."""
    if not cfg.clr:
        return {MC: cfg.timing}
    return {
        MC: timing_for(MC, base=cfg.timing, overrides=cfg.mc_overrides),
        HP: timing_for(HP, cfg.early_termination, cfg.trefw_ms, cfg.timing, cfg.hp_overrides),
    }


class MemorySystem:
    """All channels of one configuration plus streaming energy accounting."""

    def __init__(self, cfg: SimConfig, table: RowModeTable, log: bool = False,
                 energy: bool = True):
        topo = cfg.topology
        self.account = energy
        self.cfg = cfg
        self.amap = cfg.amap()
        self.table = table
        self.timing_ns = mode_timings(cfg)
        bus = topo.bus_mhz
        self.timing_cycles = {m: t.cycles(bus) for m, t in self.timing_ns.items()}
        trefw = {m: t.tREFW for m, t in self.timing_ns.items()}
        trfc = {m: t.tRFC for m, t in self.timing_ns.items()}
        refresh_ns = {}
        self.controllers = []
        for ch in range(topo.channels):
            pools = []
            for r in range(topo.ranks_per_channel):
                rank_pools = build_refresh_pools(table, ch, r, trefw, trfc, bus)
                for p in rank_pools:
                    refresh_ns[(ch, r, p.mode)] = p.trfc_ns
                pools.append(rank_pools)
            self.controllers.append(MemoryController(ch, table, self.timing_cycles,
                                                     cfg.scheduler, pools, bus, log))
        ranks = [(ch, r) for ch in range(topo.channels) for r in range(topo.ranks_per_channel)]
        self.energy = EnergyModel(self.timing_ns, refresh_ns, cfg.power, topo.tck_ns,
                                  self.timing_cycles[MC].tBL, ranks)
        self.ledger = self.energy.new_ledger()
        self.cycle = 0

    @property
    def next_cycle(self) -> int:
        return min(mc.next_cycle for mc in self.controllers)

    def send(self, req: MemRequest, cycle: int) -> bool:
        if req.coord is None:
            req.coord = self.amap.decode(req.phys_addr)
        return self.controllers[req.coord.channel].enqueue(req, cycle)

    def can_accept(self, phys_addr: int, kind: RequestKind) -> bool:
        ch = self.amap.decode(phys_addr).channel
        return self.controllers[ch].can_accept(kind)

    def tick(self, cycle: int) -> tuple[list[MemRequest], bool]:
        """Advance every due channel to ``cycle``.

        Returns completed requests and whether a column command issued
        (which frees queue space).
        """
        done: list[MemRequest] = []
        column = False
        account = self.energy.account if self.account else None
        for mc in self.controllers:
            if mc.next_cycle > cycle:
                continue
            done.extend(mc.tick(cycle))
            cmd = mc.last_command
            if cmd is not None:
                if account is not None:
                    account(self.ledger, cmd)
                if cmd.kind is CommandKind.RD or cmd.kind is CommandKind.WR:
                    column = True
        self.cycle = cycle
        return done, column

    def busy(self) -> bool:
        return any(mc.busy() for mc in self.controllers)

    def log(self) -> list:
        out = []
        for mc in self.controllers:
            out.extend(mc.log or ())
        out.sort(key=lambda c: c.cycle)
        return out

    def finish(self, end_cycle: int):
        if self.account:
            self.energy.finish(self.ledger, max(end_cycle, self.ledger.cycle))
        for mc in self.controllers:
            mc.check_refresh(end_cycle)

    # -- counters ------------------------------------------------------------

    def counts(self) -> dict[str, int]:
        out = {k.name: 0 for k in CommandKind}
        for mc in self.controllers:
            for k, n in mc.counts.items():
                out[k.name] += n
        return out

    def refreshes(self) -> dict[str, int]:
        out = {}
        for mc in self.controllers:
            for pools in mc.pools:
                for p in pools:
                    out[p.mode.short] = out.get(p.mode.short, 0) + p.issued
        return out

    def sum(self, attr: str) -> int:
        return sum(getattr(mc, attr) for mc in self.controllers)


# -- workloads ---------------------------------------------------------------

def load_traces(cfg: SimConfig) -> list[list]:
    """Trace per core, read from files or synthesized from ``cfg.workload``."""
    wl = cfg.workload
    if wl.traces:
        return [read_trace(p) for p in wl.traces]
    footprint = int(wl.footprint_mb * (1 << 20))
    out = []
    for core in range(cfg.cpu.cores):
        seed = cfg.seed * 1009 + core
        if wl.kind == "mixed":
            out.append(gen_mixed(seed, wl.records, footprint, wl.bubbles, wl.write_ratio))
        else:
            out.append(GENERATORS[wl.kind](seed, wl.records, footprint, wl.bubbles,
                                           wl.write_ratio, page_size=cfg.page_size))
    return out


def placement_for(cfg: SimConfig, traces) -> tuple:
    profile = PageProfile()
    for core, trace in enumerate(traces):
        profile_pages(trace, cfg.page_size, core, profile)
    amap = cfg.amap()
    fraction = cfg.fraction if cfg.clr else 0.0
    plan = plan_placement(profile, fraction, amap, cfg.page_size)
    return plan, plan.mode_table(amap), profile


# -- full-system run -----------------------------------------------------------

def clock_ratio(core_mhz: float, bus_mhz: float) -> tuple[int, int]:
    """(ticks per core cycle, ticks per memory cycle)."""
    r = Fraction(str(core_mhz)) / Fraction(str(bus_mhz))
    return r.denominator, r.numerator


class Simulation:
    def __init__(self, cfg: SimConfig, traces, log: bool | None = None):
        if not traces:
            raise ConfigError("no traces")
        self.cfg = cfg
        self.traces = traces
        self.plan, self.table, self.profile = placement_for(cfg, traces)
        self.mem = MemorySystem(cfg, self.table, cfg.commands if log is None else log)
        cpu = cfg.cpu
        n = len(traces)
        self.llc = LLC(cpu.llc_kb * 1024, cpu.llc_ways, LINE, n)
        replay = n > 1 and cpu.quota is not None
        for t in traces:
            if not replay and sum(r.bubbles + 1 for r in t) <= cpu.warmup:
                raise ConfigError("trace shorter than the warm-up; lower cpu.warmup")
        self.cores = [
            Core(i, t, self.llc, width=cpu.width, window=cpu.window, mshrs=cpu.mshrs,
                 llc_latency=cpu.llc_latency, warmup=cpu.warmup, quota=cpu.quota,
                 replay=replay, translate=self._translator(i))
            for i, t in enumerate(traces)
        ]
        self.pc, self.pm = clock_ratio(cpu.core_mhz, cfg.topology.bus_mhz)
        self.core_cycle = 0
        self.replay = replay

    def _translator(self, core: int):
        shift = self.cfg.page_size.bit_length() - 1
        mask = self.cfg.page_size - 1
        frames = self.plan.frames
        base = core << 40

        def translate(addr: int) -> int:
            return (frames[base | (addr >> shift)] << shift) | (addr & mask)
        return translate

    def send(self, req: MemRequest, core_cycle: int) -> bool:
        return self.mem.send(req, core_cycle * self.pc // self.pm + 1)

    def run(self) -> "Simulation":
        cores = self.cores
        mem = self.mem
        pc, pm = self.pc, self.pm
        limit = self.cfg.max_cycles or NEVER
        cc = 0
        while True:
            nc = NEVER
            all_done = True
            for core in cores:
                if not core.done:
                    all_done = False
                c = max(cc, core.wake) if core.stalled else cc
                if c < nc:
                    nc = c
            if all_done:
                break
            nm = mem.next_cycle
            if nm >= NEVER and nc >= NEVER:
                raise SimulationError("deadlock: no core or memory event pending")
            if nm * pm <= nc * pc:
                if nm > limit:
                    raise SimulationError(f"exceeded max_cycles={limit}")
                done, column = mem.tick(nm)
                # core cycles before this memory edge are in the past now
                cc = max(cc, -(-nm * pm // pc))
                for req in done:
                    if req.kind is RequestKind.READ:
                        cores[req.core_id].on_complete(
                            req.tag, -(-req.completion_cycle * pm // pc))
                if column:
                    for core in cores:
                        core.notify()
            else:
                cc = nc
                for core in cores:
                    if core.stalled and core.wake > cc:
                        continue
                    core.stalled = False
                    core.tick(cc, self)
                cc += 1
        self.core_cycle = cc
        end = max(-(-cc * pc // pm), mem.cycle + 1)
        mem.finish(end)
        self.end_cycle = end
        return self

    def ipcs(self) -> list[float]:
        return [c.ipc() for c in self.cores]


@dataclass
class StatsReport:
    name: str
    config: dict
    metadata: dict
    ipc: list
    instructions: list
    mpki: list
    weighted_speedup: float | None
    alone_ipc: list | None
    mem_cycles: int
    row_hits: int
    row_misses: int
    row_conflicts: int
    commands: dict
    refreshes: dict
    reads: int
    writes: int
    avg_read_latency: float
    capacity: float
    open_rows_end: int
    energy: dict
    extra: dict = field(default_factory=dict)

    @property
    def performance(self) -> float:
        """IPC for one core, weighted speedup for several."""
        if len(self.ipc) == 1:
            return self.ipc[0]
        return self.weighted_speedup

    @property
    def refresh_power(self) -> float:
        return self.energy["refresh_energy"] / self.energy["elapsed"]

    def row(self) -> dict:
        r = {
            "run": self.name,
            "clr": self.config["clr"],
            "hp_fraction": self.config["hp_fraction"],
            "trefw_ms": self.config["trefw_ms"],
            "capacity_pct": self.capacity * 100.0,
            "ipc": ";".join(repr(v) for v in self.ipc),
            "weighted_speedup": "" if self.weighted_speedup is None
            else repr(self.weighted_speedup),
            "mem_cycles": self.mem_cycles,
            "reads": self.reads,
            "writes": self.writes,
            "avg_read_latency": repr(self.avg_read_latency),
            "row_hits": self.row_hits,
            "row_misses": self.row_misses,
            "row_conflicts": self.row_conflicts,
        }
        for k in ("ACT", "PRE", "RD", "WR", "REF"):
            r[f"n_{k}"] = self.commands[k]
        r["ref_MC"] = self.refreshes.get("MC", 0)
        r["ref_HP"] = self.refreshes.get("HP", 0)
        for k in CATEGORIES:
            r[k] = repr(self.energy[k])
        r["total_energy"] = repr(self.energy["total_energy"])
        r["avg_power"] = repr(self.energy["avg_power"])
        for k, v in sorted(self.extra.items()):
            r[k] = repr(v) if isinstance(v, float) else v
        return r

    def to_dict(self) -> dict:
        return {
            "name": self.name, "config": self.config, "metadata": self.metadata,
            "ipc": self.ipc, "instructions": self.instructions, "mpki": self.mpki,
            "weighted_speedup": self.weighted_speedup, "alone_ipc": self.alone_ipc,
            "mem_cycles": self.mem_cycles, "row_hits": self.row_hits,
            "row_misses": self.row_misses, "row_conflicts": self.row_conflicts,
            "commands": self.commands, "refreshes": self.refreshes, "reads": self.reads,
            "writes": self.writes, "avg_read_latency": self.avg_read_latency,
            "capacity": self.capacity, "open_rows_end": self.open_rows_end,
            "energy": self.energy, "extra": self.extra,
        }


def _metadata(cfg: SimConfig, sim: Simulation) -> dict:
    t = sim.mem.timing_ns
    return {
        "timing_ns": {m.short: {k: t[m].as_dict()[k] for k in ("tRCD", "tRAS", "tRP", "tWR",
                                                                 "tRFC", "tREFW")}
                      for m in t},
        "interpolated_timing": cfg.clr and interpolated(cfg.trefw_ms),
        "early_termination": cfg.early_termination if cfg.clr else None,
        "placement": "hottest pages by exact profile into the lowest rows of every bank",
        "trace_addresses": "virtual pages remapped by the placement plan",
        "multicore_replay": sim.replay,
        "clock_ticks": {"core": sim.pc, "memory": sim.pm},
        "refresh_bins": 8192,
    }


def _report(cfg: SimConfig, sim: Simulation, name: str, alone: list | None) -> StatsReport:
    mem = sim.mem
    ipcs = sim.ipcs()
    ws = None
    if alone is not None:
        ws = weighted_speedup(ipcs, alone)
    elif len(ipcs) == 1:
        ws = 1.0
    reads_done = mem.sum("reads_done")
    instr = [c.retired for c in sim.cores]
    return StatsReport(
        name=name,
        config=cfg.to_dict(),
        metadata=_metadata(cfg, sim),
        ipc=ipcs,
        instructions=instr,
        mpki=[mpki(sim.llc.misses[i], instr[i]) for i in range(len(instr))],
        weighted_speedup=ws,
        alone_ipc=alone,
        mem_cycles=sim.end_cycle,
        row_hits=mem.sum("row_hits"),
        row_misses=mem.sum("row_misses"),
        row_conflicts=mem.sum("row_conflicts"),
        commands=mem.counts(),
        refreshes=mem.refreshes(),
        reads=reads_done,
        writes=mem.sum("writes_done"),
        avg_read_latency=mem.sum("read_latency_sum") / reads_done if reads_done else 0.0,
        capacity=sim.table.capacity_fraction(),
        open_rows_end=sum(mc.open_banks() for mc in mem.controllers),
        energy=energy_report(mem.ledger),
    )


def run(cfg: SimConfig, traces=None, name: str = "run", alone: list | None = None,
        keep: bool = False):
    """Simulate ``cfg`` and return its :class:`StatsReport`.

    Several traces run as a multiprogrammed mix; unless ``alone`` gives
    the solo IPCs, each trace is also run by itself for the weighted
    speedup.  With ``keep`` the finished :class:`Simulation` is returned
    as well.
    """
    traces = traces if traces is not None else load_traces(cfg)
    sim = Simulation(cfg, traces).run()
    if alone is None and len(traces) > 1:
        alone = [run(cfg, [t], name=f"{name}-alone{i}").ipc[0] for i, t in enumerate(traces)]
    rep = _report(cfg, sim, name, alone)
    check_report(rep)
    return (rep, sim) if keep else rep


def check_report(rep: StatsReport):
    c = rep.commands
    if c["ACT"] != c["PRE"] + rep.open_rows_end:
        raise SimulationError(
            f"ACT/PRE imbalance: {c['ACT']} ACT, {c['PRE']} PRE, {rep.open_rows_end} open")
    if rep.row_hits + rep.row_misses + rep.row_conflicts != c["RD"] + c["WR"]:
        raise SimulationError("row outcome counts disagree with column commands")
    if max(rep.ipc) > rep.config["cpu"]["width"]:
        raise SimulationError("IPC above issue width")


def run_name(cfg: SimConfig) -> str:
    if not cfg.clr:
        return "baseline"
    name = f"clr-x{cfg.hp_fraction:g}"
    if cfg.trefw_ms != 64.0:
        name += f"-r{cfg.trefw_ms:g}"
    return name


def baseline_of(cfg: SimConfig) -> SimConfig:
    return cfg.replace(clr=False, hp_fraction=0.0, trefw_ms=64.0)


def sweep_fraction(cfg: SimConfig, fractions=(0, 25, 50, 75, 100), traces=None,
                   baseline: bool = True) -> list[StatsReport]:
    """Baseline run (optional) followed by one run per HP percentage."""
    traces = traces if traces is not None else load_traces(cfg)
    points = [baseline_of(cfg)] if baseline else []
    points += [cfg.replace(clr=True, hp_fraction=float(f)) for f in fractions]
    reports = [run(p, traces, run_name(p)) for p in points]
    return _relative(reports)


def sweep_refresh(cfg: SimConfig, trefws=(64, 114, 124, 184, 194), traces=None,
                  baseline: bool = True) -> list[StatsReport]:
    """Baseline (optional) then all-HP runs at each refresh window (ms)."""
    traces = traces if traces is not None else load_traces(cfg)
    points = [baseline_of(cfg)] if baseline else []
    points += [cfg.replace(clr=True, hp_fraction=100.0, trefw_ms=float(t)) for t in trefws]
    reports = [run(p, traces, run_name(p)) for p in points]
    return _relative(reports)


def _relative(reports: list[StatsReport]) -> list[StatsReport]:
    base = next((r for r in reports if not r.config["clr"]), None)
    if base is None:
        return reports
    for r in reports:
        r.extra["speedup"] = r.performance / base.performance
        r.extra["refresh_energy_reduction"] = 1.0 - r.refresh_power / base.refresh_power
        r.extra["power_ratio"] = r.energy["avg_power"] / base.energy["avg_power"]
    return reports


def geomean_speedup(reports: list[StatsReport]) -> float:
    return gmean([r.extra["speedup"] for r in reports])


# -- open-loop memory driver --------------------------------------------------

@dataclass
class MemoryRun:
    mem: MemorySystem
    end_cycle: int
    completed: int

    @property
    def log(self):
        return self.mem.log()


def run_memory(cfg: SimConfig, requests, until: int | None = None, log: bool = True,
               table: RowModeTable | None = None, energy: bool = True) -> MemoryRun:
    """Feed ``(arrival_cycle, kind, phys_addr)`` requests straight to the controllers.

    Requests wait in arrival order while their queue is full.  The run
    ends once every request completed, or at memory cycle ``until``.
    Rows follow ``table`` or, by default, ``cfg.hp_fraction`` applied to
    the lowest rows of every bank.  ``energy=False`` skips the energy
    ledger (faster when only the command log matters).
    """
    if table is None:
        amap = cfg.amap()
        table = RowModeTable.for_map(amap)
        if cfg.clr:
            table.set_fraction(cfg.fraction)
    mem = MemorySystem(cfg, table, log, energy)
    decode = mem.amap.decode
    pending = [(a, k, x, decode(x)) for a, k, x in sorted(requests, key=lambda r: r[0])]
    ctrls = mem.controllers
    i = 0
    n = len(pending)
    completed = 0
    m = 0
    stop = until if until is not None else NEVER
    limit = cfg.max_cycles or NEVER
    while m < stop:
        blocked = False
        while i < n and pending[i][0] <= m:
            _, kind, addr, coord = pending[i]
            mc = ctrls[coord.channel]
            if not mc.can_accept(kind):
                blocked = True
                break
            mc.enqueue(MemRequest(kind, addr, coord), m)
            i += 1
        done, _ = mem.tick(m)
        completed += len(done)
        if i == n and until is None and not mem.busy():
            m += 1
            break
        nxt = mem.next_cycle
        if i < n and not blocked:
            nxt = min(nxt, max(pending[i][0], m + 1))
        m = max(nxt, m + 1)
        if m > limit:
            raise SimulationError(f"exceeded max_cycles={limit}")
    end = min(m, stop) if until is not None else m
    mem.finish(end)
    return MemoryRun(mem, end, completed)


def requests_from_trace(trace, amap_size: int, spacing: float = 1.0) -> list[tuple]:
    """Open-loop requests: arrivals advance by ``spacing`` cycles per bubble + 1."""
    out = []
    t = 0.0
    for r in trace:
        t += (r.bubbles + 1) * spacing
        kind = RequestKind.WRITE if r.write else RequestKind.READ
        out.append((int(t), kind, (r.addr % amap_size) // LINE * LINE))
    return out


# -- outputs -------------------------------------------------------------------

def write_outputs(reports: list[StatsReport], out_dir, sims: dict | None = None) -> None:
    """stats.csv, energy.csv and report.json (plus commands csv when given)."""
    os.makedirs(out_dir, exist_ok=True)
    rows = [r.row() for r in reports]
    header: list[str] = []
    for row in rows:
        for k in row:
            if k not in header:
                header.append(k)
    with open(os.path.join(out_dir, "stats.csv"), "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=header, restval="")
        w.writeheader()
        w.writerows(rows)
    with open(os.path.join(out_dir, "energy.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["run", *CATEGORIES, "total_energy", "elapsed", "avg_power"])
        for r in reports:
            e = r.energy
            w.writerow([r.name, *(repr(e[c]) for c in CATEGORIES), repr(e["total_energy"]),
                        repr(e["elapsed"]), repr(e["avg_power"])])
    with open(os.path.join(out_dir, "report.json"), "w") as fh:
        json.dump([r.to_dict() for r in reports], fh, indent=1, sort_keys=True)
        fh.write("\n")
    for name, sim in (sims or {}).items():
        fname = "commands.csv" if len(sims) == 1 else f"commands-{name}.csv"
        write_command_log(sim.mem.log(), os.path.join(out_dir, fname))


__all__ = [
    "MemorySystem", "Simulation", "StatsReport", "MemoryRun", "SimulationError", "run",
    "run_memory", "sweep_fraction", "sweep_refresh", "load_traces", "placement_for",
    "mode_timings", "requests_from_trace", "write_outputs", "geomean_speedup", "clock_ratio",
]
