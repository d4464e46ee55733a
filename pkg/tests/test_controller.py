import numpy as np
import pytest

import oracles
from clrdram.addrmap import DramCoord
from clrdram.bank import CommandKind
from clrdram.clr import RowModeTable
from clrdram.controller import (
    MemoryController, MemRequest, RefreshMissed, RefreshPool, RequestKind, SchedulerConfig,
    build_refresh_pools, refresh_tick,
)
from clrdram.timing import DramTopology, RowMode, TimingParams, timing_for

ACT, PRE, RD, WR, REF = CommandKind
MC, HP = RowMode.MAX_CAPACITY, RowMode.HIGH_PERFORMANCE
TOPO = DramTopology()
BASE = TimingParams().cycles()


def controller(cap=16, pools=None, table=None, timings=None):
    table = table or RowModeTable(TOPO)
    return MemoryController(0, table, timings or {MC: BASE}, SchedulerConfig(cap=cap),
                            pools, log=True)


def read(row, col=0, bank=0, bg=0, kind=RequestKind.READ):
    return MemRequest(kind, 0, DramCoord(0, 0, bg, bank, row, col))


def drive(mc, until, start=0):
    done = []
    c = start
    while c < until:
        done.extend(mc.tick(c))
        c = max(mc.next_cycle, c + 1)
    return done


def kinds(mc):
    return [(c.kind.name, c.coord.row) for c in mc.log]


def test_enqueue_occupancy_and_backpressure():
    mc = controller()
    assert mc.enqueue(read(1), 0)
    assert mc.occupancy == 1
    for i in range(63):
        assert mc.enqueue(read(i, bank=i % 4), 0)
    assert not mc.can_accept(RequestKind.READ)
    assert not mc.enqueue(read(5), 0)
    assert mc.can_accept(RequestKind.WRITE)


def test_same_row_requests_are_hits():
    mc = controller()
    mc.enqueue(read(3, 0), 0)
    mc.enqueue(read(3, 1), 0)
    done = drive(mc, 500)
    assert [r.outcome for r in done] == ["miss", "hit"]
    assert mc.row_hits == 1 and mc.row_misses == 1


def test_hit_preferred_over_older_miss():
    mc = controller()
    mc.enqueue(read(5), 0)
    drive(mc, 40)                               # row 5 open
    mc.enqueue(read(9), 40)                     # older miss
    mc.enqueue(read(5, 1), 40)                  # younger hit
    drive(mc, 2000, 40)
    assert kinds(mc)[2] == ("RD", 5)
    assert kinds(mc)[3] == ("PRE", 5)


@pytest.mark.parametrize("cap,want", [
    (2, [("ACT", 5), ("RD", 5), ("RD", 5), ("PRE", 5), ("ACT", 9), ("RD", 9), ("PRE", 9),
         ("ACT", 5), ("RD", 5), ("RD", 5)]),
    (16, [("ACT", 5), ("RD", 5), ("RD", 5), ("RD", 5), ("RD", 5), ("PRE", 5), ("ACT", 9),
          ("RD", 9)]),
])
def test_hit_cap_script(cap, want):
    # A(row 5), B(row 9), C, D, E (row 5), all queued at once
    mc = controller(cap=cap)
    for row, col in ((5, 0), (9, 0), (5, 1), (5, 2), (5, 3)):
        mc.enqueue(read(row, col), 0)
    drive(mc, 600)
    assert kinds(mc)[:len(want)] == want


def test_cap_fairness_property():
    rng = np.random.default_rng(3)
    mc = controller(cap=4)
    for i in range(60):
        mc.enqueue(read(int(rng.integers(0, 3)), int(rng.integers(0, 128))), 0)
    served = []
    orig = mc._retire

    def spy(req, b):
        # hits served while an older request to another row of the bank waits
        older = [q for q in mc.reads[b] if q.seq < req.seq and q.coord.row != req.coord.row]
        served.append((req.coord.row, bool(older), mc.banks[b].streak))
        orig(req, b)
    mc._retire = spy
    drive(mc, 20000)
    assert mc.reads_done == 60
    for row, older_waiting, streak in served:
        if older_waiting:
            assert streak <= 4


def test_timeout_precharge():
    mc = controller()
    mc.enqueue(read(5), 0)
    drive(mc, 2000)
    rd = next(c for c in mc.log if c.kind is RD)
    pre = mc.log[-1]
    assert pre.kind is PRE
    timeout = oracles.cyc(120.0)
    assert pre.cycle == max(rd.cycle + timeout, mc.log[0].cycle + BASE.tRAS)


def test_no_timeout_while_requests_pending():
    mc = controller()
    mc.enqueue(read(5), 0)
    drive(mc, 30)
    assert mc.banks[0].open_row == 5
    mc.enqueue(read(5, 3), 30)
    drive(mc, 100, 30)
    assert all(c.kind is not PRE for c in mc.log)


def test_read_completion_latency():
    mc = controller()
    req = read(2)
    mc.enqueue(req, 0)
    drive(mc, 200)
    rd = next(c for c in mc.log if c.kind is RD)
    assert req.completion_cycle == rd.cycle + 16 + 4
    assert req.completion_cycle >= req.arrival_cycle


def test_conflict_classification():
    mc = controller()
    mc.enqueue(read(2), 0)
    drive(mc, 60)
    mc.enqueue(read(7), 60)
    done = drive(mc, 400, 60)
    assert done[-1].outcome == "conflict"


def test_writes_drain_when_no_reads():
    mc = controller()
    for i in range(5):
        mc.enqueue(read(1, i, kind=RequestKind.WRITE), 0)
    drive(mc, 500)
    assert mc.writes_done == 5
    assert [c.kind for c in mc.log].count(WR) == 5


def test_write_watermark():
    mc = controller()
    for i in range(48):
        mc.enqueue(read(1, i % 128, bank=1, kind=RequestKind.WRITE), 0)
    for i in range(10):
        mc.enqueue(read(2, i), 0)
    mc.tick(0)
    assert mc.write_mode                        # 48 >= 75% of 64


def _pools(fraction, trefw_hp=64.0):
    table = RowModeTable(TOPO).set_fraction(fraction)
    tr = {MC: 64.0, HP: trefw_hp}
    trfc = {MC: 550.0, HP: timing_for(HP).tRFC}
    return table, build_refresh_pools(table, 0, 0, tr, trfc, 1200.0)


def test_pool_spacing_is_trefi():
    table, pools = _pools(0.0)
    (pool,) = pools
    assert pool.mode is MC
    spacing_us = pool.trefi_cycles / 1200.0
    assert spacing_us == pytest.approx(64e3 / 8192, rel=1e-3)
    mc = controller(pools=[pools], table=table)
    drive(mc, 5 * pool.trefi_cycles + 10)
    refs = [c.cycle for c in mc.log if c.kind is REF]
    assert len(refs) == 5
    assert np.all(np.diff(refs) == pool.trefi_cycles)


def test_pool_trfc_scales_with_share():
    _, pools = _pools(0.5)
    mc_pool, hp_pool = pools
    assert mc_pool.n_rows == hp_pool.n_rows
    assert mc_pool.trfc_ns == pytest.approx(550.0 / 2)
    assert hp_pool.trfc_ns == pytest.approx(550.0 * 0.44667594 / 2, rel=1e-6)
    _, (full,) = _pools(1.0)
    assert full.trfc_ns / 550.0 == pytest.approx(0.447, abs=1e-3)


def test_refresh_rate_ratio():
    cycles = 20_000_000
    counts = []
    for w in (64.0, 194.0):
        table, pools = _pools(1.0, w)
        t = {MC: BASE, HP: timing_for(HP, True, w).cycles()}
        mc = controller(pools=[pools], table=table, timings=t)
        drive(mc, cycles)
        counts.append(sum(c.kind is REF for c in mc.log))
    assert counts[1] == pytest.approx(counts[0] * 64 / 194, abs=1)


def test_no_pools_no_refresh():
    mc = controller(pools=None)
    drive(mc, 100_000)
    assert mc.log == []


def test_refresh_missed_raises():
    rows = np.arange(8192, dtype=np.int32)
    pool = RefreshPool(MC, 64.0, 550.0, rows, rows.size, 1200.0)
    assert refresh_tick([pool], pool.trefi_cycles) is pool
    with pytest.raises(RefreshMissed):
        refresh_tick([pool], pool.trefw_cycles + 1)


def test_scheduler_config_validation():
    for kw in ({"cap": 0}, {"row_timeout_ns": 0}, {"queue_depth": 0},
               {"write_low": 0.9, "write_high": 0.5}, {"policy": "FCFS"}):
        with pytest.raises(ValueError):
            SchedulerConfig(**kw)


def test_emitted_commands_pass_oracle():
    rng = np.random.default_rng(7)
    table, pools = _pools(0.5)
    t = {MC: timing_for(MC).cycles(), HP: timing_for(HP).cycles()}
    mc = controller(pools=[pools], table=table, timings=t)
    c = 0
    half = TOPO.rows_per_bank // 2
    for i in range(3000):
        kind = RequestKind.WRITE if rng.random() < 0.3 else RequestKind.READ
        row = int(rng.integers(half - 4, half + 4))
        req = MemRequest(kind, 0, DramCoord(0, 0, int(rng.integers(4)), int(rng.integers(4)),
                                            row, int(rng.integers(128))))
        while not mc.enqueue(req, c):
            mc.tick(c)
            c += 1
        mc.tick(c)
        c += 1
    drive(mc, c + 20000, c)
    assert mc.reads_done + mc.writes_done == 3000
    v = oracles.check_log(mc.log, table.row_modes(), TOPO, clr=True)
    assert v == []
