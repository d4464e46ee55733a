"""Memory controller: request queues, FR-FCFS-Cap, timeout row policy,
and refresh scheduling over per-mode refresh pools.

One :class:`MemoryController` drives one channel.  It is advanced by
calling :meth:`MemoryController.tick` with a non-decreasing cycle; the
caller may skip ahead to :attr:`MemoryController.next_cycle` because no
command can become legal, and no request can complete, before it.
"""

from __future__ import annotations

import enum
import heapq
from dataclasses import dataclass

import numpy as np

from .addrmap import DramCoord
from .bank import (
    NEVER, CommandKind, DataBus, DramCommand, RankState, issue, min_cycle_for,
)
from .clr import RowModeTable
from .timing import REFRESH_BINS, CycleTimings, RowMode, ns_to_cycles

ACT, PRE, RD, WR, REF = (CommandKind.ACT, CommandKind.PRE, CommandKind.RD,
                         CommandKind.WR, CommandKind.REF)


class RequestKind(enum.IntEnum):
    READ = 0
    WRITE = 1


class RefreshMissed(RuntimeError):
    """A refresh bin was not refreshed within its pool's window."""


@dataclass(slots=True, eq=False)
class MemRequest:
    kind: RequestKind
    phys_addr: int
    coord: DramCoord | None = None
    core_id: int = 0
    arrival_cycle: int = 0
    completion_cycle: int | None = None
    bank_index: int = 0
    seq: int = 0
    needed_act: bool = False
    needed_pre: bool = False
    outcome: str | None = None
    tag: object = None

    @property
    def is_write(self) -> bool:
        return self.kind is RequestKind.WRITE


@dataclass(frozen=True)
class SchedulerConfig:
    policy: str = "FR-FCFS-Cap"
    cap: int = 16
    row_timeout_ns: float = 120.0
    queue_depth: int = 64
    write_high: float = 0.75
    write_low: float = 0.25

    def __post_init__(self):
        if self.policy != "FR-FCFS-Cap":
            raise ValueError(f"unsupported scheduling policy {self.policy!r}")
        if self.cap < 1:
            raise ValueError("cap must be >= 1")
        if self.row_timeout_ns <= 0:
            raise ValueError("row timeout must be positive")
        if self.queue_depth < 1:
            raise ValueError("queue depth must be >= 1")
        if not 0 <= self.write_low <= self.write_high <= 1:
            raise ValueError("write watermarks must satisfy 0 <= low <= high <= 1")


class RefreshPool:
    """Rows of one rank that share a refresh window and refresh latency.

    The pool's rows are split into ``bins`` contiguous chunks in row
    order.  One REF refreshes one chunk; chunk ``k % bins`` is due at
    cycle ``(k + 1) * trefi``.  ``trefi`` is shortened by a guard band so
    that a REF delayed by draining the rank still lands within the
    window.  A REF occupies the rank for the pool's tRFC, which scales
    with the share of the rank's rows the pool holds.
    """

    def __init__(self, mode: RowMode, trefw_ms: float, trfc_full_ns: float,
                 rows: np.ndarray, rows_in_rank: int, bus_mhz: float,
                 guard_cycles: int = 0, bins: int = REFRESH_BINS):
        self.mode = mode
        self.trefw_ms = trefw_ms
        self.rows = np.asarray(rows)
        self.n_rows = int(self.rows.size)
        self.bins = bins
        self.trfc_ns = trfc_full_ns * self.n_rows / rows_in_rank
        self.trfc_cycles = ns_to_cycles(self.trfc_ns, bus_mhz)
        self.trefw_cycles = ns_to_cycles(trefw_ms * 1e6, bus_mhz)
        self.trefi_cycles = (self.trefw_cycles - guard_cycles) // bins
        if self.trefi_cycles <= 0:
            raise ValueError("refresh guard leaves no room for the refresh interval")
        self.next_index = 1
        self.next_slot = self.trefi_cycles if self.n_rows else NEVER
        self.last = [0] * bins
        self.issued = 0

    @property
    def current_bin(self) -> int:
        return (self.next_index - 1) % self.bins

    def due(self, cycle: int) -> bool:
        return cycle >= self.next_slot

    def deadline(self) -> int:
        return self.last[self.current_bin] + self.trefw_cycles

    def mark_issued(self, cycle: int) -> int:
        b = self.current_bin
        self.last[b] = cycle
        self.issued += 1
        self.next_index += 1
        self.next_slot = self.next_index * self.trefi_cycles
        return b

    def row_bins(self) -> np.ndarray:
        """Bin of every pool row, aligned with :attr:`rows`."""
        return np.arange(self.n_rows, dtype=np.int64) * self.bins // max(self.n_rows, 1)

    def bin_rows(self, b: int) -> np.ndarray:
        lo = -(-b * self.n_rows // self.bins)
        hi = -(-(b + 1) * self.n_rows // self.bins)
        return self.rows[lo:hi]


def build_refresh_pools(table: RowModeTable, channel: int, rank: int,
                        trefw_ms: dict, trfc_ns: dict, bus_mhz: float,
                        guard_cycles: int | None = None) -> list[RefreshPool]:
    """Split one rank's rows into an MC pool and an HP pool (empty pools dropped).

    ``trefw_ms`` and ``trfc_ns`` map each :class:`RowMode` to the window
    and the full-rank refresh latency of that mode.
    """
    hp = table.hp_mask_for_rank(channel, rank)
    rows_in_rank = hp.size
    if guard_cycles is None:
        guard_cycles = 2 * max(ns_to_cycles(v, bus_mhz) for v in trfc_ns.values()) + 256
    pools = []
    for mode, mask in ((RowMode.MAX_CAPACITY, ~hp), (RowMode.HIGH_PERFORMANCE, hp)):
        rows = np.flatnonzero(mask).astype(np.int32)
        if rows.size:
            pools.append(RefreshPool(mode, trefw_ms[mode], trfc_ns[mode], rows,
                                     rows_in_rank, bus_mhz, guard_cycles))
    return pools


def refresh_tick(pools: list[RefreshPool], cycle: int) -> RefreshPool | None:
    """The pool whose REF is due at ``cycle`` (earliest slot first), if any.

    Raises :class:`RefreshMissed` when a due bin is past its window.
    """
    due = None
    for pool in pools:
        if pool.due(cycle):
            if cycle > pool.deadline():
                raise RefreshMissed(
                    f"{pool.mode.short} bin {pool.current_bin} not refreshed by cycle "
                    f"{pool.deadline()} (now {cycle})"
                )
            if due is None or pool.next_slot < due.next_slot:
                due = pool
    return due


def _act_time(bank, rank: RankState, bg: int) -> int:
    """Allocation-free form of ``min_cycle_for`` for an ACT."""
    if bank.open_row is not None:
        return NEVER
    t = bank.next_act
    x = rank.next_act
    if x > t:
        t = x
    x = rank.next_act_bg[bg]
    if x > t:
        t = x
    x = rank.refresh_until
    if x > t:
        t = x
    h = rank.act_history
    if len(h) == 4:
        x = h[0] + rank.tfaw
        if x > t:
            t = x
    return t


def _col_time(bank, rank: RankState, bg: int, write: bool) -> int:
    """Allocation-free form of ``min_cycle_for`` for a RD/WR to the open row."""
    tm = bank.open_timing
    t = bank.next_col
    if write:
        x, y, lat = rank.next_wr, rank.next_wr_bg[bg], tm.CWL
    else:
        x, y, lat = rank.next_rd, rank.next_rd_bg[bg], tm.CL
    if x > t:
        t = x
    if y > t:
        t = y
    bus = rank.bus
    if bus.last_rank != rank.rank_id and bus.last_rank >= 0:
        x = bus.last_end + tm.tRTRS - lat
        if x > t:
            t = x
    return t


class MemoryController:
    """Scheduler and device state for one channel."""

    def __init__(self, channel: int, table: RowModeTable,
                 timings: dict[RowMode, CycleTimings],
                 config: SchedulerConfig | None = None,
                 pools: list[list[RefreshPool]] | None = None,
                 bus_mhz: float | None = None, log: bool = False):
        topo = table.topology
        self.channel = channel
        self.topology = topo
        self.table = table
        self.timings = timings
        self.config = config or SchedulerConfig()
        bus_mhz = bus_mhz or topo.bus_mhz
        self.timeout_cycles = ns_to_cycles(self.config.row_timeout_ns, bus_mhz)
        self.cap = self.config.cap
        self.depth = self.config.queue_depth
        self.write_high = self.config.write_high * self.depth
        self.write_low = self.config.write_low * self.depth
        bus = DataBus()
        self.ranks = [RankState(topo.bankgroups_per_rank, topo.banks_per_bankgroup, r, bus)
                      for r in range(topo.ranks_per_channel)]
        self.bpr = topo.banks_per_rank
        self.banks = [b for rank in self.ranks for b in rank.banks]
        nb = len(self.banks)
        self.bank_base = table.bank_index(channel, 0, 0, 0)
        self.pools = pools if pools is not None else [[] for _ in self.ranks]
        self.reads: list[list[MemRequest]] = [[] for _ in range(nb)]
        self.writes: list[list[MemRequest]] = [[] for _ in range(nb)]
        self.row_refs: list[dict[int, int]] = [{} for _ in range(nb)]
        self.n_reads = 0
        self.n_writes = 0
        self.write_mode = False
        self.inflight: list = []
        self.next_cycle = 0
        self.log: list[DramCommand] | None = [] if log else None
        self.last_command: DramCommand | None = None
        self._seq = 0
        self._wake = NEVER
        self.counts = {k: 0 for k in CommandKind}
        self.row_hits = self.row_misses = self.row_conflicts = 0
        self.read_latency_sum = 0
        self.reads_done = 0
        self.writes_done = 0
        # per-bank open-row mode lookup is hot, cache the numpy table rows
        self._modes = table.modes
        self._gshift = table.group_shift
        self._ref_due = self._next_ref_slot()

    def _next_ref_slot(self) -> int:
        return min((p.next_slot for pools in self.pools for p in pools), default=NEVER)

    # -- queues -----------------------------------------------------------

    def bank_index(self, coord: DramCoord) -> int:
        return (coord.rank * self.bpr + coord.bankgroup * self.ranks[0].banks_per_group
                + coord.bank)

    def enqueue(self, req: MemRequest, cycle: int) -> bool:
        """Queue ``req``; False is back-pressure (its queue is full)."""
        write = req.kind is RequestKind.WRITE
        if (self.n_writes if write else self.n_reads) >= self.depth:
            return False
        b = self.bank_index(req.coord)
        req.bank_index = b
        req.arrival_cycle = cycle
        req.seq = self._seq
        self._seq += 1
        if write:
            self.writes[b].append(req)
            self.n_writes += 1
        else:
            self.reads[b].append(req)
            self.n_reads += 1
        refs = self.row_refs[b]
        row = req.coord.row
        refs[row] = refs.get(row, 0) + 1
        if cycle < self.next_cycle:
            self.next_cycle = cycle
        return True

    def can_accept(self, kind: RequestKind) -> bool:
        if kind is RequestKind.WRITE:
            return self.n_writes < self.depth
        return self.n_reads < self.depth

    @property
    def occupancy(self) -> int:
        return self.n_reads + self.n_writes

    def busy(self) -> bool:
        return bool(self.n_reads or self.n_writes or self.inflight)

    # -- scheduling -------------------------------------------------------

    def _coord(self, b: int, row: int, column: int = 0) -> DramCoord:
        rank, rest = divmod(b, self.bpr)
        bg, bk = divmod(rest, self.ranks[0].banks_per_group)
        return DramCoord(self.channel, rank, bg, bk, row, column, 0)

    def _row_mode(self, b: int, row: int) -> RowMode:
        return RowMode(int(self._modes[self.bank_base + b, row >> self._gshift]))

    def _update_write_mode(self):
        if self.write_mode:
            if self.n_writes == 0 or (self.n_writes <= self.write_low and self.n_reads > 0):
                self.write_mode = False
        elif self.n_writes and (self.n_writes >= self.write_high or self.n_reads == 0):
            self.write_mode = True

    def schedule(self, cycle: int):
        """Pick the command to issue at ``cycle``.

        Returns ``(command, request, pool)`` or None.  Priority: due
        refresh (with precharges to drain the rank), oldest legal row hit
        unless its bank exhausted the hit cap while an older request
        waits, oldest request whose next command is legal, then
        precharges of rows left idle past the timeout.
        """
        wake = NEVER
        blocked = None
        if cycle < self._ref_due:
            wake = self._ref_due
        for r, pools in enumerate(self.pools if cycle >= self._ref_due else ()):
            if not pools:
                continue
            pool = refresh_tick(pools, cycle)
            if pool is None:
                for p in pools:
                    if p.next_slot < wake:
                        wake = p.next_slot
                continue
            rank = self.ranks[r]
            ref = DramCommand(REF, self._coord(r * self.bpr, 0), cycle, pool.mode,
                              pool.current_bin)
            t = min_cycle_for(rank.banks[0], rank, ref)
            if t <= cycle:
                return ref, None, pool
            if t < NEVER:
                wake = min(wake, t)
            else:
                for i, bank in enumerate(rank.banks):
                    if bank.open_row is None:
                        continue
                    if bank.next_pre <= cycle:
                        b = r * self.bpr + i
                        return (DramCommand(PRE, self._coord(b, bank.open_row), cycle,
                                            bank.open_mode), None, None)
                    wake = min(wake, bank.next_pre)
            if blocked is None:
                blocked = set()
            blocked.add(r)

        self._update_write_mode()
        write = self.write_mode
        queues = self.writes if write else self.reads
        cap = self.cap
        bpr = self.bpr
        banks = self.banks
        ranks = self.ranks
        nbg = self.ranks[0].banks_per_group
        row_refs = self.row_refs
        hits = []
        others = []
        for b, reqs in enumerate(queues):
            if not reqs:
                continue
            if blocked is not None and b // bpr in blocked:
                continue
            oldest = reqs[0]
            row = banks[b].open_row
            if row is not None and row_refs[b].get(row):
                hit = None
                for q in reqs:
                    if q.coord.row == row:
                        hit = q
                        break
                # an uncapped pending hit also keeps its row from being precharged
                if hit is not None and (banks[b].streak < cap or hit is oldest):
                    hits.append((hit.seq, b, hit))
                    continue
            others.append((oldest.seq, b, oldest))

        if hits:
            hits.sort()
            col_kind = WR if write else RD
            for _, b, hit in hits:
                bank = banks[b]
                t = _col_time(bank, ranks[b // bpr], (b % bpr) // nbg, write)
                if t <= cycle:
                    return DramCommand(col_kind, hit.coord, cycle, bank.open_mode), hit, None
                if t < wake:
                    wake = t
        if others:
            others.sort()
            for _, b, req in others:
                bank = banks[b]
                if bank.open_row is not None:
                    t = bank.next_pre
                    if t <= cycle:
                        return (DramCommand(PRE, self._coord(b, bank.open_row), cycle,
                                            bank.open_mode), req, None)
                else:
                    t = _act_time(bank, ranks[b // bpr], (b % bpr) // nbg)
                    if t <= cycle:
                        mode = self._row_mode(b, req.coord.row)
                        return DramCommand(ACT, req.coord, cycle, mode), req, None
                if t < wake:
                    wake = t

        timeout = self.timeout_cycles
        for b, bank in enumerate(banks):
            row = bank.open_row
            if row is None or self.row_refs[b].get(row):
                continue
            if blocked is not None and b // bpr in blocked:
                continue
            t = max(bank.last_access + timeout, bank.next_pre)
            if t <= cycle:
                return DramCommand(PRE, self._coord(b, row), cycle, bank.open_mode), None, None
            if t < wake:
                wake = t
        self._wake = wake
        return None

    def _issue(self, cmd: DramCommand, req: MemRequest | None, pool: RefreshPool | None,
               cycle: int):
        kind = cmd.kind
        if kind is REF:
            rank = self.ranks[cmd.coord.rank]
            tm = self.timings[pool.mode]._replace(tRFC=pool.trfc_cycles)
            issue(rank.banks[0], rank, cmd, cycle, tm)
            pool.mark_issued(cycle)
            self._ref_due = self._next_ref_slot()
        else:
            b = self.bank_index(cmd.coord)
            bank = self.banks[b]
            rank = self.ranks[cmd.coord.rank]
            if kind is ACT:
                issue(bank, rank, cmd, cycle, self.timings[cmd.mode])
                req.needed_act = True
            elif kind is PRE:
                issue(bank, rank, cmd, cycle, bank.open_timing)
                if req is not None:
                    req.needed_pre = True
            else:
                tm = bank.open_timing
                issue(bank, rank, cmd, cycle, tm)
                self._retire(req, b)
                if kind is RD:
                    done = cycle + tm.CL + tm.tBL
                else:
                    done = cycle + tm.CWL + tm.tBL
                heapq.heappush(self.inflight, (done, req.seq, req))
                if req.needed_pre:
                    req.outcome = "conflict"
                    self.row_conflicts += 1
                elif req.needed_act:
                    req.outcome = "miss"
                    self.row_misses += 1
                else:
                    req.outcome = "hit"
                    self.row_hits += 1
        self.counts[kind] += 1
        if self.log is not None:
            self.log.append(cmd)
        self.last_command = cmd

    def _retire(self, req: MemRequest, b: int):
        if req.kind is RequestKind.WRITE:
            self.writes[b].remove(req)
            self.n_writes -= 1
        else:
            self.reads[b].remove(req)
            self.n_reads -= 1
        refs = self.row_refs[b]
        row = req.coord.row
        n = refs[row] - 1
        if n:
            refs[row] = n
        else:
            del refs[row]

    def complete(self, req: MemRequest, cycle: int) -> MemRequest:
        """Mark ``req`` finished at ``cycle`` and update statistics."""
        req.completion_cycle = cycle
        if req.kind is RequestKind.READ:
            self.reads_done += 1
            self.read_latency_sum += cycle - req.arrival_cycle
        else:
            self.writes_done += 1
        return req

    def tick(self, cycle: int) -> list[MemRequest]:
        """Advance to ``cycle``: retire finished requests, issue at most one command."""
        done = []
        inflight = self.inflight
        while inflight and inflight[0][0] <= cycle:
            c, _, req = heapq.heappop(inflight)
            done.append(self.complete(req, c))
        choice = self.schedule(cycle)
        if choice is not None:
            cmd, req, pool = choice
            self._issue(cmd, req, pool, cycle)
            self.next_cycle = cycle + 1
        else:
            self.last_command = None
            nxt = self._wake
            if inflight and inflight[0][0] < nxt:
                nxt = inflight[0][0]
            self.next_cycle = max(nxt, cycle + 1)
        return done

    def check_refresh(self, cycle: int):
        """Raise if any pool has a bin past its window at ``cycle``."""
        for pools in self.pools:
            for pool in pools:
                if pool.due(cycle) and cycle > pool.deadline():
                    raise RefreshMissed(f"{pool.mode.short} bin {pool.current_bin} overdue")

    def open_banks(self) -> int:
        return sum(b.open_row is not None for b in self.banks)
