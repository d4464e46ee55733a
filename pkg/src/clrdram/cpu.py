"""Trace-driven core front-end and shared last-level cache.

Cores walk their trace in order.  Every core cycle a core first inserts
up to ``width`` instructions into its window and then retires up to
``width`` ready instructions from the window head.  Non-memory
instructions are ready at once, LLC hits after the LLC latency, and LLC
misses when the memory controller returns the line.
"""

from __future__ import annotations

import math
from collections import deque
from typing import Callable, Protocol, Sequence

from .controller import MemRequest, RequestKind
from .workload import LINE, TraceRecord

NEVER = 1 << 62
PENDING = -1


class LLC:
    """Set-associative LRU cache shared by all cores (tags only)."""

    def __init__(self, size_bytes: int = 8 << 20, ways: int = 8, line: int = LINE,
                 n_cores: int = 1):
        self.ways = ways
        self.line = line
        self.n_sets = size_bytes // (ways * line)
        if self.n_sets < 1:
            raise ValueError("cache smaller than one set")
        self.sets: list[list[int]] = [[] for _ in range(self.n_sets)]
        self.hits = [0] * n_cores
        self.misses = [0] * n_cores

    def lookup(self, line: int, core: int = 0) -> bool:
        s = self.sets[line % self.n_sets]
        if line in s:
            if s[-1] != line:
                s.remove(line)
                s.append(line)
            self.hits[core] += 1
            return True
        self.misses[core] += 1
        return False

    def fill(self, line: int) -> None:
        s = self.sets[line % self.n_sets]
        if line in s:
            return
        if len(s) >= self.ways:
            del s[0]
        s.append(line)

    @property
    def lookups(self) -> int:
        return sum(self.hits) + sum(self.misses)


class MemoryPort(Protocol):
    def send(self, req: MemRequest, core_cycle: int) -> bool: ...


class Core:
    def __init__(self, core_id: int, trace: Sequence[TraceRecord], llc: LLC, *,
                 width: int = 4, window: int = 128, mshrs: int = 8, llc_latency: int = 20,
                 warmup: int = 0, quota: int | None = None, replay: bool = False,
                 translate: Callable[[int], int] | None = None):
        if not trace:
            raise ValueError("empty trace")
        self.core_id = core_id
        self.records = trace
        self.llc = llc
        self.width = width
        self.window_size = window
        self.n_mshrs = mshrs
        self.llc_latency = llc_latency
        self.warmup = warmup
        self.quota = quota
        self.replay = replay
        self.translate = translate or (lambda a: a)

        self.cursor = 0
        self.bubbles_left = trace[0].bubbles
        self.window: deque[list[int]] = deque()
        self.occupancy = 0
        self.mshr: dict[int, list[list[int]]] = {}
        self.retired = 0
        self.cycle = 0
        self.trace_done = False
        self.finished = False
        self.finish_cycle: int | None = None
        self.stalled = False
        self.wake = 0
        self._looked_up: tuple[int, bool] | None = None
        self.warm_mark: tuple[int, int] | None = (0, 0) if warmup == 0 else None
        self.quota_mark: tuple[int, int] | None = None
        self.requests = 0
        self.stall_cycles = 0

    @property
    def in_flight(self) -> int:
        return len(self.mshr)

    # -- one core cycle ---------------------------------------------------

    def tick(self, cycle: int, memory: MemoryPort) -> list[MemRequest]:
        """Insert, then retire, for core cycle ``cycle``.

        Returns the memory requests the memory system accepted.
        """
        self.cycle = cycle
        sent: list[MemRequest] = []
        inserted = self._insert(cycle, memory, sent)
        retired = self._retire(cycle)
        if not (inserted or retired):
            self.stalled = True
            head = self.window[0] if self.window else None
            self.wake = head[1] if head is not None and head[1] > cycle else NEVER
            if self.trace_done and not self.window:
                self._finish(cycle)
        return sent

    def _insert(self, cycle: int, memory: MemoryPort, sent: list) -> int:
        budget = self.width
        w = self.window
        room = self.window_size - self.occupancy
        n_in = 0
        records = self.records
        while budget and room and not self.trace_done:
            if self.bubbles_left:
                k = min(self.bubbles_left, budget, room)
                if w and w[-1][1] == cycle:
                    w[-1][0] += k
                else:
                    w.append([k, cycle])
                self.bubbles_left -= k
                budget -= k
                room -= k
                n_in += k
                continue
            rec = records[self.cursor]
            addr = self.translate(rec.addr)
            line = addr // LINE
            if self._looked_up is not None and self._looked_up[0] == self.cursor:
                hit = self._looked_up[1]
            else:
                hit = self.llc.lookup(line, self.core_id)
                self._looked_up = (self.cursor, hit)
            if rec.write:
                if not hit:
                    req = MemRequest(RequestKind.WRITE, line * LINE, core_id=self.core_id)
                    if not memory.send(req, cycle):
                        break
                    sent.append(req)
                entry = [1, cycle]
            elif hit:
                entry = [1, cycle + self.llc_latency]
            else:
                waiters = self.mshr.get(line)
                entry = [1, PENDING]
                if waiters is not None:
                    waiters.append(entry)
                else:
                    if len(self.mshr) >= self.n_mshrs:
                        break
                    req = MemRequest(RequestKind.READ, line * LINE, core_id=self.core_id,
                                     tag=line)
                    if not memory.send(req, cycle):
                        break
                    sent.append(req)
                    self.mshr[line] = [entry]
                    self.requests += 1
            if w and entry[1] == cycle and w[-1][1] == cycle:
                w[-1][0] += 1
            else:
                w.append(entry)
            budget -= 1
            room -= 1
            n_in += 1
            self._advance()
        self.occupancy += n_in
        return n_in

    def _advance(self):
        self._looked_up = None
        self.cursor += 1
        if self.cursor == len(self.records):
            if self.replay:
                self.cursor = 0
            else:
                self.trace_done = True
                self.bubbles_left = 0
                return
        self.bubbles_left = self.records[self.cursor].bubbles

    def _retire(self, cycle: int) -> int:
        budget = self.width
        w = self.window
        done = 0
        while budget and w:
            e = w[0]
            ready = e[1]
            if ready == PENDING or ready > cycle:
                break
            n = e[0]
            if n <= budget:
                w.popleft()
                budget -= n
                done += n
            else:
                e[0] = n - budget
                done += budget
                budget = 0
        if done:
            self.occupancy -= done
            self.retired += done
            self._milestones(cycle)
            if self.trace_done and not w:
                self._finish(cycle)
        return done

    def _milestones(self, cycle: int):
        if self.warm_mark is None and self.retired >= self.warmup:
            self.warm_mark = (self.retired, cycle + 1)
        if (self.quota is not None and self.quota_mark is None and self.warm_mark is not None
                and self.retired - self.warm_mark[0] >= self.quota):
            self.quota_mark = (self.retired, cycle + 1)
            self.finished = True
            self.finish_cycle = cycle

    def _finish(self, cycle: int):
        if self.finish_cycle is None:
            self.finish_cycle = cycle
        self.finished = True

    def on_complete(self, line: int, core_cycle: int):
        """Data for ``line`` arrives at ``core_cycle``."""
        waiters = self.mshr.pop(line, None)
        if waiters is None:
            return
        for entry in waiters:
            entry[1] = core_cycle
        self.llc.fill(line)
        self.stalled = False

    def notify(self):
        """Something in the memory system changed; re-evaluate next cycle."""
        self.stalled = False

    # -- results ----------------------------------------------------------

    @property
    def done(self) -> bool:
        return self.finished and (self.quota is not None or (self.trace_done and not self.window))

    def ipc(self) -> float:
        return ipc(self)


def ipc(core: Core) -> float:
    """Retired instructions per core cycle over the measured region."""
    warm = core.warm_mark or (0, 0)
    if core.quota_mark is not None:
        end_ret, end_cyc = core.quota_mark
    else:
        end_ret = core.retired
        end_cyc = (core.finish_cycle if core.finish_cycle is not None else core.cycle) + 1
    cycles = end_cyc - warm[1]
    return (end_ret - warm[0]) / cycles if cycles > 0 else 0.0


def weighted_speedup(shared_ipcs: Sequence[float], alone_ipcs: Sequence[float]) -> float:
    if len(shared_ipcs) != len(alone_ipcs):
        raise ValueError("need one alone IPC per core")
    total = 0.0
    for s, a in zip(shared_ipcs, alone_ipcs):
        if a <= 0:
            raise ValueError("alone IPC must be positive")
        total += s / a
    return total


def gmean(values: Sequence[float]) -> float:
    if not values:
        raise ValueError("empty sequence")
    if any(v <= 0 for v in values):
        raise ValueError("geometric mean needs positive values")
    return math.exp(sum(math.log(v) for v in values) / len(values))
