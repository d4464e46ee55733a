"""Per-bank command legality and state transitions.

Each state keeps, for every command kind, the earliest cycle at which the
constraints created by already-issued commands are satisfied.  Issuing a
command pushes those horizons forward; checking a command is a handful of
comparisons.
"""

from __future__ import annotations

import enum
from collections import deque
from dataclasses import dataclass, field
from typing import NamedTuple

from .addrmap import DramCoord
from .timing import CycleTimings, RowMode

NEVER = 1 << 62


class CommandKind(enum.IntEnum):
    ACT = 0
    PRE = 1
    RD = 2
    WR = 3
    REF = 4


class Phase(enum.IntEnum):
    IDLE = 0
    ACTIVATING = 1
    ACTIVE = 2
    PRECHARGING = 3
    REFRESHING = 4


class DramCommand(NamedTuple):
    kind: CommandKind
    coord: DramCoord
    cycle: int = 0
    mode: RowMode = RowMode.MAX_CAPACITY
    bin: int = -1  # refresh bin, REF only


class TimingViolation(RuntimeError):
    """A command was issued before its constraints were met."""


@dataclass(slots=True)
class BankState:
    open_row: int | None = None
    phase: Phase = Phase.IDLE
    phase_until: int = 0
    open_mode: RowMode = RowMode.MAX_CAPACITY
    open_timing: CycleTimings | None = None
    last_cmd_cycle: dict = field(default_factory=dict)
    next_act: int = 0
    next_pre: int = NEVER
    next_col: int = NEVER
    # scheduler bookkeeping
    streak: int = 0
    last_access: int = 0

    def phase_at(self, cycle: int) -> Phase:
        """Phase after time-driven transitions up to ``cycle`` settle."""
        if cycle < self.phase_until:
            return self.phase
        if self.phase is Phase.ACTIVATING:
            return Phase.ACTIVE
        if self.phase in (Phase.PRECHARGING, Phase.REFRESHING):
            return Phase.IDLE
        return self.phase


class DataBus:
    """Channel data bus shared by the ranks (rank-to-rank switching)."""

    __slots__ = ("last_end", "last_rank")

    def __init__(self):
        self.last_end = -NEVER
        self.last_rank = -1


class RankState:
    """Banks of one rank plus the rank-wide constraint horizons."""

    def __init__(self, bankgroups: int, banks_per_group: int, rank_id: int = 0,
                 bus: DataBus | None = None):
        self.rank_id = rank_id
        self.bankgroups = bankgroups
        self.banks_per_group = banks_per_group
        self.banks = [BankState() for _ in range(bankgroups * banks_per_group)]
        self.bus = bus if bus is not None else DataBus()
        self.act_history: deque[int] = deque(maxlen=4)
        self.next_act = 0                       # tRRD_S
        self.next_act_bg = [0] * bankgroups     # tRRD_L
        self.next_rd = 0
        self.next_wr = 0
        self.next_rd_bg = [0] * bankgroups
        self.next_wr_bg = [0] * bankgroups
        self.next_ref = 0
        self.refresh_until = 0
        self.tfaw = 0  # set from timings on first ACT

    def bank(self, coord: DramCoord) -> BankState:
        return self.banks[coord.bankgroup * self.banks_per_group + coord.bank]

    def all_closed(self) -> bool:
        return all(b.open_row is None for b in self.banks)


def min_cycle_for(bank: BankState, rank: RankState, cmd: DramCommand) -> int:
    """Smallest cycle at which ``cmd`` becomes legal, or ``NEVER``.

    ``NEVER`` means other commands must be issued first (for example a
    column command to a closed bank).
    """
    kind = cmd.kind
    if kind is CommandKind.ACT:
        if bank.open_row is not None:
            return NEVER
        t = max(bank.next_act, rank.next_act, rank.next_act_bg[cmd.coord.bankgroup],
                rank.refresh_until)
        if len(rank.act_history) == 4:
            t = max(t, rank.act_history[0] + rank.tfaw)
        return t
    if kind is CommandKind.PRE:
        if bank.open_row is None:
            return NEVER
        return bank.next_pre
    if kind is CommandKind.RD or kind is CommandKind.WR:
        if bank.open_row is None or bank.open_row != cmd.coord.row:
            return NEVER
        tm = bank.open_timing
        g = cmd.coord.bankgroup
        if kind is CommandKind.RD:
            t = max(bank.next_col, rank.next_rd, rank.next_rd_bg[g])
            lat = tm.CL
        else:
            t = max(bank.next_col, rank.next_wr, rank.next_wr_bg[g])
            lat = tm.CWL
        bus = rank.bus
        if bus.last_rank != rank.rank_id and bus.last_rank >= 0:
            t = max(t, bus.last_end + tm.tRTRS - lat)
        return t
    if kind is CommandKind.REF:
        if not rank.all_closed():
            return NEVER
        return max(rank.next_ref, rank.refresh_until,
                   max(b.next_act for b in rank.banks))
    raise ValueError(f"unknown command {kind!r}")


def can_issue(bank: BankState, rank: RankState, cmd: DramCommand, cycle: int) -> bool:
    return min_cycle_for(bank, rank, cmd) <= cycle


def issue(bank: BankState, rank: RankState, cmd: DramCommand, cycle: int,
          timing: CycleTimings) -> BankState:
    """Apply ``cmd`` at ``cycle`` and return the (mutated) bank state.

    ``timing`` is the parameter set of the row being activated (ACT) or
    of the refresh pool (REF); other commands use the timing captured
    when the row was opened.
    """
    if cycle < min_cycle_for(bank, rank, cmd):
        raise TimingViolation(
            f"{cmd.kind.name} to {tuple(cmd.coord)} at cycle {cycle} violates timing "
            f"(phase {bank.phase_at(cycle).name}, open row {bank.open_row})"
        )
    kind = cmd.kind
    g = cmd.coord.bankgroup
    bank.last_cmd_cycle[kind] = cycle
    if kind is CommandKind.ACT:
        tm = timing
        bank.open_row = cmd.coord.row
        bank.open_mode = cmd.mode
        bank.open_timing = tm
        bank.phase = Phase.ACTIVATING
        bank.phase_until = cycle + tm.tRCD
        bank.next_col = cycle + tm.tRCD
        bank.next_pre = cycle + tm.tRAS
        bank.next_act = NEVER
        bank.streak = 0
        bank.last_access = cycle
        rank.act_history.append(cycle)
        rank.tfaw = tm.tFAW
        rank.next_act = max(rank.next_act, cycle + tm.tRRD_S)
        rank.next_act_bg[g] = max(rank.next_act_bg[g], cycle + tm.tRRD_L)
    elif kind is CommandKind.PRE:
        tm = bank.open_timing
        bank.open_row = None
        bank.open_timing = None
        bank.phase = Phase.PRECHARGING
        bank.phase_until = cycle + tm.tRP
        bank.next_act = cycle + tm.tRP
        bank.next_pre = NEVER
        bank.next_col = NEVER
        rank.next_ref = max(rank.next_ref, cycle + tm.tRP)
    elif kind is CommandKind.RD:
        tm = bank.open_timing
        bank.next_pre = max(bank.next_pre, cycle + tm.tRTP)
        bank.streak += 1
        bank.last_access = cycle
        rank.next_rd = max(rank.next_rd, cycle + tm.tCCD_S)
        rank.next_rd_bg[g] = max(rank.next_rd_bg[g], cycle + tm.tCCD_L)
        rank.next_wr = max(rank.next_wr, cycle + tm.rd_to_wr)
        rank.bus.last_end = cycle + tm.CL + tm.tBL
        rank.bus.last_rank = rank.rank_id
    elif kind is CommandKind.WR:
        tm = bank.open_timing
        bank.next_pre = max(bank.next_pre, cycle + tm.wr_to_pre)
        bank.streak += 1
        bank.last_access = cycle
        rank.next_wr = max(rank.next_wr, cycle + tm.tCCD_S)
        rank.next_wr_bg[g] = max(rank.next_wr_bg[g], cycle + tm.tCCD_L)
        data_end = cycle + tm.CWL + tm.tBL
        rank.next_rd = max(rank.next_rd, data_end + tm.tWTR_S)
        rank.next_rd_bg[g] = max(rank.next_rd_bg[g], data_end + tm.tWTR_L)
        rank.bus.last_end = data_end
        rank.bus.last_rank = rank.rank_id
    elif kind is CommandKind.REF:
        until = cycle + timing.tRFC
        rank.refresh_until = until
        rank.next_ref = until
        for b in rank.banks:
            b.phase = Phase.REFRESHING
            b.phase_until = until
            b.next_act = until
            b.last_cmd_cycle[kind] = cycle
    return bank
