"""Row-mode control: isolation signals, per-row mode table, capacity."""

from __future__ import annotations

import enum
from typing import Iterable, NamedTuple

import numpy as np

from .addrmap import AddressMap
from .bank import BankState
from .timing import DramTopology, RowMode


class Parity(enum.IntEnum):
    EVEN = 0
    ODD = 1


class IsoAssignment(NamedTuple):
    iso1: bool
    iso2: bool
    subarray_parity: Parity


def iso_signals(parity: Parity, mode: RowMode) -> IsoAssignment:
    """ISO1/ISO2 levels that put a row of the given subarray into ``mode``.

    Even subarrays receive the complemented assignment, so in
    high-performance mode both signals drop there while both rise in odd
    subarrays; either way every mode-select transistor of the subarray
    conducts and the neighbours' bitlines are cut off.
    """
    parity = Parity(parity)
    if mode is RowMode.MAX_CAPACITY:
        return IsoAssignment(True, False, parity)
    level = parity is Parity.ODD
    return IsoAssignment(level, level, parity)


def subarray_parity(row: int, rows_per_subarray: int) -> Parity:
    return Parity((row // rows_per_subarray) & 1)


class ModeSwitchError(RuntimeError):
    """A reconfiguration group was switched while one of its rows was open."""


class GranularityError(ValueError):
    pass


def reconfig_granularity(amap: AddressMap, page_size: int | None = None) -> tuple[int, int]:
    """(pages made low-latency, rows switched) for one low-latency page request."""
    if page_size is not None:
        amap = amap.with_page_size(page_size)
    if not amap.is_bijective():
        raise GranularityError("address map is not bijective")
    x = amap.page_column_bits
    y = amap.offset_row_bits
    if x == 0:
        raise GranularityError(
            "a page fills a whole row, so a high-performance row holds half a page; "
            "no page-granular placement is possible with this map"
        )
    return (1 << x) // 2, 1 << y


class RowModeTable:
    """Mode of every reconfiguration group of every bank.

    Groups are ``2**Y`` consecutive rows of one bank, where ``Y`` is the
    number of page-offset bits the address map feeds into the row index.
    Banks are indexed globally: channel, then rank, then bank-in-rank.
    """

    def __init__(self, topology: DramTopology, group_rows: int = 1):
        if group_rows < 1 or group_rows & (group_rows - 1) or group_rows > topology.rows_per_bank:
            raise ValueError("group size must be a power of two no larger than a bank")
        self.topology = topology
        self.group_rows = group_rows
        self.group_shift = group_rows.bit_length() - 1
        self.groups_per_bank = topology.rows_per_bank // group_rows
        self.modes = np.zeros((topology.total_banks, self.groups_per_bank), dtype=np.int8)
        self.hp_rows = 0

    @classmethod
    def for_map(cls, amap: AddressMap) -> "RowModeTable":
        return cls(amap.topology, 1 << amap.offset_row_bits)

    @property
    def total_rows(self) -> int:
        return self.topology.total_rows

    @property
    def n_groups(self) -> int:
        return self.modes.size

    def bank_index(self, channel: int, rank: int, bankgroup: int, bank: int) -> int:
        t = self.topology
        return ((channel * t.ranks_per_channel + rank) * t.bankgroups_per_rank
                + bankgroup) * t.banks_per_bankgroup + bank

    def group_of(self, bank_index: int, row: int) -> int:
        return bank_index * self.groups_per_bank + (row >> self.group_shift)

    def mode(self, bank_index: int, row: int) -> RowMode:
        return RowMode(int(self.modes[bank_index, row >> self.group_shift]))

    def group_mode(self, group_id: int) -> RowMode:
        b, g = divmod(group_id, self.groups_per_bank)
        return RowMode(int(self.modes[b, g]))

    def capacity_bytes(self) -> float:
        total = self.topology.capacity_bytes
        return total - (self.hp_rows / self.total_rows) * total / 2

    def capacity_fraction(self) -> float:
        return 1.0 - self.hp_rows / self.total_rows / 2

    def set_group_mode(self, group_id: int, mode: RowMode,
                       bank_states: Iterable[BankState] | dict | None = None) -> "RowModeTable":
        """Switch one group; every row of it must be closed.

        ``bank_states`` maps global bank index to :class:`BankState` (a
        sequence indexed the same way also works).
        """
        b, g = divmod(group_id, self.groups_per_bank)
        if bank_states is not None:
            state = bank_states[b]
            if state.open_row is not None and state.open_row >> self.group_shift == g:
                raise ModeSwitchError(
                    f"row {state.open_row} of bank {b} is open; precharge before switching"
                )
        old = int(self.modes[b, g])
        if old != int(mode):
            self.modes[b, g] = int(mode)
            delta = self.group_rows if mode is RowMode.HIGH_PERFORMANCE else -self.group_rows
            self.hp_rows += delta
        return self

    def set_fraction(self, fraction: float) -> "RowModeTable":
        """Put the lowest ``fraction`` of groups of every bank in HP mode."""
        if not 0.0 <= fraction <= 1.0:
            raise ValueError("fraction must lie in [0, 1]")
        n = hp_groups_per_bank(self.groups_per_bank, fraction)
        self.modes[:] = RowMode.MAX_CAPACITY
        self.modes[:, :n] = RowMode.HIGH_PERFORMANCE
        self.hp_rows = n * self.group_rows * self.modes.shape[0]
        return self

    def hp_mask_for_rank(self, channel: int, rank: int) -> np.ndarray:
        """Boolean HP flag per row of one rank, banks in rank order."""
        t = self.topology
        first = self.bank_index(channel, rank, 0, 0)
        modes = self.modes[first:first + t.banks_per_rank]
        return np.repeat(modes == RowMode.HIGH_PERFORMANCE, self.group_rows, axis=1).ravel()

    def row_modes(self) -> np.ndarray:
        """Mode per row, shape ``(total_banks, rows_per_bank)``."""
        return np.repeat(self.modes, self.group_rows, axis=1)


def hp_groups_per_bank(groups_per_bank: int, fraction: float) -> int:
    return int(round(fraction * groups_per_bank))
